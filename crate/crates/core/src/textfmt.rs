//! Minimal `key = value` documents with optional `[section]` headers.

use crate::{Error, Result};

#[derive(Debug, Default)]
pub(crate) struct KvDoc {
    /// (section name, entries). The leading anonymous section has name "".
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc {
            sections: vec![(String::new(), Vec::new())],
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                doc.sections.push((name.trim().to_string(), Vec::new()));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            doc.sections
                .last_mut()
                .expect("at least one section")
                .1
                .push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e.as_slice())
    }
}

pub(crate) fn get<'a>(entries: &'a [(String, String)], key: &str) -> Result<&'a str> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Validation(format!("missing key `{key}`")))
}

pub(crate) fn parse_floats<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::Validation(format!(
            "`{key}` expects {N} numbers, found {}",
            parts.len()
        )));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::Validation(format!("`{key}`: `{p}` is not a number")))?;
    }
    Ok(out)
}

/// 17 significant digits, which round-trips every finite f64.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
