//! Review records, validated datasets and per-user inter-arrival sequences.
//!
//! A [`Dataset`] keeps its reviews in canonical order (timestamp, then
//! review id), so two ingests of the same records in any order are
//! indistinguishable. Both the per-user and per-restaurant indexes point
//! into that canonical vector.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum inter-arrival time in seconds. Equal timestamps are clamped up to it.
pub const EPS_TIME: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Spam,
    Genuine,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Spam => "spam",
            Label::Genuine => "genuine",
        }
    }

    pub fn is_spam(self) -> bool {
        self == Label::Spam
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spam" => Ok(Label::Spam),
            "genuine" => Ok(Label::Genuine),
            other => Err(format!(
                "unknown label `{other}` (expected spam, genuine or empty)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Review {
    pub review_id: String,
    pub user_id: String,
    pub restaurant_id: String,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub label: Option<Label>,
}

/// Immutable, validated collection of reviews with user and restaurant indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    reviews: Vec<Review>,
    by_user: BTreeMap<String, Vec<usize>>,
    by_restaurant: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Validates the records and builds both indexes. Input order is irrelevant.
    pub fn from_reviews(mut reviews: Vec<Review>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(reviews.len());
        for r in &reviews {
            if r.timestamp < 0 {
                return Err(Error::NegativeTimestamp {
                    id: r.review_id.clone(),
                    timestamp: r.timestamp,
                });
            }
            if !seen.insert(r.review_id.as_str()) {
                return Err(Error::DuplicateReviewId(r.review_id.clone()));
            }
        }
        drop(seen);

        reviews.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.review_id.cmp(&b.review_id))
        });

        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_restaurant: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in reviews.iter().enumerate() {
            by_user.entry(r.user_id.clone()).or_default().push(i);
            by_restaurant
                .entry(r.restaurant_id.clone())
                .or_default()
                .push(i);
        }
        Ok(Dataset {
            reviews,
            by_user,
            by_restaurant,
        })
    }

    pub fn empty() -> Self {
        Dataset {
            reviews: Vec::new(),
            by_user: BTreeMap::new(),
            by_restaurant: BTreeMap::new(),
        }
    }

    /// Reviews in canonical (timestamp, review_id) order.
    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    /// User id → indexes into [`Dataset::reviews`], ascending by time.
    pub fn by_user(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_user
    }

    /// Restaurant id → indexes into [`Dataset::reviews`], ascending by time.
    pub fn by_restaurant(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_restaurant
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_restaurants(&self) -> usize {
        self.by_restaurant.len()
    }

    /// Majority label per user (ties go to spam); users without any labeled
    /// review are absent.
    pub fn user_labels(&self) -> BTreeMap<String, Label> {
        self.by_user
            .iter()
            .filter_map(|(u, idx)| {
                majority_label(idx.iter().filter_map(|&i| self.reviews[i].label))
                    .map(|l| (u.clone(), l))
            })
            .collect()
    }

    /// Writes the canonical CSV dump.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "review_id",
            "user_id",
            "restaurant_id",
            "timestamp",
            "label",
        ])
        .map_err(csv_io)?;
        for r in &self.reviews {
            let ts = r.timestamp.to_string();
            wr.write_record([
                r.review_id.as_str(),
                r.user_id.as_str(),
                r.restaurant_id.as_str(),
                ts.as_str(),
                r.label.map(Label::as_str).unwrap_or(""),
            ])
            .map_err(csv_io)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes one JSON object per line, canonical order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.reviews {
            let rec = JsonRecord {
                review_id: r.review_id.clone(),
                user_id: r.user_id.clone(),
                restaurant_id: r.restaurant_id.clone(),
                timestamp: r.timestamp,
                label: r.label.map(|l| l.as_str().to_string()),
            };
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn canonical_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(File::create(path)?);
        match ReviewFormat::from_path(path) {
            ReviewFormat::Csv => self.write_csv(f),
            ReviewFormat::Jsonl => self.write_jsonl(f),
        }
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub(crate) fn majority_label(labels: impl Iterator<Item = Label>) -> Option<Label> {
    let (mut spam, mut genuine) = (0usize, 0usize);
    for l in labels {
        match l {
            Label::Spam => spam += 1,
            Label::Genuine => genuine += 1,
        }
    }
    match (spam, genuine) {
        (0, 0) => None,
        (s, g) if s >= g => Some(Label::Spam),
        _ => Some(Label::Genuine),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewFormat {
    Csv,
    Jsonl,
}

impl ReviewFormat {
    /// `.jsonl` / `.ndjson` / `.json` select JSONL, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "jsonl" || e == "ndjson" || e == "json" => ReviewFormat::Jsonl,
            _ => ReviewFormat::Csv,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    review_id: String,
    user_id: String,
    restaurant_id: String,
    timestamp: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    review_id: String,
    user_id: String,
    restaurant_id: String,
    timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn parse_label(raw: Option<&str>, line: usize) -> Result<Option<Label>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|message| Error::Parse { line, message }),
    }
}

fn require_nonempty(field: &str, value: &str, line: usize) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("missing {field}"),
        });
    }
    Ok(())
}

/// Parses CSV with a header row. Line numbers in errors are 1-based file lines.
pub fn read_reviews_csv<R: Read>(source: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let rec: CsvRecord = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        require_nonempty("review_id", &rec.review_id, line)?;
        require_nonempty("user_id", &rec.user_id, line)?;
        require_nonempty("restaurant_id", &rec.restaurant_id, line)?;
        let timestamp: i64 = rec.timestamp.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp `{}` is not an integer", rec.timestamp),
        })?;
        out.push(Review {
            review_id: rec.review_id,
            user_id: rec.user_id,
            restaurant_id: rec.restaurant_id,
            timestamp,
            label: parse_label(rec.label.as_deref(), line)?,
        });
    }
    Dataset::from_reviews(out)
}

/// Parses newline-delimited JSON objects; blank lines are skipped.
pub fn read_reviews_jsonl<R: Read>(source: R) -> Result<Dataset> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        require_nonempty("review_id", &rec.review_id, line_no)?;
        require_nonempty("user_id", &rec.user_id, line_no)?;
        require_nonempty("restaurant_id", &rec.restaurant_id, line_no)?;
        out.push(Review {
            review_id: rec.review_id,
            user_id: rec.user_id,
            restaurant_id: rec.restaurant_id,
            timestamp: rec.timestamp,
            label: parse_label(rec.label.as_deref(), line_no)?,
        });
    }
    Dataset::from_reviews(out)
}

/// Reads a review file, choosing the format from the extension.
pub fn ingest_reviews(path: &Path) -> Result<Dataset> {
    let f = File::open(path)?;
    match ReviewFormat::from_path(path) {
        ReviewFormat::Csv => read_reviews_csv(f),
        ReviewFormat::Jsonl => read_reviews_jsonl(f),
    }
}

/// One user's review times and the inter-arrival gaps between them.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSequence {
    pub user_id: String,
    pub timestamps: Vec<i64>,
    /// `deltas[i-1] = max(t_i - t_{i-1}, EPS_TIME)`.
    pub deltas: Vec<f64>,
    pub label: Option<Label>,
}

impl UserSequence {
    pub fn from_timestamps(
        user_id: impl Into<String>,
        timestamps: Vec<i64>,
        label: Option<Label>,
    ) -> Self {
        let deltas = timestamps
            .windows(2)
            .map(|w| ((w[1] - w[0]) as f64).max(EPS_TIME))
            .collect();
        UserSequence {
            user_id: user_id.into(),
            timestamps,
            deltas,
            label,
        }
    }

    /// Number of intervals.
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

impl AsRef<[f64]> for UserSequence {
    fn as_ref(&self) -> &[f64] {
        &self.deltas
    }
}

/// One sequence per user, ordered by user id.
pub fn build_user_sequences(ds: &Dataset) -> Vec<UserSequence> {
    ds.by_user()
        .iter()
        .map(|(user, idx)| {
            let reviews = ds.reviews();
            let ts = idx.iter().map(|&i| reviews[i].timestamp).collect();
            let label = majority_label(idx.iter().filter_map(|&i| reviews[i].label));
            UserSequence::from_timestamps(user.clone(), ts, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn review(id: &str, user: &str, rest: &str, ts: i64, label: Option<Label>) -> Review {
        Review {
            review_id: id.into(),
            user_id: user.into(),
            restaurant_id: rest.into(),
            timestamp: ts,
            label,
        }
    }

    #[test]
    fn three_records_two_users() {
        let csv = "review_id,user_id,restaurant_id,timestamp,label\n\
                   r1,u1,s1,100,spam\n\
                   r2,u2,s1,50,\n\
                   r3,u1,s2,200,genuine\n";
        let ds = read_reviews_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.n_restaurants(), 2);
        assert_eq!(ds.by_user()["u1"].len(), 2);
    }

    #[test]
    fn duplicate_id_is_named() {
        let csv = "review_id,user_id,restaurant_id,timestamp,label\nr1,u1,s1,1,\nr1,u2,s1,2,\n";
        match read_reviews_csv(csv.as_bytes()) {
            Err(Error::DuplicateReviewId(id)) => assert_eq!(id, "r1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_timestamp_rejected() {
        let csv = "review_id,user_id,restaurant_id,timestamp,label\nr1,u1,s1,-5,\n";
        assert!(matches!(
            read_reviews_csv(csv.as_bytes()),
            Err(Error::NegativeTimestamp { timestamp: -5, .. })
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let csv = "review_id,user_id,restaurant_id,timestamp,label\nr1,u1,s1,1,\nr2,u1,s1,abc,\n";
        match read_reviews_csv(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = "review_id,user_id,restaurant_id,timestamp,label\nr1,u1,s1,1,maybe\n";
        assert!(matches!(
            read_reviews_csv(bad_label.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let jsonl = "{\"review_id\":\"a\",\"user_id\":\"u\",\"restaurant_id\":\"s\",\"timestamp\":1}\n{oops\n";
        assert!(matches!(
            read_reviews_jsonl(jsonl.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn label_column_optional() {
        let csv = "review_id,user_id,restaurant_id,timestamp\nr1,u1,s1,1\n";
        let ds = read_reviews_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.reviews()[0].label, None);
    }

    #[test]
    fn shuffled_input_gives_identical_dump() {
        let a = vec![
            review("r1", "u1", "s1", 10, Some(Label::Spam)),
            review("r2", "u2", "s1", 10, None),
            review("r3", "u1", "s2", 5, Some(Label::Genuine)),
            review("r0", "u3", "s3", 10, None),
        ];
        let mut b = a.clone();
        b.reverse();
        b.swap(0, 2);
        let da = Dataset::from_reviews(a).unwrap();
        let db = Dataset::from_reviews(b).unwrap();
        assert_eq!(da.canonical_csv(), db.canonical_csv());
        assert_eq!(da, db);
        // ties on timestamp break by review id
        let ids: Vec<_> = da.reviews().iter().map(|r| r.review_id.as_str()).collect();
        assert_eq!(ids, ["r3", "r0", "r1", "r2"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = Dataset::from_reviews(vec![
            review("a", "u1", "s1", 3, Some(Label::Spam)),
            review("b", "u2", "s\"x", 4, None),
        ])
        .unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        assert_eq!(read_reviews_jsonl(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn sequences_from_timestamps() {
        let ds = Dataset::from_reviews(vec![
            review("a", "u1", "s1", 0, None),
            review("b", "u1", "s1", 720, None),
            review("c", "u1", "s2", 1440, None),
            review("d", "u2", "s1", 9, None),
            review("e", "u3", "s1", 100, None),
            review("f", "u3", "s2", 100, None),
        ])
        .unwrap();
        let seqs = build_user_sequences(&ds);
        assert_eq!(seqs.len(), 3);
        assert_eq!(seqs[0].deltas, vec![720.0, 720.0]);
        assert!(seqs[1].deltas.is_empty());
        assert_eq!(seqs[2].deltas, vec![EPS_TIME]);
        assert_eq!(EPS_TIME, 1.0);
        let total: usize = seqs.iter().map(|s| s.timestamps.len()).sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn majority_label_with_spam_tie_break() {
        use Label::*;
        assert_eq!(majority_label([Spam, Genuine].into_iter()), Some(Spam));
        assert_eq!(
            majority_label([Genuine, Genuine, Spam].into_iter()),
            Some(Genuine)
        );
        assert_eq!(majority_label(std::iter::empty()), None);
    }
}
