//! Co-bursting and co-reviewing user graphs.
//!
//! Every review is first tagged with the decoded hidden state of the interval
//! that ends at it. Two users co-burst once for every pair of their
//! active-state reviews posted to the same restaurant less than `omega`
//! seconds apart. Window queries run against a per-restaurant sorted time
//! index, so the query phase costs O(m log p) plus the size of the output.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::datamodel::{build_user_sequences, Dataset, UserSequence};
use crate::exec::Execution;
use crate::hmm::{viterbi_decode, HmmParams};
use crate::lhmm::{lhmm_classify, LhmmParams};
use crate::{Error, Result};

/// Three days.
pub const DEFAULT_OMEGA: i64 = 259_200;

#[derive(Debug, Clone, Copy)]
pub struct CoburstConfig {
    /// Window in seconds; pairs must satisfy `|t_i - t_j| < omega`.
    pub omega: i64,
    pub exec: Execution,
}

impl Default for CoburstConfig {
    fn default() -> Self {
        CoburstConfig {
            omega: DEFAULT_OMEGA,
            exec: Execution::default(),
        }
    }
}

impl CoburstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.omega <= 0 {
            return Err(Error::Config(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Chooses the HMM used to decode a user's states.
pub trait StateModel: Sync {
    fn params_for(&self, seq: &UserSequence) -> Result<HmmParams>;
}

impl StateModel for HmmParams {
    fn params_for(&self, _seq: &UserSequence) -> Result<HmmParams> {
        Ok(*self)
    }
}

/// Decodes each user with the HMM of the class the labeled model predicts.
impl StateModel for LhmmParams {
    fn params_for(&self, seq: &UserSequence) -> Result<HmmParams> {
        let c = lhmm_classify(seq, self)?;
        Ok(*self.params_for(c.predicted))
    }
}

/// A dataset plus one hidden state (0 or 1) per review.
#[derive(Debug, Clone, PartialEq)]
pub struct StateAnnotatedDataset<'a> {
    pub dataset: &'a Dataset,
    /// Indexed like [`Dataset::reviews`].
    pub states: Vec<u8>,
}

impl<'a> StateAnnotatedDataset<'a> {
    pub fn new(dataset: &'a Dataset, states: Vec<u8>) -> Result<Self> {
        if states.len() != dataset.len() {
            return Err(Error::Validation(format!(
                "{} states for {} reviews",
                states.len(),
                dataset.len()
            )));
        }
        if states.iter().any(|&s| s > 1) {
            return Err(Error::Validation("states must be 0 or 1".into()));
        }
        Ok(StateAnnotatedDataset { dataset, states })
    }

    /// Per-review states of one user in time order.
    pub fn user_states(&self, user: &str) -> Option<Vec<u8>> {
        self.dataset
            .by_user()
            .get(user)
            .map(|idx| idx.iter().map(|&i| self.states[i]).collect())
    }

    /// `review_id,user_id,restaurant_id,timestamp,state` in canonical order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "review_id,user_id,restaurant_id,timestamp,state")?;
        for (r, s) in self.dataset.reviews().iter().zip(&self.states) {
            writeln!(
                w,
                "{},{},{},{},{}",
                csv_field(&r.review_id),
                csv_field(&r.user_id),
                csv_field(&r.restaurant_id),
                r.timestamp,
                s
            )?;
        }
        Ok(())
    }
}

pub(crate) fn csv_field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

/// Maps decoded interval states onto reviews: review `i >= 1` takes the state
/// of the interval ending at it, the first review takes the first interval's
/// state, and a lone review gets state 0.
pub fn review_states_from_path(path: &[u8]) -> Vec<u8> {
    match path.first() {
        None => vec![0],
        Some(&first) => std::iter::once(first).chain(path.iter().copied()).collect(),
    }
}

/// Runs Viterbi per user and stores the state of every review.
pub fn annotate_states<'a, M: StateModel>(
    ds: &'a Dataset,
    model: &M,
    exec: Execution,
) -> Result<StateAnnotatedDataset<'a>> {
    let seqs = build_user_sequences(ds);
    let per_user: Vec<Result<Vec<u8>>> = exec.map(&seqs, |seq| {
        if seq.deltas.is_empty() {
            return Ok(vec![0]);
        }
        let params = model.params_for(seq)?;
        Ok(review_states_from_path(
            &viterbi_decode(&seq.deltas, &params)?.states,
        ))
    });
    let mut states = vec![0u8; ds.len()];
    for ((_, idx), user_states) in ds.by_user().iter().zip(per_user) {
        for (&i, s) in idx.iter().zip(user_states?) {
            states[i] = s;
        }
    }
    StateAnnotatedDataset::new(ds, states)
}

/// Sorted timestamps of one restaurant's reviews.
#[derive(Debug, Clone)]
pub struct TimeIndex {
    timestamps: Vec<i64>,
    reviews: Vec<usize>,
}

impl TimeIndex {
    /// `review_indices` must already be in timestamp order.
    pub fn new(ds: &Dataset, review_indices: &[usize]) -> Self {
        let timestamps: Vec<i64> = review_indices
            .iter()
            .map(|&i| ds.reviews()[i].timestamp)
            .collect();
        debug_assert!(timestamps.windows(2).all(|w| w[0] <= w[1]));
        TimeIndex {
            timestamps,
            reviews: review_indices.to_vec(),
        }
    }

    /// Reviews with `t - omega < timestamp < t + omega`; O(log p) to locate.
    pub fn query(&self, t: i64, omega: i64) -> &[usize] {
        let lo = self.timestamps.partition_point(|&x| x <= t - omega);
        let hi = self.timestamps.partition_point(|&x| x < t + omega);
        &self.reviews[lo..hi.max(lo)]
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }
}

/// Sparse symmetric user graph with integer weights, stored as its upper triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoburstGraph {
    /// Sorted user ids.
    pub nodes: Vec<String>,
    /// `(a, b, weight)` with `a < b` indexing `nodes`, sorted, weights >= 1.
    pub edges: Vec<(usize, usize, u64)>,
}

impl CoburstGraph {
    fn from_counts(
        nodes: Vec<String>,
        counts: impl IntoIterator<Item = ((usize, usize), u64)>,
    ) -> Self {
        let mut edges: Vec<(usize, usize, u64)> = counts
            .into_iter()
            .filter(|&(_, w)| w > 0)
            .map(|((a, b), w)| (a.min(b), a.max(b), w))
            .collect();
        edges.sort_unstable();
        CoburstGraph { nodes, edges }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Edges as user-id triples.
    pub fn edge_list(&self) -> Vec<(&str, &str, u64)> {
        self.edges
            .iter()
            .map(|&(a, b, w)| (self.nodes[a].as_str(), self.nodes[b].as_str(), w))
            .collect()
    }

    pub fn weight(&self, u: &str, v: &str) -> u64 {
        let (Ok(a), Ok(b)) = (
            self.nodes.binary_search_by(|n| n.as_str().cmp(u)),
            self.nodes.binary_search_by(|n| n.as_str().cmp(v)),
        ) else {
            return 0;
        };
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(x, y, _)| (x, y).cmp(&key))
            .map(|i| self.edges[i].2)
            .unwrap_or(0)
    }

    /// Node ids that have at least one edge.
    pub fn connected_nodes(&self) -> Vec<&str> {
        let mut seen = vec![false; self.nodes.len()];
        for &(a, b, _) in &self.edges {
            seen[a] = true;
            seen[b] = true;
        }
        self.nodes
            .iter()
            .zip(seen)
            .filter(|(_, s)| *s)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// `user_a<TAB>user_b<TAB>weight`, `user_a < user_b`, rows sorted.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b, wt) in self.edge_list() {
            writeln!(w, "{a}\t{b}\t{wt}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the TSV edge list. Nodes are the users named in it.
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut raw: Vec<(String, String, u64)> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let mut parts = line.split('\t');
            let (Some(a), Some(b), Some(w), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(parse_err(format!(
                    "expected 3 tab-separated fields: `{line}`"
                )));
            };
            let w: u64 = w
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("weight `{w}` is not a non-negative integer")))?;
            if a == b {
                return Err(parse_err(format!("self-loop on `{a}`")));
            }
            raw.push((a.to_string(), b.to_string(), w));
        }
        let mut nodes: Vec<String> = raw
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        nodes.sort();
        nodes.dedup();
        let pos = |n: &str| {
            nodes
                .binary_search_by(|x| x.as_str().cmp(n))
                .expect("node present")
        };
        let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (a, b, w) in &raw {
            let (x, y) = (pos(a), pos(b));
            *counts.entry((x.min(y), x.max(y))).or_default() += w;
        }
        Ok(Self::from_counts(nodes, counts))
    }
}

/// Shared lookup tables for graph construction.
struct Prepared<'a> {
    nodes: Vec<String>,
    review_user: Vec<usize>,
    ds: &'a Dataset,
}

fn prepare(ds: &Dataset) -> Prepared<'_> {
    let nodes: Vec<String> = ds.by_user().keys().cloned().collect();
    let mut review_user = vec![0usize; ds.len()];
    for (u, idx) in ds.by_user().values().enumerate() {
        for &i in idx {
            review_user[i] = u;
        }
    }
    Prepared {
        nodes,
        review_user,
        ds,
    }
}

/// Co-bursting graph through per-restaurant time indexes.
///
/// Each unordered pair of active reviews by distinct users is counted once:
/// the query issued from user `u` only counts partners with a larger index.
pub fn build_coburst_graph(
    ads: &StateAnnotatedDataset<'_>,
    config: &CoburstConfig,
) -> Result<CoburstGraph> {
    config.validate()?;
    let p = prepare(ads.dataset);
    let reviews = p.ds.reviews();
    let rest_ids: HashMap<&str, usize> =
        p.ds.by_restaurant()
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
    let indexes: Vec<TimeIndex> =
        p.ds.by_restaurant()
            .values()
            .map(|idx| TimeIndex::new(p.ds, idx))
            .collect();
    let review_rest: Vec<usize> = reviews
        .iter()
        .map(|r| rest_ids[r.restaurant_id.as_str()])
        .collect();
    let user_lists: Vec<&Vec<usize>> = p.ds.by_user().values().collect();

    let per_user: Vec<Vec<(usize, u64)>> = config.exec.map_range(user_lists.len(), |u| {
        let mut acc: HashMap<usize, u64> = HashMap::new();
        for &r in user_lists[u] {
            if ads.states[r] != 1 {
                continue;
            }
            let window = indexes[review_rest[r]].query(reviews[r].timestamp, config.omega);
            for &c in window {
                let v = p.review_user[c];
                if v > u && ads.states[c] == 1 {
                    *acc.entry(v).or_default() += 1;
                }
            }
        }
        let mut row: Vec<(usize, u64)> = acc.into_iter().collect();
        row.sort_unstable();
        row
    });

    // rows arrive in user order with ascending partners, so this is already sorted
    let edges = per_user
        .into_iter()
        .enumerate()
        .flat_map(|(u, row)| row.into_iter().map(move |(v, w)| (u, v, w)))
        .collect();
    Ok(CoburstGraph {
        nodes: p.nodes,
        edges,
    })
}

/// Reference implementation: a literal double loop over all review pairs.
pub fn naive_coburst_oracle(
    ads: &StateAnnotatedDataset<'_>,
    config: &CoburstConfig,
) -> Result<CoburstGraph> {
    config.validate()?;
    let p = prepare(ads.dataset);
    let reviews = p.ds.reviews();
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for i in 0..reviews.len() {
        for j in (i + 1)..reviews.len() {
            let (ri, rj) = (&reviews[i], &reviews[j]);
            let (ui, uj) = (p.review_user[i], p.review_user[j]);
            if ui != uj
                && ri.restaurant_id == rj.restaurant_id
                && (ri.timestamp - rj.timestamp).abs() < config.omega
                && ads.states[i] == 1
                && ads.states[j] == 1
            {
                *counts.entry((ui.min(uj), ui.max(uj))).or_default() += 1;
            }
        }
    }
    Ok(CoburstGraph::from_counts(p.nodes, counts))
}

/// Users linked by the number of distinct restaurants both reviewed.
pub fn build_coreview_graph(ds: &Dataset) -> CoburstGraph {
    let p = prepare(ds);
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for idx in ds.by_restaurant().values() {
        let mut users: Vec<usize> = idx.iter().map(|&i| p.review_user[i]).collect();
        users.sort_unstable();
        users.dedup();
        for (k, &a) in users.iter().enumerate() {
            for &b in &users[k + 1..] {
                *counts.entry((a, b)).or_default() += 1;
            }
        }
    }
    CoburstGraph::from_counts(p.nodes, counts)
}
