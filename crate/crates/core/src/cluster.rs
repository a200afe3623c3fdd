//! Louvain community detection and cluster quality against known labels.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coburst::CoburstGraph;
use crate::datamodel::Label;
use crate::{Error, Result};

const MIN_GAIN: f64 = 1e-12;

/// Undirected weighted graph in adjacency-list form, no self-loops.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub nodes: Vec<String>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(nodes: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(a, b, w) in edges {
            if a == b {
                return Err(Error::Validation(format!("self-loop on node {a}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge weight must be positive, got {w}"
                )));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::Validation(format!("edge ({a}, {b}) out of range")));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        Ok(WeightedGraph { nodes, adj })
    }

    /// Every user of the co-burst graph becomes a node; users without
    /// co-bursts stay isolated and end up as singleton communities.
    pub fn from_coburst(g: &CoburstGraph) -> Self {
        let edges: Vec<(usize, usize, f64)> =
            g.edges.iter().map(|&(a, b, w)| (a, b, w as f64)).collect();
        Self::new(g.nodes.clone(), &edges)
            .expect("coburst graphs have no self-loops and positive weights")
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|e| e.1).sum()
    }

    /// `2m`, the sum of all degrees.
    pub fn total_degree(&self) -> f64 {
        (0..self.n_nodes()).map(|i| self.degree(i)).sum()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }
}

/// Community per node, aligned with a node list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub nodes: Vec<String>,
    pub membership: Vec<usize>,
}

impl Clustering {
    /// Relabels communities 0, 1, … in order of first appearance.
    pub fn new(nodes: Vec<String>, membership: Vec<usize>) -> Self {
        assert_eq!(nodes.len(), membership.len());
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let membership = membership
            .into_iter()
            .map(|c| {
                let next = relabel.len();
                *relabel.entry(c).or_insert(next)
            })
            .collect();
        Clustering { nodes, membership }
    }

    pub fn singletons(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        Clustering::new(nodes, (0..n).collect())
    }

    pub fn n_clusters(&self) -> usize {
        self.membership.iter().max().map_or(0, |m| m + 1)
    }

    /// `user_id<TAB>cluster_id`, sorted by user id.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut rows: Vec<(&str, usize)> = self
            .nodes
            .iter()
            .map(String::as_str)
            .zip(self.membership.iter().copied())
            .collect();
        rows.sort();
        for (n, c) in rows {
            writeln!(w, "{n}\t{c}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut membership = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (n, c) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `user_id<TAB>cluster_id`".into(),
            })?;
            let c: usize = c.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("cluster id `{c}` is not an integer"),
            })?;
            nodes.push(n.to_string());
            membership.push(c);
        }
        Ok(Clustering::new(nodes, membership))
    }
}

/// Weighted modularity of a partition given as a community id per node.
pub fn modularity(g: &WeightedGraph, membership: &[usize]) -> Result<f64> {
    assert_eq!(
        membership.len(),
        g.n_nodes(),
        "membership must cover every node"
    );
    let two_m = g.total_degree();
    if two_m <= 0.0 {
        return Err(Error::UndefinedModularity);
    }
    let mut internal: HashMap<usize, f64> = HashMap::new();
    let mut total: HashMap<usize, f64> = HashMap::new();
    for i in 0..g.n_nodes() {
        let ci = membership[i];
        *total.entry(ci).or_default() += g.degree(i);
        for &(j, w) in g.neighbors(i) {
            if membership[j] == ci {
                *internal.entry(ci).or_default() += w;
            }
        }
    }
    let mut keys: Vec<usize> = total.keys().copied().collect();
    keys.sort_unstable();
    Ok(keys
        .into_iter()
        .map(|c| internal.get(&c).copied().unwrap_or(0.0) / two_m - (total[&c] / two_m).powi(2))
        .sum())
}

/// One aggregation level of the Louvain method.
struct Level {
    /// Neighbours excluding self-loops.
    adj: Vec<Vec<(usize, f64)>>,
    /// Self-loop weight, counting both directions of every collapsed edge.
    self_loop: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(g: &WeightedGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = g.adj.clone();
        let degree = (0..g.n_nodes()).map(|i| g.degree(i)).collect();
        Level {
            self_loop: vec![0.0; adj.len()],
            adj,
            degree,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// Greedy local moves until a full sweep changes nothing. Returns the
    /// community of every node and whether anything moved.
    fn local_moving(&self, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.n();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut moved_any = false;
        let mut links: Vec<f64> = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        loop {
            let mut moved = false;
            for &i in &order {
                let ci = comm[i];
                let ki = self.degree[i];
                for &c in &touched {
                    links[c] = 0.0;
                }
                touched.clear();
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if links[c] == 0.0 {
                        touched.push(c);
                    }
                    links[c] += w;
                }
                tot[ci] -= ki;
                let gain = |c: usize, links_c: f64| links_c - tot[c] * ki / two_m;
                let mut best = ci;
                let mut best_gain = gain(ci, links[ci]);
                touched.sort_unstable();
                for &c in &touched {
                    let g = gain(c, links[c]);
                    if g > best_gain + MIN_GAIN {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (comm, moved_any)
    }

    /// Collapses each community into one node.
    fn aggregate(&self, comm: &[usize]) -> (Level, Vec<usize>) {
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let dense: Vec<usize> = comm
            .iter()
            .map(|&c| {
                let next = relabel.len();
                *relabel.entry(c).or_insert(next)
            })
            .collect();
        let k = relabel.len();
        let mut self_loop = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.n() {
            let ci = dense[i];
            self_loop[ci] += self.self_loop[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                let cj = dense[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_default() += w;
                }
            }
        }
        let adj = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        (
            Level {
                adj,
                self_loop,
                degree,
            },
            dense,
        )
    }
}

/// Louvain result with the modularity reached after every level.
#[derive(Debug, Clone)]
pub struct LouvainRun {
    pub clustering: Clustering,
    pub modularity_trace: Vec<f64>,
}

/// Louvain method: local moving then aggregation, repeated until no move
/// improves modularity by more than 1e-12. Deterministic in `seed`.
pub fn louvain(g: &WeightedGraph, seed: u64) -> Clustering {
    louvain_with_trace(g, seed).clustering
}

pub fn louvain_with_trace(g: &WeightedGraph, seed: u64) -> LouvainRun {
    let n = g.n_nodes();
    let mut membership: Vec<usize> = (0..n).collect();
    let two_m = g.total_degree();
    if n == 0 || two_m <= 0.0 {
        return LouvainRun {
            clustering: Clustering::singletons(g.nodes.clone()),
            modularity_trace: Vec::new(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(g);
    let mut trace = vec![modularity(g, &membership).expect("positive weight")];
    loop {
        let (comm, moved) = level.local_moving(two_m, &mut rng);
        if !moved {
            break;
        }
        let (next, dense) = level.aggregate(&comm);
        for m in membership.iter_mut() {
            *m = dense[*m];
        }
        trace.push(modularity(g, &membership).expect("positive weight"));
        if next.n() == level.n() {
            break;
        }
        level = next;
    }
    LouvainRun {
        clustering: Clustering::new(g.nodes.clone(), membership),
        modularity_trace: trace,
    }
}

/// Node id → class label.
pub type LabelAssignment<L = Label> = BTreeMap<String, L>;

type Contingency<L> = (BTreeMap<usize, BTreeMap<L, usize>>, usize);

/// Per-cluster class counts over labeled nodes only.
fn contingency<L: Ord + Clone>(
    c: &Clustering,
    labels: &LabelAssignment<L>,
) -> Result<Contingency<L>> {
    let mut table: BTreeMap<usize, BTreeMap<L, usize>> = BTreeMap::new();
    let mut n = 0;
    for (node, &cl) in c.nodes.iter().zip(&c.membership) {
        if let Some(l) = labels.get(node) {
            *table.entry(cl).or_default().entry(l.clone()).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientLabels);
    }
    Ok((table, n))
}

/// Fraction of labeled nodes that carry their cluster's majority class.
pub fn purity<L: Ord + Clone>(c: &Clustering, labels: &LabelAssignment<L>) -> Result<f64> {
    let (table, n) = contingency(c, labels)?;
    let hits: usize = table
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / n as f64)
}

/// Size-weighted mean of the within-cluster class entropy, in bits.
pub fn entropy<L: Ord + Clone>(c: &Clustering, labels: &LabelAssignment<L>) -> Result<f64> {
    let (table, n) = contingency(c, labels)?;
    let mut h = 0.0;
    for row in table.values() {
        let nk: usize = row.values().sum();
        let hk: f64 = row
            .values()
            .filter(|&&x| x > 0)
            .map(|&x| {
                let p = x as f64 / nk as f64;
                -p * p.log2()
            })
            .sum();
        h += nk as f64 / n as f64 * hk;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterQuality {
    pub purity: f64,
    pub entropy: f64,
    pub n_clusters: usize,
    pub n_labeled: usize,
}

impl ClusterQuality {
    pub fn evaluate<L: Ord + Clone>(c: &Clustering, labels: &LabelAssignment<L>) -> Result<Self> {
        let (_, n_labeled) = contingency(c, labels)?;
        Ok(ClusterQuality {
            purity: purity(c, labels)?,
            entropy: entropy(c, labels)?,
            n_clusters: c.n_clusters(),
            n_labeled,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "purity = {}\nentropy = {}\nn_clusters = {}\nn_labeled = {}\n",
            self.purity, self.entropy, self.n_clusters, self.n_labeled
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i:03}")).collect()
    }

    fn labels(assign: &[(&str, &str)]) -> LabelAssignment<String> {
        assign
            .iter()
            .map(|(n, l)| (n.to_string(), l.to_string()))
            .collect()
    }

    fn ab_example() -> (Clustering, LabelAssignment<String>) {
        let c = Clustering::new(
            vec!["1".into(), "2".into(), "3".into(), "4".into(), "5".into()],
            vec![0, 0, 0, 1, 1],
        );
        let l = labels(&[("1", "a"), ("2", "a"), ("3", "b"), ("4", "b"), ("5", "b")]);
        (c, l)
    }

    #[test]
    fn modularity_hand_examples() {
        let g = WeightedGraph::new(names(4), &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!((modularity(&g, &[0, 0, 1, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(modularity(&g, &[0, 0, 0, 0]).unwrap().abs() < 1e-15);

        let tri = WeightedGraph::new(names(3), &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert!((modularity(&tri, &[0, 1, 2]).unwrap() + 1.0 / 3.0).abs() < 1e-15);

        let empty = WeightedGraph::new(names(2), &[]).unwrap();
        assert!(matches!(
            modularity(&empty, &[0, 1]),
            Err(Error::UndefinedModularity)
        ));
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(WeightedGraph::new(names(2), &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(names(2), &[(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::new(names(2), &[(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn two_cliques_split_cleanly() {
        let mut edges = Vec::new();
        for block in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((block + i, block + j, 1.0));
                }
            }
        }
        let g = WeightedGraph::new(names(8), &edges).unwrap();
        for seed in 0..5 {
            let c = louvain(&g, seed);
            assert_eq!(c.n_clusters(), 2);
            assert_eq!(c.membership, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        }
    }

    #[test]
    fn planted_partition_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if (i < 50) == (j < 50) { 0.3 } else { 0.01 };
                if rng.random::<f64>() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let g = WeightedGraph::new(names(n), &edges).unwrap();
        let run = louvain_with_trace(&g, 7);
        let truth: LabelAssignment<String> = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), if i < 50 { "x" } else { "y" }.to_string()))
            .collect();
        assert!(purity(&run.clustering, &truth).unwrap() >= 0.95);
        for w in run.modularity_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let singles: Vec<usize> = (0..n).collect();
        assert!(*run.modularity_trace.last().unwrap() >= modularity(&g, &singles).unwrap());
        assert_eq!(louvain(&g, 7), run.clustering);
    }

    #[test]
    fn purity_and_entropy_hand_examples() {
        let (c, l) = ab_example();
        assert!((purity(&c, &l).unwrap() - 0.8).abs() < 1e-12);
        let h = (3.0 / 5.0)
            * -((2.0f64 / 3.0) * (2.0f64 / 3.0).log2() + (1.0f64 / 3.0) * (1.0f64 / 3.0).log2());
        assert!((entropy(&c, &l).unwrap() - h).abs() < 1e-12);
        assert!((entropy(&c, &l).unwrap() - 0.55098).abs() < 1e-5);

        let one = Clustering::new((0..10).map(|i| i.to_string()).collect(), vec![0; 10]);
        let l: LabelAssignment<String> = (0..10)
            .map(|i| {
                (
                    i.to_string(),
                    if i < 7 { "spam" } else { "genuine" }.to_string(),
                )
            })
            .collect();
        assert!((purity(&one, &l).unwrap() - 0.7).abs() < 1e-15);

        let halves: LabelAssignment<String> = (0..10)
            .map(|i| (i.to_string(), if i < 5 { "a" } else { "b" }.to_string()))
            .collect();
        assert!((entropy(&one, &halves).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pure_clusters_and_unlabeled_nodes() {
        let c = Clustering::new(
            vec!["1".into(), "2".into(), "3".into(), "4".into()],
            vec![0, 0, 1, 1],
        );
        let l = labels(&[("1", "a"), ("2", "a"), ("3", "b")]);
        assert_eq!(purity(&c, &l).unwrap(), 1.0);
        assert_eq!(entropy(&c, &l).unwrap(), 0.0);
        let q = ClusterQuality::evaluate(&c, &l).unwrap();
        assert_eq!(q.n_labeled, 3);
        assert_eq!(q.n_clusters, 2);
        let none: LabelAssignment<String> = BTreeMap::new();
        assert!(matches!(purity(&c, &none), Err(Error::InsufficientLabels)));
        assert!(matches!(entropy(&c, &none), Err(Error::InsufficientLabels)));
    }

    #[test]
    fn clustering_tsv_round_trip() {
        let c = Clustering::new(vec!["b".into(), "a".into(), "c".into()], vec![5, 9, 5]);
        assert_eq!(c.membership, vec![0, 1, 0]);
        let mut buf = Vec::new();
        c.write_tsv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "a\t1\nb\t0\nc\t0\n"
        );
        let back = Clustering::read_tsv(buf.as_slice()).unwrap();
        assert_eq!(back.n_clusters(), 2);
    }
}
