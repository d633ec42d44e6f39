//! Threshold correlation graphs and their maximal cliques.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// G(δ): an edge joins i and j iff |ρ_ij| > δ.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGraph {
    labels: Vec<String>,
    delta: f64,
    /// (i, j, ρ_ij) with i < j, sorted.
    edges: Vec<(usize, usize, f64)>,
    /// A(δ): unit diagonal, ρ_ij on edges, zero elsewhere.
    adjacency: DMatrix<f64>,
    neighbours: Vec<Vec<bool>>,
}

impl ThresholdGraph {
    fn from_edges(labels: Vec<String>, delta: f64, edges: Vec<(usize, usize, f64)>) -> Self {
        let n = labels.len();
        let mut adjacency = DMatrix::identity(n, n);
        let mut neighbours = vec![vec![false; n]; n];
        for &(i, j, w) in &edges {
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
            neighbours[i][j] = true;
            neighbours[j][i] = true;
        }
        Self {
            labels,
            delta,
            edges,
            adjacency,
            neighbours,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Edge endpoints without weights.
    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbours[i][j]
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph G {\n");
        for (i, label) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  {i} [label=\"{}\"];", escape_dot(label));
        }
        for &(i, j, w) in &self.edges {
            let _ = writeln!(out, "  {i} -- {j} [weight=\"{w:.4}\"];");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            labels: self.labels.clone(),
            delta: self.delta,
            edges: self.edges.clone(),
        }
    }

    pub fn from_json(g: GraphJson) -> Result<Self> {
        let n = g.labels.len();
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(g.edges.len());
        for (i, j, w) in g.edges {
            if i >= n || j >= n || i == j {
                return Err(Error::domain(format!("invalid edge ({i}, {j}) for {n} vertices")));
            }
            let (a, b) = (i.min(j), i.max(j));
            if !seen.insert((a, b)) {
                return Err(Error::domain(format!("duplicate edge ({a}, {b})")));
            }
            edges.push((a, b, w));
        }
        edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        Ok(Self::from_edges(g.labels, g.delta, edges))
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// JSON form of a graph; edges are `[i, j, rho]` with 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub labels: Vec<String>,
    pub delta: f64,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn build_graph(corr: &DMatrix<f64>, labels: &[String], delta: f64) -> Result<ThresholdGraph> {
    let n = corr.nrows();
    if !corr.is_square() || labels.len() != n {
        return Err(Error::shape("correlation matrix and labels disagree"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("threshold {delta} is outside [0, 1)")));
    }
    for i in 0..n {
        if (corr[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("diagonal entry {i} is {} not 1", corr[(i, i)])));
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let rho = corr[(i, j)];
            if (rho - corr[(j, i)]).abs() > 1e-12 {
                return Err(Error::domain("correlation matrix is not symmetric"));
            }
            if rho.abs() > delta {
                edges.push((i, j, rho));
            }
        }
    }
    Ok(ThresholdGraph::from_edges(labels.to_vec(), delta, edges))
}

/// Maximal cliques, each sorted, the list sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliqueSet {
    pub cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn orders(&self) -> Vec<usize> {
        self.cliques.iter().map(Vec::len).collect()
    }

    pub fn contains(&self, clique: &[usize]) -> bool {
        self.cliques.binary_search_by(|c| c.as_slice().cmp(clique)).is_ok()
    }

    pub fn to_labels(&self, labels: &[String]) -> Vec<Vec<String>> {
        self.cliques
            .iter()
            .map(|c| c.iter().map(|&v| labels[v].clone()).collect())
            .collect()
    }
}

/// Bron-Kerbosch with pivoting on the vertex maximizing |P ∩ N(u)|.
pub fn maximal_cliques(g: &ThresholdGraph) -> CliqueSet {
    let n = g.n_vertices();
    let mut out = Vec::new();
    if n > 0 {
        let mut r = Vec::new();
        bron_kerbosch(g, &mut r, (0..n).collect(), Vec::new(), &mut out);
    }
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    CliqueSet { cliques: out }
}

fn bron_kerbosch(g: &ThresholdGraph, r: &mut Vec<usize>, mut p: Vec<usize>, mut x: Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(r.clone());
        }
        return;
    }
    let pivot = p
        .iter()
        .chain(&x)
        .copied()
        .max_by_key(|&u| (p.iter().filter(|&&v| g.is_adjacent(u, v)).count(), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !g.is_adjacent(pivot, v)).collect();
    for v in candidates {
        let np = p.iter().copied().filter(|&w| g.is_adjacent(v, w)).collect();
        let nx = x.iter().copied().filter(|&w| g.is_adjacent(v, w)).collect();
        r.push(v);
        bron_kerbosch(g, r, np, nx, out);
        r.pop();
        p.retain(|&w| w != v);
        x.push(v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphComparison {
    pub edges_only_observed: Vec<(usize, usize)>,
    pub edges_only_simulated: Vec<(usize, usize)>,
    /// |E ∩ E_S| / |E ∪ E_S|, 1 when both are empty.
    pub edge_jaccard: f64,
    pub cliques_matched: usize,
    /// For each observed clique, the best Jaccard overlap with any simulated
    /// clique.
    pub clique_best_jaccard: Vec<f64>,
}

fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = a.iter().filter(|v| b.contains(v)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn compare_graphs(observed: &ThresholdGraph, simulated: &ThresholdGraph) -> Result<GraphComparison> {
    if observed.labels != simulated.labels {
        return Err(Error::domain("graphs have different vertex labels"));
    }
    if observed.delta != simulated.delta {
        return Err(Error::domain(format!(
            "graphs use different thresholds ({} vs {})",
            observed.delta, simulated.delta
        )));
    }
    let e = observed.edge_set();
    let es = simulated.edge_set();
    let union = e.union(&es).count();
    let inter = e.intersection(&es).count();
    let co = maximal_cliques(observed);
    let cs = maximal_cliques(simulated);
    Ok(GraphComparison {
        edges_only_observed: e.difference(&es).copied().collect(),
        edges_only_simulated: es.difference(&e).copied().collect(),
        edge_jaccard: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
        cliques_matched: co.cliques.iter().filter(|c| cs.contains(c)).count(),
        clique_best_jaccard: co
            .cliques
            .iter()
            .map(|c| cs.cliques.iter().map(|s| jaccard(c, s)).fold(0.0, f64::max))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn graph_from_mask(n: usize, mask: &[bool]) -> ThresholdGraph {
        let mut corr = DMatrix::identity(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if mask[k] {
                    corr[(i, j)] = 0.9;
                    corr[(j, i)] = 0.9;
                }
                k += 1;
            }
        }
        let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        build_graph(&corr, &labels, 0.5).unwrap()
    }

    fn brute_force(g: &ThresholdGraph) -> Vec<Vec<usize>> {
        let n = g.n_vertices();
        let is_clique = |s: u32| {
            (0..n).all(|i| (i + 1..n).all(|j| s & (1 << i) == 0 || s & (1 << j) == 0 || g.is_adjacent(i, j)))
        };
        let mut out = Vec::new();
        for s in 1u32..(1 << n) {
            if is_clique(s) && (0..n).all(|v| s & (1 << v) != 0 || !is_clique(s | (1 << v))) {
                out.push((0..n).filter(|&v| s & (1 << v) != 0).collect::<Vec<_>>());
            }
        }
        out.sort();
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn cliques_match_brute_force(n in 1usize..=12, bits in proptest::collection::vec(any::<bool>(), 66)) {
            let g = graph_from_mask(n, &bits);
            prop_assert_eq!(maximal_cliques(&g).cliques, brute_force(&g));
        }
    }

    fn labelled(v: &[usize]) -> Vec<usize> {
        v.iter().map(|i| i - 1).collect()
    }

    #[test]
    fn five_asset_graphs() {
        let r = fixtures::matrix(&fixtures::CORR_5);
        let labels = fixtures::labels(&fixtures::LABELS_5);
        let g = build_graph(&r, &labels, 0.5).unwrap();
        assert_eq!(g.edges().len(), 10);
        assert_eq!(maximal_cliques(&g).cliques, vec![vec![0, 1, 2, 3, 4]]);
        let g = build_graph(&r, &labels, 0.71).unwrap();
        let expected: BTreeSet<_> = [(1, 2), (1, 3), (2, 3), (3, 4), (3, 5)].iter().map(|&(i, j)| (i - 1, j - 1)).collect();
        assert_eq!(g.edge_set(), expected);
        assert_eq!(
            maximal_cliques(&g).cliques,
            vec![labelled(&[1, 2, 3]), labelled(&[3, 4]), labelled(&[3, 5])]
        );
        assert!(build_graph(&r, &labels, 0.9).unwrap().edges().is_empty());
    }

    #[test]
    fn eight_asset_cliques() {
        let g = build_graph(&fixtures::matrix(&fixtures::CORR_8), &fixtures::labels(&fixtures::LABELS_8), 0.5).unwrap();
        let mut expected = vec![labelled(&[1, 2, 3, 4, 5]), labelled(&[6, 7, 8]), labelled(&[2, 3, 7, 8])];
        expected.sort();
        assert_eq!(maximal_cliques(&g).cliques, expected);
    }

    #[test]
    fn fifteen_asset_cliques() {
        let g = build_graph(&fixtures::matrix(&fixtures::CORR_15), &fixtures::labels(&fixtures::LABELS_15), 0.5).unwrap();
        let mut expected = vec![
            labelled(&[1, 2, 3, 4, 5, 6, 14]),
            labelled(&[1, 2, 3, 5, 6, 8, 9, 14, 15]),
            labelled(&[2, 3, 6, 8, 9, 10, 12, 13, 14, 15]),
            labelled(&[6, 7, 8, 9, 11, 12, 13, 15]),
        ];
        expected.sort();
        assert_eq!(maximal_cliques(&g).cliques, expected);
    }

    #[test]
    fn complete_graphs_and_paths() {
        for n in 1..=10 {
            let full = graph_from_mask(n, &vec![true; n * (n - 1) / 2]);
            assert_eq!(maximal_cliques(&full).len(), 1);
            let mut corr = DMatrix::identity(n, n);
            for i in 1..n {
                corr[(i - 1, i)] = 0.8;
                corr[(i, i - 1)] = 0.8;
            }
            let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let path = build_graph(&corr, &labels, 0.5).unwrap();
            assert_eq!(maximal_cliques(&path).len(), (n - 1).max(1));
        }
    }

    #[test]
    fn negative_correlations_form_edges() {
        let corr = DMatrix::from_row_slice(2, 2, &[1.0, -0.8, -0.8, 1.0]);
        let g = build_graph(&corr, &["a".into(), "b".into()], 0.5).unwrap();
        assert_eq!(g.edges(), &[(0, 1, -0.8)]);
    }

    #[test]
    fn non_unit_diagonal_rejected() {
        let corr = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        assert!(matches!(build_graph(&corr, &["a".into(), "b".into()], 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn edges_monotone_in_delta() {
        let r = fixtures::matrix(&fixtures::CORR_15);
        let labels = fixtures::labels(&fixtures::LABELS_15);
        let mut prev = build_graph(&r, &labels, 0.0).unwrap().edge_set();
        for d in [0.3, 0.5, 0.6, 0.71, 0.8, 0.95] {
            let cur = build_graph(&r, &labels, d).unwrap().edge_set();
            assert!(cur.is_subset(&prev));
            prev = cur;
        }
    }

    #[test]
    fn comparison_against_self_and_disjoint() {
        let g = build_graph(&fixtures::matrix(&fixtures::CORR_8), &fixtures::labels(&fixtures::LABELS_8), 0.5).unwrap();
        let c = compare_graphs(&g, &g).unwrap();
        assert_eq!(c.edge_jaccard, 1.0);
        assert_eq!(c.cliques_matched, 3);
        assert!(c.clique_best_jaccard.iter().all(|&j| j == 1.0));

        let a = graph_from_mask(4, &[true, false, false, false, false, false]);
        let b = graph_from_mask(4, &[false, false, false, false, false, true]);
        assert_eq!(compare_graphs(&a, &b).unwrap().edge_jaccard, 0.0);
        let empty = graph_from_mask(4, &[false; 6]);
        assert_eq!(compare_graphs(&empty, &empty).unwrap().edge_jaccard, 1.0);
    }

    #[test]
    fn one_extra_simulated_edge() {
        let r = fixtures::matrix(&fixtures::CORR_8);
        let labels = fixtures::labels(&fixtures::LABELS_8);
        let mut sim = r.clone();
        sim[(1, 5)] = 0.55;
        sim[(5, 1)] = 0.55;
        let c = compare_graphs(&build_graph(&r, &labels, 0.5).unwrap(), &build_graph(&sim, &labels, 0.5).unwrap()).unwrap();
        assert_eq!(c.edges_only_simulated, vec![(1, 5)]);
        assert!(c.edges_only_observed.is_empty());
    }

    #[test]
    fn mismatched_graphs_rejected() {
        let r = fixtures::matrix(&fixtures::CORR_5);
        let labels = fixtures::labels(&fixtures::LABELS_5);
        let a = build_graph(&r, &labels, 0.5).unwrap();
        let b = build_graph(&r, &labels, 0.6).unwrap();
        assert!(matches!(compare_graphs(&a, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn json_round_trip_and_dot() {
        let g = build_graph(&fixtures::matrix(&fixtures::CORR_5), &fixtures::labels(&fixtures::LABELS_5), 0.71).unwrap();
        let text = serde_json::to_string(&g.to_json()).unwrap();
        let back = ThresholdGraph::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, g);
        let dot = g.to_dot();
        assert!(dot.contains("0 [label=\"MSFT\"]"));
        assert!(dot.contains("1 -- 2 [weight=\"0.8435\"]"));
        assert_eq!(dot.matches(" -- ").count(), 5);
    }
}
