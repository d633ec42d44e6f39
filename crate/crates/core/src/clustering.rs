//! Complete-linkage hierarchical clustering on the distance d = 1 − ρ.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// d_ij = 1 − ρ_ij.
pub fn corr_distance(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !corr.is_square() {
        return Err(Error::shape("correlation matrix is not square"));
    }
    let n = corr.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 - corr[(i, j)] }))
}

/// One agglomeration step. Leaves are clusters `0..n`; the cluster created
/// by merge k has id `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

pub fn complete_linkage(d: &DMatrix<f64>, labels: &[String]) -> Result<Dendrogram> {
    let n = d.nrows();
    if !d.is_square() || labels.len() != n {
        return Err(Error::shape("distance matrix and labels disagree"));
    }
    if n == 0 {
        return Err(Error::InsufficientData("no leaves to cluster".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = d[(i, j)];
            if !v.is_finite() || v < 0.0 || v != d[(j, i)] {
                return Err(Error::domain(format!("invalid distance at ({i}, {j})")));
            }
        }
    }
    // Active clusters by id, with their current pairwise distances.
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let mut dist = vec![vec![f64::INFINITY; 2 * n - 1]; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = d[(i, j)];
        }
    }
    let mut merges = Vec::with_capacity(n - 1);
    for k in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &a) in active.iter().enumerate() {
            for &b in &active[x + 1..] {
                let h = dist[a][b];
                let better = match best {
                    None => true,
                    Some((bh, ba, bb)) => h < bh || (h == bh && (a.min(b), a.max(b)) < (ba, bb)),
                };
                if better {
                    best = Some((h, a.min(b), a.max(b)));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let id = n + k;
        size[id] = size[a] + size[b];
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let v = dist[a][c].max(dist[b][c]);
            dist[id][c] = v;
            dist[c][id] = v;
        }
        active.push(id);
        merges.push(Merge {
            a,
            b,
            height,
            size: size[id],
        });
    }
    let dend = Dendrogram {
        labels: labels.to_vec(),
        merges,
    };
    debug_assert!(dend.heights_monotone());
    Ok(dend)
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn heights_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    fn height_of(&self, id: usize) -> f64 {
        let n = self.n_leaves();
        if id < n {
            0.0
        } else {
            self.merges[id - n].height
        }
    }

    /// Newick string with branch lengths equal to height differences.
    pub fn to_newick(&self) -> String {
        let n = self.n_leaves();
        let mut out = String::new();
        if n == 1 {
            out.push_str(&newick_label(&self.labels[0]));
        } else {
            self.write_newick(n + self.merges.len() - 1, &mut out);
        }
        out.push(';');
        out
    }

    fn write_newick(&self, id: usize, out: &mut String) {
        let n = self.n_leaves();
        if id < n {
            out.push_str(&newick_label(&self.labels[id]));
            return;
        }
        let m = self.merges[id - n];
        out.push('(');
        for (k, child) in [m.a, m.b].into_iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            self.write_newick(child, out);
            out.push_str(&format!(":{}", m.height - self.height_of(child)));
        }
        out.push(')');
    }
}

fn newick_label(s: &str) -> String {
    if s.chars().any(|c| "()[]':;, \t".contains(c)) {
        format!("'{}'", s.replace('\'', "''"))
    } else {
        s.to_string()
    }
}

/// Cluster index per leaf after undoing the last k − 1 merges. Clusters are
/// numbered in order of their smallest leaf.
pub fn cut_tree(dend: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dend.n_leaves();
    if k == 0 || k > n {
        return Err(Error::domain(format!("cannot cut {n} leaves into {k} clusters")));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, m) in dend.merges.iter().take(n - k).enumerate() {
        let id = n + step;
        let ra = find(&mut parent, m.a);
        let rb = find(&mut parent, m.b);
        parent[ra] = id;
        parent[rb] = id;
    }
    let mut ids: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let idx = match ids.iter().position(|&r| r == root) {
            Some(i) => i,
            None => {
                ids.push(root);
                ids.len() - 1
            }
        };
        out.push(idx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn three_points() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 4.0, 1.0, 0.0, 5.0, 4.0, 5.0, 0.0])
    }

    #[test]
    fn distance_values() {
        let d = corr_distance(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        let d = corr_distance(&fixtures::matrix(&fixtures::CORR_5)).unwrap();
        assert!((d[(0, 1)] - 0.2288).abs() < 1e-12);
        let d = corr_distance(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn two_leaves() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]);
        let dend = complete_linkage(&d, &names(2)).unwrap();
        assert_eq!(dend.merges, vec![Merge { a: 0, b: 1, height: 0.3, size: 2 }]);
    }

    #[test]
    fn three_point_hand_example() {
        let dend = complete_linkage(&three_points(), &names(3)).unwrap();
        assert_eq!(
            dend.merges,
            vec![Merge { a: 0, b: 1, height: 1.0, size: 2 }, Merge { a: 2, b: 3, height: 5.0, size: 3 }]
        );
        assert_eq!(cut_tree(&dend, 2).unwrap(), vec![0, 0, 1]);
        assert_eq!(cut_tree(&dend, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(cut_tree(&dend, 1).unwrap(), vec![0, 0, 0]);
        assert!(matches!(cut_tree(&dend, 0), Err(Error::Domain(_))));
        assert!(matches!(cut_tree(&dend, 4), Err(Error::Domain(_))));
        assert_eq!(dend.to_newick(), "(3:5,(1:1,2:1):4);");
    }

    #[test]
    fn ties_break_on_smallest_pair() {
        let d = DMatrix::from_row_slice(4, 4, &[0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 2.0, 2.0, 2.0, 2.0, 0.0, 1.0, 2.0, 2.0, 1.0, 0.0]);
        let dend = complete_linkage(&d, &names(4)).unwrap();
        assert_eq!((dend.merges[0].a, dend.merges[0].b), (0, 1));
        assert_eq!((dend.merges[1].a, dend.merges[1].b), (2, 3));
    }

    fn partition(assign: &[usize]) -> Vec<Vec<usize>> {
        let k = assign.iter().max().map_or(0, |m| m + 1);
        (0..k)
            .map(|c| (0..assign.len()).filter(|&i| assign[i] == c).collect())
            .collect()
    }

    #[test]
    fn fifteen_asset_dendrogram() {
        let corr = fixtures::matrix(&fixtures::CORR_15);
        let labels = fixtures::labels(&fixtures::LABELS_15);
        let dend = complete_linkage(&corr_distance(&corr).unwrap(), &labels).unwrap();
        assert!(dend.heights_monotone());
        for k in 1..=15 {
            let assign = cut_tree(&dend, k).unwrap();
            assert_eq!(partition(&assign).len(), k);
        }
        // Reference merge heights and 4-cluster partition from an independent
        // complete-linkage implementation (scipy.cluster.hierarchy).
        let heights = [
            0.1093, 0.1442, 0.2170, 0.2288, 0.2512, 0.2867, 0.3037, 0.3145, 0.3162, 0.3596, 0.3879, 0.4458, 0.5865, 0.7712,
        ];
        for (m, h) in dend.merges.iter().zip(heights) {
            assert!((m.height - h).abs() < 1e-12, "{} vs {h}", m.height);
        }
        assert_eq!(cut_tree(&dend, 4).unwrap(), vec![0, 0, 1, 0, 0, 1, 2, 2, 1, 3, 2, 2, 3, 1, 1]);
    }

    #[test]
    fn permutation_invariant_partition() {
        let corr = fixtures::matrix(&fixtures::CORR_15);
        let labels = fixtures::labels(&fixtures::LABELS_15);
        let perm: Vec<usize> = vec![14, 3, 7, 0, 11, 2, 9, 5, 13, 1, 8, 12, 4, 10, 6];
        let pc = DMatrix::from_fn(15, 15, |i, j| corr[(perm[i], perm[j])]);
        let pl: Vec<String> = perm.iter().map(|&i| labels[i].clone()).collect();
        let d0 = complete_linkage(&corr_distance(&corr).unwrap(), &labels).unwrap();
        let d1 = complete_linkage(&corr_distance(&pc).unwrap(), &pl).unwrap();
        for k in 1..=15 {
            let a0 = cut_tree(&d0, k).unwrap();
            let a1 = cut_tree(&d1, k).unwrap();
            let named = |assign: &[usize], ls: &[String]| {
                let mut p: Vec<Vec<String>> = partition(assign)
                    .into_iter()
                    .map(|c| {
                        let mut v: Vec<String> = c.into_iter().map(|i| ls[i].clone()).collect();
                        v.sort();
                        v
                    })
                    .collect();
                p.sort();
                p
            };
            assert_eq!(named(&a0, &labels), named(&a1, &pl));
        }
    }

    #[test]
    fn json_round_trip() {
        let dend = complete_linkage(&three_points(), &names(3)).unwrap();
        let text = serde_json::to_string(&dend).unwrap();
        assert_eq!(serde_json::from_str::<Dendrogram>(&text).unwrap(), dend);
    }
}
