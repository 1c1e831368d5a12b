//! Near-duplicate image detection by DBSCAN over image embeddings.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DedupError {
    #[error("need more than k={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    Ragged { index: usize, expected: usize, found: usize },
    #[error("embedding {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("eps must be finite and positive")]
    BadEps,
    #[error("min_pts must be at least 1")]
    BadMinPts,
    #[error("{0} ids for {1} embeddings")]
    IdCount(usize, usize),
    #[error("no post for image refs: {0:?}")]
    Unresolved(Vec<String>),
}

fn check_embeddings<E: AsRef<[f64]>>(emb: &[E]) -> Result<(), DedupError> {
    let dim = emb.first().map_or(0, |e| e.as_ref().len());
    for (index, e) in emb.iter().enumerate() {
        let e = e.as_ref();
        if e.len() != dim {
            return Err(DedupError::Ragged {
                index,
                expected: dim,
                found: e.len(),
            });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(DedupError::NonFinite { index });
        }
    }
    Ok(())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full pairwise distance matrix, computed row-parallel.
fn distance_matrix<E: AsRef<[f64]> + Sync>(emb: &[E]) -> Vec<Vec<f64>> {
    (0..emb.len())
        .into_par_iter()
        .map(|i| emb.iter().map(|e| euclidean(emb[i].as_ref(), e.as_ref())).collect())
        .collect()
}

/// Distance from every point to its k-th nearest other point, sorted
/// descending.
pub fn k_distance_curve<E: AsRef<[f64]> + Sync>(emb: &[E], k: usize) -> Result<Vec<f64>, DedupError> {
    if k == 0 {
        return Err(DedupError::ZeroK);
    }
    if emb.len() <= k {
        return Err(DedupError::TooFewPoints { n: emb.len(), k });
    }
    check_embeddings(emb)?;
    let dist = distance_matrix(emb);
    let mut curve: Vec<f64> = dist
        .into_par_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.swap_remove(i);
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect();
    curve.sort_by(|a, b| b.total_cmp(a));
    Ok(curve)
}

/// Advisory elbow of a descending k-distance curve: the value at the point of
/// maximum second difference. Operators should still inspect the curve.
pub fn advisory_elbow(curve: &[f64]) -> Option<f64> {
    if curve.len() < 3 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 1..curve.len() - 1 {
        let d2 = curve[i - 1] - 2.0 * curve[i] + curve[i + 1];
        if best.is_none_or(|(_, b)| d2 > b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| curve[i])
}

/// Cluster label per point; `NOISE` for unclustered points. Cluster ids are
/// numbered from 0 in discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<i64>,
    pub core: Vec<bool>,
}

impl Clustering {
    pub fn cluster_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Member indices per cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// DBSCAN. Neighbourhoods include the point itself and use `<= eps`; a point
/// is core when its neighbourhood holds at least `min_pts` points. Points are
/// visited in input order, so a border point reachable from two clusters
/// joins the one discovered first.
pub fn dbscan<E: AsRef<[f64]> + Sync>(emb: &[E], eps: f64, min_pts: usize) -> Result<Clustering, DedupError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(DedupError::BadEps);
    }
    if min_pts == 0 {
        return Err(DedupError::BadMinPts);
    }
    check_embeddings(emb)?;
    let n = emb.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = emb[i].as_ref();
            (0..n).filter(|&j| euclidean(a, emb[j].as_ref()) <= eps).collect()
        })
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != NOISE || !core[start] {
            continue;
        }
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(Clustering { labels, core })
}

/// Cluster id per image and the members of each cluster ordered by
/// timestamp (then id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub by_image: BTreeMap<String, i64>,
    pub clusters: BTreeMap<i64, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneResult {
    pub assignment: ClusterAssignment,
    pub kept: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

/// Keeps the earliest post of every cluster (smallest id on equal
/// timestamps) and every noise point; everything else is removed.
pub fn prune_duplicates(
    ids: &[String],
    clustering: &Clustering,
    timestamp_of: impl Fn(&str) -> Option<i64>,
) -> Result<PruneResult, DedupError> {
    if ids.len() != clustering.labels.len() {
        return Err(DedupError::IdCount(ids.len(), clustering.labels.len()));
    }
    let unresolved: Vec<String> = ids
        .iter()
        .zip(&clustering.labels)
        .filter(|(id, &l)| l != NOISE && timestamp_of(id).is_none())
        .map(|(id, _)| id.clone())
        .collect();
    if !unresolved.is_empty() {
        return Err(DedupError::Unresolved(unresolved));
    }
    let mut by_image = BTreeMap::new();
    let mut clusters: BTreeMap<i64, Vec<(i64, String)>> = BTreeMap::new();
    let mut kept = BTreeSet::new();
    for (id, &l) in ids.iter().zip(&clustering.labels) {
        by_image.insert(id.clone(), l);
        if l == NOISE {
            kept.insert(id.clone());
        } else {
            clusters.entry(l).or_default().push((timestamp_of(id).unwrap_or_default(), id.clone()));
        }
    }
    let mut removed = BTreeSet::new();
    let clusters = clusters
        .into_iter()
        .map(|(l, mut members)| {
            members.sort();
            let mut names = members.into_iter().map(|(_, id)| id);
            let first = names.next().expect("clusters are non-empty");
            kept.insert(first.clone());
            let mut ordered = vec![first];
            for id in names {
                removed.insert(id.clone());
                ordered.push(id);
            }
            (l, ordered)
        })
        .collect();
    Ok(PruneResult {
        assignment: ClusterAssignment { by_image, clusters },
        kept,
        removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_k_distance() {
        let pts = [[0.0], [1.0], [3.0]];
        assert_eq!(k_distance_curve(&pts, 1).unwrap(), vec![2.0, 1.0, 1.0]);
        assert_eq!(k_distance_curve(&[[5.0; 4]; 6], 2).unwrap(), vec![0.0; 6]);
        assert_eq!(k_distance_curve(&pts, 3), Err(DedupError::TooFewPoints { n: 3, k: 3 }));
    }

    #[test]
    fn pair_and_isolated_point() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [50.0, 0.0]];
        let c = dbscan(&pts, 2.0, 2).unwrap();
        assert_eq!(c.labels, vec![0, 0, NOISE]);
        assert!(dbscan(&[[f64::NAN]], 1.0, 2).is_err());
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // 0-1 and 3-4 are core pairs; 2 is within eps of 1 and 3 only.
        let pts = [[0.0], [1.0], [2.0], [3.0], [4.0]];
        let c = dbscan(&pts, 1.0, 3).unwrap();
        assert_eq!(c.core, vec![false, true, true, true, false]);
        assert_eq!(c.labels, vec![0, 0, 0, 0, 0]);
        // 2.0 is a border point between two clusters; the first discovered wins.
        let pts = [[0.4], [0.6], [0.8], [1.0], [2.0], [3.0], [3.2], [3.4], [3.6]];
        let c = dbscan(&pts, 1.0, 4).unwrap();
        assert!(!c.core[4]);
        assert_eq!(c.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let pts = [[3.0], [3.2], [3.4], [3.6], [2.0], [0.4], [0.6], [0.8], [1.0]];
        let c = dbscan(&pts, 1.0, 4).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn earliest_member_is_kept() {
        let ids: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
        let c = Clustering {
            labels: vec![0, 0, NOISE],
            core: vec![true, true, false],
        };
        let ts = |id: &str| match id {
            "A" => Some(10),
            "B" => Some(5),
            _ => None,
        };
        let r = prune_duplicates(&ids, &c, ts).unwrap();
        assert_eq!(r.kept, ["B", "C"].map(String::from).into());
        assert_eq!(r.removed, ["A"].map(String::from).into());
        assert_eq!(r.assignment.clusters[&0], vec!["B".to_string(), "A".to_string()]);

        let all_noise = Clustering {
            labels: vec![NOISE; 3],
            core: vec![false; 3],
        };
        assert!(prune_duplicates(&ids, &all_noise, |_| None).unwrap().removed.is_empty());
        let bad = Clustering {
            labels: vec![0, 0, 0],
            core: vec![true; 3],
        };
        assert_eq!(
            prune_duplicates(&ids, &bad, ts),
            Err(DedupError::Unresolved(vec!["C".into()]))
        );
    }

    #[test]
    fn elbow_picks_the_knee() {
        let curve = [40.0, 35.0, 30.0, 13.0, 12.0, 11.5, 11.0];
        assert_eq!(advisory_elbow(&curve), Some(13.0));
    }
}
