//! Lloyd's k-means over sparse vectors, with an incremental mode in which a
//! set of leading centroids is frozen and only the new ones are learned.

use std::collections::HashMap;

use rand::distr::{weighted::WeightedIndex, Distribution as _};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sparse::SparseVector;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("number of new clusters must be positive")]
    NonPositiveK,
    #[error("{k} clusters requested for {points} points")]
    TooManyClusters { k: usize, points: usize },
    #[error("cluster {0} does not exist")]
    UnknownCluster(usize),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
}

/// A labelled point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: String,
    pub vector: SparseVector,
}

impl Point {
    pub fn new(id: impl Into<String>, vector: SparseVector) -> Self {
        Point {
            id: id.into(),
            vector,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<SparseVector>,
    /// Ids of the clustered points, in input order.
    pub ids: Vec<String>,
    /// Cluster index of each point, aligned with `ids`.
    pub assignment: Vec<usize>,
    /// Centroids `0..fixed_count` are the frozen ones.
    pub fixed_count: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id).map(|p| self.assignment[p])
    }

    /// Id → cluster lookup table.
    pub fn assignment_map(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.assignment.iter().copied())
            .collect()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = &str> + '_ {
        self.ids
            .iter()
            .zip(&self.assignment)
            .filter(move |(_, &c)| c == cluster)
            .map(|(id, _)| id.as_str())
    }

    pub fn is_fixed(&self, cluster: usize) -> bool {
        cluster < self.fixed_count
    }
}

/// Plain k-means with k-means++ seeding.
pub fn kmeans(
    points: &[Point],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Clustering, ClusterError> {
    incremental_kmeans(points, &[], k, seed, max_iter, tol)
}

/// k-means in which `fixed` centroids take part in assignment but are never
/// updated; `k_new` further centroids are seeded with k-means++ (distances
/// measured against the fixed centroids too) and refined by Lloyd steps.
///
/// Ties in assignment go to the lowest cluster index, so a point sitting
/// exactly on a frozen centroid always joins the frozen cluster. A new
/// cluster left empty is re-seeded at the point farthest from its current
/// centroid, taken from a cluster with more than one member.
pub fn incremental_kmeans(
    points: &[Point],
    fixed: &[SparseVector],
    k_new: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Clustering, ClusterError> {
    if k_new == 0 {
        return Err(ClusterError::NonPositiveK);
    }
    if k_new > points.len() {
        return Err(ClusterError::TooManyClusters {
            k: k_new,
            points: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<SparseVector> = fixed.to_vec();
    seed_plus_plus(points, &mut centroids, k_new, &mut rng);

    let fixed_count = fixed.len();
    let mut assignment = vec![0usize; points.len()];
    let mut dist = vec![0.0f64; points.len()];
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        assign_and_repair(points, &mut centroids, fixed_count, &mut assignment, &mut dist);
        objective_trace.push(dist.iter().sum());

        let mut shift: f64 = 0.0;
        for c in fixed_count..centroids.len() {
            let members = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| &p.vector);
            let mut members = members.peekable();
            if members.peek().is_none() {
                continue;
            }
            let updated = SparseVector::mean(members);
            shift = shift.max(updated.distance(&centroids[c]));
            centroids[c] = updated;
        }
        if shift < tol {
            break;
        }
    }
    assign_and_repair(points, &mut centroids, fixed_count, &mut assignment, &mut dist);
    objective_trace.push(dist.iter().sum());

    Ok(Clustering {
        centroids,
        ids: points.iter().map(|p| p.id.clone()).collect(),
        assignment,
        fixed_count,
        objective_trace,
        iterations,
    })
}

fn seed_plus_plus(
    points: &[Point],
    centroids: &mut Vec<SparseVector>,
    k_new: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| nearest(&p.vector, centroids).1)
        .collect();
    for _ in 0..k_new {
        let pick = if centroids.is_empty() || d2.iter().all(|&d| d == 0.0) {
            rng.random_range(0..points.len())
        } else {
            WeightedIndex::new(&d2)
                .expect("weights are non-negative with a positive sum")
                .sample(rng)
        };
        let c = points[pick].vector.clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(p.vector.sq_distance(&c));
        }
        centroids.push(c);
    }
}

/// Nearest centroid and its squared distance; ties go to the lower index.
fn nearest(v: &SparseVector, centroids: &[SparseVector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = v.sq_distance(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Point], centroids: &[SparseVector], assignment: &mut [usize], dist: &mut [f64]) {
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(&p.vector, centroids);
        assignment[i] = c;
        dist[i] = d;
    }
}

/// Assigns points, re-seeding empty new clusters until every point sits
/// with its nearest centroid or no further repair is possible.
fn assign_and_repair(
    points: &[Point],
    centroids: &mut [SparseVector],
    fixed_count: usize,
    assignment: &mut [usize],
    dist: &mut [f64],
) {
    for _ in 0..=centroids.len() {
        assign(points, centroids, assignment, dist);
        if !repair_empty(points, centroids, fixed_count, assignment, dist) {
            return;
        }
    }
    assign(points, centroids, assignment, dist);
}

/// Returns whether any centroid was moved.
fn repair_empty(
    points: &[Point],
    centroids: &mut [SparseVector],
    fixed_count: usize,
    assignment: &mut [usize],
    dist: &mut [f64],
) -> bool {
    let mut moved = false;
    let mut sizes = vec![0usize; centroids.len()];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for c in fixed_count..centroids.len() {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1 && dist[i] > 0.0)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { continue };
        sizes[assignment[i]] -= 1;
        sizes[c] = 1;
        centroids[c] = points[i].vector.clone();
        assignment[i] = c;
        dist[i] = 0.0;
        moved = true;
    }
    moved
}

/// Member of `cluster` closest to its centroid; ties go to the smallest id.
pub fn nearest_member<'a>(
    clustering: &Clustering,
    cluster: usize,
    points: &'a [Point],
) -> Result<&'a str, ClusterError> {
    let centroid = clustering
        .centroids
        .get(cluster)
        .ok_or(ClusterError::UnknownCluster(cluster))?;
    let map = clustering.assignment_map();
    points
        .iter()
        .filter(|p| map.get(p.id.as_str()) == Some(&cluster))
        .map(|p| (p.vector.sq_distance(centroid), p.id.as_str()))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
        .ok_or(ClusterError::EmptyCluster(cluster))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Point::new(format!("p{i:02}"), SparseVector::from_dense(&[x, y])))
            .collect()
    }

    fn brute_nearest(p: &SparseVector, centroids: &[SparseVector]) -> f64 {
        centroids
            .iter()
            .map(|c| p.sq_distance(c))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let p = pts(&[(0.0, 0.0), (5.0, 1.0), (2.0, 9.0), (-3.0, 4.0)]);
        let c = kmeans(&p, 4, 7, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let mut seen = c.assignment.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(*c.objective_trace.last().unwrap(), 0.0);
    }

    #[test]
    fn separates_two_blobs() {
        let mut coords = Vec::new();
        for i in 0..10 {
            coords.push((0.1 * i as f64, 0.0));
            coords.push((100.0 + 0.1 * i as f64, 50.0));
        }
        let p = pts(&coords);
        let c = kmeans(&p, 2, 3, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        for (i, &a) in c.assignment.iter().enumerate() {
            assert_eq!(a, c.assignment[i % 2]);
        }
        assert_ne!(c.assignment[0], c.assignment[1]);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = pts(&[(0.0, 1.0), (3.0, 1.0), (2.0, 2.0), (8.0, 1.0), (9.0, 9.0), (1.0, 7.0)]);
        let a = kmeans(&p, 3, 11, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let b = kmeans(&p, 3, 11, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_k() {
        let p = pts(&[(0.0, 0.0)]);
        assert_eq!(kmeans(&p, 0, 0, 10, 1e-6), Err(ClusterError::NonPositiveK));
        assert_eq!(
            kmeans(&p, 2, 0, 10, 1e-6),
            Err(ClusterError::TooManyClusters { k: 2, points: 1 })
        );
    }

    #[test]
    fn new_centroid_takes_far_point() {
        let mut coords = vec![(0.0, 0.0); 5];
        coords.push((10.0, 10.0));
        let p = pts(&coords);
        let origin = SparseVector::new();
        let c = incremental_kmeans(&p, &[origin.clone()], 1, 0, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert_eq!(c.centroids[0], origin);
        assert_eq!(c.centroids[1], SparseVector::from_dense(&[10.0, 10.0]));
        assert_eq!(c.cluster_of("p05"), Some(1));
        assert!(c.members(0).count() == 5);
    }

    #[test]
    fn fixed_centroid_is_returned_unchanged() {
        let p = pts(&[(0.0, 0.0), (0.5, 0.1), (4.0, 4.0), (4.2, 3.9), (9.0, 0.0)]);
        let fixed = SparseVector::from_dense(&[0.3, 0.3]);
        for _ in 0..2 {
            let c = incremental_kmeans(&p, &[fixed.clone()], 2, 5, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
            assert_eq!(c.centroids[0], fixed);
            assert_eq!(c.fixed_count, 1);
        }
    }

    #[test]
    fn empty_fixed_matches_plain() {
        let p = pts(&[(0.0, 1.0), (3.0, 1.0), (2.0, 2.0), (8.0, 1.0)]);
        assert_eq!(
            incremental_kmeans(&p, &[], 2, 9, 100, 1e-6).unwrap(),
            kmeans(&p, 2, 9, 100, 1e-6).unwrap()
        );
    }

    #[test]
    fn duplicates_never_yield_nan() {
        let p = pts(&[(1.0, 1.0); 6]);
        let c = kmeans(&p, 3, 1, 100, 1e-6).unwrap();
        for centroid in &c.centroids {
            assert!(centroid.entries().iter().all(|(_, w)| w.is_finite()));
        }
    }

    #[test]
    fn nearest_member_rules() {
        let p = pts(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let c = Clustering {
            centroids: vec![SparseVector::new()],
            ids: p.iter().map(|p| p.id.clone()).collect(),
            assignment: vec![0, 0, 0],
            fixed_count: 0,
            objective_trace: vec![],
            iterations: 0,
        };
        assert_eq!(nearest_member(&c, 0, &p).unwrap(), "p00");
        assert_eq!(nearest_member(&c, 1, &p), Err(ClusterError::UnknownCluster(1)));

        let tie = vec![
            Point::new("b", SparseVector::from_dense(&[1.0])),
            Point::new("a", SparseVector::from_dense(&[-1.0])),
        ];
        let c = Clustering {
            centroids: vec![SparseVector::new(), SparseVector::from_dense(&[50.0])],
            ids: vec!["b".into(), "a".into()],
            assignment: vec![0, 0],
            fixed_count: 0,
            objective_trace: vec![],
            iterations: 0,
        };
        assert_eq!(nearest_member(&c, 0, &tie).unwrap(), "a");
        assert_eq!(nearest_member(&c, 1, &tie), Err(ClusterError::EmptyCluster(1)));

        let single = kmeans(&tie[..1], 1, 0, 10, 1e-6).unwrap();
        assert_eq!(nearest_member(&single, 0, &tie[..1]).unwrap(), "b");
    }

    proptest! {
        #[test]
        fn lloyd_invariants(
            coords in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 3..40),
            n_fixed in 0usize..3,
            k in 1usize..5,
            seed in any::<u64>(),
        ) {
            let p = pts(&coords);
            let k = k.min(p.len());
            let fixed: Vec<SparseVector> = (0..n_fixed)
                .map(|i| SparseVector::from_dense(&[i as f64 * 7.0 - 7.0, 3.0]))
                .collect();
            let c = incremental_kmeans(&p, &fixed, k, seed, 100, 1e-9).unwrap();
            for w in c.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
            }
            for (i, f) in fixed.iter().enumerate() {
                prop_assert_eq!(&c.centroids[i], f);
            }
            for (pt, &a) in p.iter().zip(&c.assignment) {
                let d = pt.vector.sq_distance(&c.centroids[a]);
                prop_assert!(d <= brute_nearest(&pt.vector, &c.centroids) + 1e-9);
            }
            for centroid in &c.centroids {
                prop_assert!(centroid.entries().iter().all(|(_, w)| w.is_finite()));
            }
        }
    }
}
