//! Geometric kernels: point clouds, normalization, nearest neighbors and
//! farthest point sampling.
//!
//! Distances are compared as squared Euclidean distances and every tie is
//! broken by ascending point index, so all selections are deterministic.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// An ordered, nonempty set of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Materializes the points at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let n = self.len();
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            out.push(*self.points.get(i).ok_or(Error::IndexOutOfRange { index: i, n })?);
        }
        PointCloud::new(out)
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        let n = self.len() as f64;
        c.map(|v| v / n)
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange { index, n: self.len() });
        }
        Ok(())
    }
}

/// Translates the centroid to the origin and scales so the farthest point
/// has unit norm. Point order is preserved.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Result<PointCloud> {
    let c = cloud.centroid();
    let centered: Vec<Point> = cloud
        .points()
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    let radius = centered.iter().map(|p| dist2(p, &[0.0; 3])).fold(0.0, f64::max).sqrt();
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::DegenerateCloud);
    }
    PointCloud::new(centered.into_iter().map(|p| p.map(|v| v / radius)).collect())
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn check_knn_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k + 1 > n {
        return Err(Error::BadK { k, n, min: 1, max: n.saturating_sub(1) });
    }
    Ok(())
}

fn knn_unchecked(points: &[Point], query: usize, k: usize, scratch: &mut Vec<(f64, usize)>) -> Vec<usize> {
    let q = points[query];
    scratch.clear();
    scratch.extend(
        points
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != query)
            .map(|(i, p)| (dist2(p, &q), i)),
    );
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, by_distance_then_index);
        scratch.truncate(k);
    }
    scratch.sort_unstable_by(by_distance_then_index);
    scratch.iter().map(|&(_, i)| i).collect()
}

/// The `k` nearest neighbors of `query_index`, excluding the query itself,
/// sorted by ascending distance with ties broken by ascending index.
pub fn knn(cloud: &PointCloud, query_index: usize, k: usize) -> Result<Vec<usize>> {
    cloud.check_index(query_index)?;
    check_knn_k(cloud.len(), k)?;
    Ok(knn_unchecked(cloud.points(), query_index, k, &mut Vec::new()))
}

/// Row `i` holds `knn(cloud, i, k)`.
pub fn pairwise_knn_table(cloud: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    check_knn_k(cloud.len(), k)?;
    let mut scratch = Vec::with_capacity(cloud.len());
    Ok((0..cloud.len()).map(|i| knn_unchecked(cloud.points(), i, k, &mut scratch)).collect())
}

/// Greedy farthest point sampling starting at `start_index`.
///
/// Each step picks the unselected point maximizing the minimum squared
/// distance to the points selected so far; ties go to the lowest index.
pub fn fps(cloud: &PointCloud, k: usize, start_index: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    cloud.check_index(start_index)?;
    if k < 1 || k > n {
        return Err(Error::BadK { k, n, min: 1, max: n });
    }
    let pts = cloud.points();
    let mut min_d = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut out = Vec::with_capacity(k);
    let mut last = start_index;
    out.push(last);
    selected[last] = true;
    while out.len() < k {
        let anchor = pts[last];
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            let d = dist2(&pts[i], &anchor);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if !selected[i] && best.is_none_or(|(bd, _)| min_d[i] > bd) {
                best = Some((min_d[i], i));
            }
        }
        let (_, next) = best.expect("k <= n leaves an unselected point");
        selected[next] = true;
        out.push(next);
        last = next;
    }
    Ok(out)
}
