//! Partial point-cloud sampling: patches, random-walk curves and uniform
//! random subsets, plus assembly of the full set of ensemble inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fps, knn, pairwise_knn_table, PointCloud};
use crate::rng::{child_stream, Stream};

/// Reference resolution at which the default sampling sizes apply.
pub const REFERENCE_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub n_patch: usize,
    pub n_curve: usize,
    pub n_random: usize,
    pub m_neighbors: usize,
    pub k_tilde: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { n_patch: 512, n_curve: 512, n_random: 128, m_neighbors: 40, k_tilde: 4 }
    }
}

fn scale_size(full: usize, n: usize, floor: usize) -> usize {
    let scaled = full as f64 * n as f64 / REFERENCE_POINTS as f64;
    let rounded = ((scaled / 8.0).round() as usize) * 8;
    rounded.max(floor)
}

impl SamplingParams {
    /// Defaults for clouds of `n` points. Below the reference resolution the
    /// patch, curve and random sizes shrink proportionally (multiples of 8,
    /// floors 32/32/16) so the sampled fractions of the cloud stay the same.
    pub fn for_cloud_size(n: usize) -> Self {
        let d = Self::default();
        if n >= REFERENCE_POINTS {
            return d;
        }
        Self {
            n_patch: scale_size(d.n_patch, n, 32),
            n_curve: scale_size(d.n_curve, n, 32),
            n_random: scale_size(d.n_random, n, 16),
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_patch", self.n_patch),
            ("n_curve", self.n_curve),
            ("n_random", self.n_random),
            ("m_neighbors", self.m_neighbors),
            ("k_tilde", self.k_tilde),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::BadConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Total number of ensemble members (three mechanisms).
    pub fn members(&self) -> usize {
        3 * self.k_tilde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleKind {
    Patch,
    Curve,
    Random,
}

impl SampleKind {
    pub const ALL: [SampleKind; 3] = [SampleKind::Patch, SampleKind::Curve, SampleKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            SampleKind::Patch => "patches",
            SampleKind::Curve => "curves",
            SampleKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSample {
    pub kind: SampleKind,
    pub anchor: Option<usize>,
    /// Indices into the parent cloud; curves may repeat indices.
    pub source_indices: Vec<usize>,
    pub points: PointCloud,
}

impl SubSample {
    fn build(cloud: &PointCloud, kind: SampleKind, anchor: Option<usize>, source_indices: Vec<usize>) -> Result<Self> {
        let points = cloud.select(&source_indices)?;
        Ok(Self { kind, anchor, source_indices, points })
    }

    pub fn unique_count(&self) -> usize {
        let mut idx = self.source_indices.clone();
        idx.sort_unstable();
        idx.dedup();
        idx.len()
    }
}

fn check_anchor(cloud: &PointCloud, anchor: usize) -> Result<()> {
    if anchor >= cloud.len() {
        return Err(Error::IndexOutOfRange { index: anchor, n: cloud.len() });
    }
    Ok(())
}

/// The anchor together with its `min(n_patch, N) - 1` nearest neighbors.
pub fn extract_patch(cloud: &PointCloud, anchor: usize, params: &SamplingParams) -> Result<SubSample> {
    check_anchor(cloud, anchor)?;
    let size = params.n_patch.min(cloud.len());
    let mut indices = Vec::with_capacity(size);
    indices.push(anchor);
    if size > 1 {
        indices.extend(knn(cloud, anchor, size - 1)?);
    }
    SubSample::build(cloud, SampleKind::Patch, Some(anchor), indices)
}

/// Random walk of `n_curve` steps over a precomputed neighbor table.
///
/// Each step moves to a uniformly chosen entry of the current point's
/// neighbor row; revisits are allowed and kept.
pub fn extract_curve_with_table(
    cloud: &PointCloud,
    table: &[Vec<usize>],
    anchor: usize,
    n_curve: usize,
    rng: &mut Stream,
) -> Result<SubSample> {
    check_anchor(cloud, anchor)?;
    if table.len() != cloud.len() {
        return Err(Error::LengthMismatch { left: table.len(), right: cloud.len() });
    }
    let mut walk = Vec::with_capacity(n_curve);
    let mut current = anchor;
    walk.push(current);
    while walk.len() < n_curve {
        let row = &table[current];
        current = row[rng.random_range(0..row.len())];
        walk.push(current);
    }
    SubSample::build(cloud, SampleKind::Curve, Some(anchor), walk)
}

pub fn extract_curve(cloud: &PointCloud, anchor: usize, params: &SamplingParams, rng: &mut Stream) -> Result<SubSample> {
    check_anchor(cloud, anchor)?;
    let table = pairwise_knn_table(cloud, params.m_neighbors)?;
    extract_curve_with_table(cloud, &table, anchor, params.n_curve, rng)
}

/// `k` distinct indices from `0..n`, uniform without replacement
/// (partial Fisher-Yates).
pub fn choose_distinct(n: usize, k: usize, rng: &mut Stream) -> Vec<usize> {
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

pub fn extract_random(cloud: &PointCloud, params: &SamplingParams, rng: &mut Stream) -> Result<SubSample> {
    let indices = choose_distinct(cloud.len(), params.n_random, rng);
    SubSample::build(cloud, SampleKind::Random, None, indices)
}

/// How anchors are chosen when building training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorMode {
    /// Distinct uniformly random anchors.
    Random,
    /// Farthest point sampling from a random start point.
    Fps,
}

fn choose_anchors(cloud: &PointCloud, k: usize, mode: AnchorMode, rng: &mut Stream) -> Result<Vec<usize>> {
    match mode {
        AnchorMode::Fps => {
            let start = rng.random_range(0..cloud.len());
            fps(cloud, k, start)
        }
        AnchorMode::Random => {
            if k > cloud.len() {
                return Err(Error::BadK { k, n: cloud.len(), min: 1, max: cloud.len() });
            }
            Ok(choose_distinct(cloud.len(), k, rng))
        }
    }
}

/// Builds the `3 * k_tilde` ensemble inputs ordered as patches, curves,
/// then random subsets. Anchors come from farthest point sampling.
pub fn make_ensemble_inputs(cloud: &PointCloud, params: &SamplingParams, rng: &mut Stream) -> Result<Vec<SubSample>> {
    make_inputs(cloud, params, AnchorMode::Fps, rng)
}

/// Same layout as [`make_ensemble_inputs`] with a selectable anchor rule.
pub fn make_inputs(cloud: &PointCloud, params: &SamplingParams, mode: AnchorMode, rng: &mut Stream) -> Result<Vec<SubSample>> {
    params.validate()?;
    let n = cloud.len();
    if n < params.m_neighbors + 1 {
        return Err(Error::BadK { k: params.m_neighbors, n, min: 1, max: n.saturating_sub(1) });
    }
    let anchors = choose_anchors(cloud, params.k_tilde, mode, rng)?;
    let base: u64 = rng.random();
    let table = pairwise_knn_table(cloud, params.m_neighbors)?;
    let k = params.k_tilde;
    let mut out = Vec::with_capacity(3 * k);
    for &a in &anchors {
        out.push(extract_patch(cloud, a, params)?);
    }
    for (i, &a) in anchors.iter().enumerate() {
        let mut r = child_stream(base, i as u64);
        out.push(extract_curve_with_table(cloud, &table, a, params.n_curve, &mut r)?);
    }
    for i in 0..k {
        let mut r = child_stream(base, (k + i) as u64);
        out.push(extract_random(cloud, params, &mut r)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line(n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn scaled_defaults() {
        assert_eq!(SamplingParams::for_cloud_size(1024), SamplingParams::default());
        let p = SamplingParams::for_cloud_size(256);
        assert_eq!((p.n_patch, p.n_curve, p.n_random, p.m_neighbors, p.k_tilde), (128, 128, 32, 40, 4));
        let p = SamplingParams::for_cloud_size(64);
        assert_eq!((p.n_patch, p.n_curve, p.n_random), (32, 32, 16));
    }

    #[test]
    fn patch_on_line() {
        let params = SamplingParams { n_patch: 3, ..Default::default() };
        let p = extract_patch(&line(10), 0, &params).unwrap();
        assert_eq!(p.source_indices, vec![0, 1, 2]);
        assert_eq!(p.kind, SampleKind::Patch);
        let p = extract_patch(&line(10), 4, &SamplingParams { n_patch: 50, ..Default::default() }).unwrap();
        assert_eq!(p.source_indices.len(), 10);
        assert_eq!(p.source_indices[0], 4);
    }

    #[test]
    fn curve_with_single_neighbor_oscillates() {
        let params = SamplingParams { n_curve: 4, m_neighbors: 1, ..Default::default() };
        let c = extract_curve(&line(3), 0, &params, &mut stream(1)).unwrap();
        assert_eq!(c.source_indices, vec![0, 1, 0, 1]);
        assert_eq!(c.unique_count(), 2);
        let params = SamplingParams { n_curve: 1, m_neighbors: 1, ..Default::default() };
        let c = extract_curve(&line(3), 2, &params, &mut stream(1)).unwrap();
        assert_eq!(c.source_indices, vec![2]);
    }

    #[test]
    fn random_saturates() {
        let params = SamplingParams { n_random: 100, ..Default::default() };
        let r = extract_random(&line(10), &params, &mut stream(3)).unwrap();
        let mut s = r.source_indices.clone();
        s.sort_unstable();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_eq!(r.anchor, None);
    }

    #[test]
    fn ensemble_minimal() {
        let params = SamplingParams { n_patch: 4, n_curve: 5, n_random: 3, m_neighbors: 2, k_tilde: 1 };
        let subs = make_ensemble_inputs(&line(10), &params, &mut stream(9)).unwrap();
        assert_eq!(subs.len(), 3);
        assert_eq!(subs[0].anchor, subs[1].anchor);
        assert_eq!(subs[0].source_indices[0], subs[1].source_indices[0]);
        assert_eq!(subs[2].kind, SampleKind::Random);
    }

    #[test]
    fn ensemble_requires_enough_points() {
        let params = SamplingParams { m_neighbors: 10, ..Default::default() };
        assert!(make_ensemble_inputs(&line(10), &params, &mut stream(0)).is_err());
    }
}
