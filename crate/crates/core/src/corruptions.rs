//! Seven corruption families at five severities each.
//!
//! Schedules (s = severity):
//!
//! | family      | effect                                                         |
//! |-------------|----------------------------------------------------------------|
//! | Scale       | per-axis factors uniform in `[1/r, r]`, `r = 1 + 0.2 s`         |
//! | Jitter      | Gaussian noise, `sigma = 0.01 s`, on every coordinate           |
//! | Rotate      | angle `s * pi / 12` about a uniformly random axis               |
//! | DropGlobal  | removes `floor(0.15 s N)` uniformly chosen points               |
//! | DropLocal   | `s` clusters of `floor(0.15 N)` nearest surviving points        |
//! | AddGlobal   | appends `floor(0.05 s N)` points uniform in the unit ball       |
//! | AddLocal    | `s` Gaussian blobs (`sigma = 0.05`) of `floor(0.05 N)` points    |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledCloud;
use crate::error::{Error, Result};
use crate::geometry::{dist2, Point, PointCloud};
use crate::rng::{child_seed, stream, Stream};
use crate::sampling::choose_distinct;

/// Smallest cloud a drop corruption may leave behind.
pub const MIN_REMAINING: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Scale,
    Jitter,
    Rotate,
    DropGlobal,
    DropLocal,
    AddGlobal,
    AddLocal,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Scale,
        Family::Jitter,
        Family::Rotate,
        Family::DropGlobal,
        Family::DropLocal,
        Family::AddGlobal,
        Family::AddLocal,
    ];

    /// Families that touch only part of the cloud (plus jitter, whose
    /// per-point displacement is small).
    pub const NONUNIFORM: [Family; 5] =
        [Family::DropGlobal, Family::DropLocal, Family::AddGlobal, Family::AddLocal, Family::Jitter];

    pub fn name(self) -> &'static str {
        match self {
            Family::Scale => "scale",
            Family::Jitter => "jitter",
            Family::Rotate => "rotate",
            Family::DropGlobal => "dropout_global",
            Family::DropLocal => "dropout_local",
            Family::AddGlobal => "add_global",
            Family::AddLocal => "add_local",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::BadConfig(format!("unknown corruption family '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub family: Family,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(family: Family, severity: u8) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::BadSeverity(severity));
        }
        Ok(Self { family, severity })
    }

    /// All 35 family/severity combinations in family-major order.
    pub fn all() -> Vec<CorruptionSpec> {
        Family::ALL
            .into_iter()
            .flat_map(|family| (1..=5).map(move |severity| CorruptionSpec { family, severity }))
            .collect()
    }

    /// Directory name `<family>_<severity>`.
    pub fn dir_name(&self) -> String {
        format!("{}_{}", self.family.name(), self.severity)
    }

    /// Stable ordinal in `0..35`, used for seed derivation.
    pub fn ordinal(&self) -> u64 {
        let f = Family::ALL.iter().position(|&f| f == self.family).unwrap() as u64;
        f * 5 + u64::from(self.severity - 1)
    }

    /// Human-readable schedule, recorded in corruption manifests.
    pub fn schedule(&self) -> String {
        let s = f64::from(self.severity);
        match self.family {
            Family::Scale => format!("anisotropic scale, factors uniform in [1/{r}, {r}]", r = 1.0 + 0.2 * s),
            Family::Jitter => format!("gaussian jitter, sigma={}", 0.01 * s),
            Family::Rotate => format!("rotation by {} rad about a random axis", s * std::f64::consts::PI / 12.0),
            Family::DropGlobal => format!("drop {:.2} of points uniformly", 0.15 * s),
            Family::DropLocal => format!("drop {} clusters of 0.15 N nearest points", self.severity),
            Family::AddGlobal => format!("add {:.2} N points uniform in unit ball", 0.05 * s),
            Family::AddLocal => format!("add {} gaussian blobs (sigma=0.05) of 0.05 N points", self.severity),
        }
    }
}

fn random_unit_vector(rng: &mut Stream) -> Point {
    loop {
        let v: Point = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let norm = dist2(&v, &[0.0; 3]).sqrt();
        if norm > 1e-12 {
            return v.map(|c| c / norm);
        }
    }
}

/// Rodrigues rotation of `p` by `angle` about unit `axis`.
pub(crate) fn rotate(p: &Point, axis: &Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    let [kx, ky, kz] = *axis;
    let dot = kx * p[0] + ky * p[1] + kz * p[2];
    let cross = [ky * p[2] - kz * p[1], kz * p[0] - kx * p[2], kx * p[1] - ky * p[0]];
    [
        p[0] * c + cross[0] * s + kx * dot * (1.0 - c),
        p[1] * c + cross[1] * s + ky * dot * (1.0 - c),
        p[2] * c + cross[2] * s + kz * dot * (1.0 - c),
    ]
}

fn uniform_in_ball(rng: &mut Stream) -> Point {
    loop {
        let p: Point = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        if dist2(&p, &[0.0; 3]) <= 1.0 {
            return p;
        }
    }
}

/// Applies one corruption. Drop families keep the surviving points in their
/// original order; add families append after the untouched originals.
pub fn apply_corruption(spec: CorruptionSpec, cloud: &PointCloud, rng: &mut Stream) -> Result<PointCloud> {
    if !(1..=5).contains(&spec.severity) {
        return Err(Error::BadSeverity(spec.severity));
    }
    let s = f64::from(spec.severity);
    let pts = cloud.points();
    let n = pts.len();
    let out: Vec<Point> = match spec.family {
        Family::Scale => {
            let r = 1.0 + 0.2 * s;
            let f: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0 / r..=r));
            pts.iter().map(|p| [p[0] * f[0], p[1] * f[1], p[2] * f[2]]).collect()
        }
        Family::Jitter => {
            let normal = Normal::new(0.0, 0.01 * s).expect("positive sigma");
            pts.iter().map(|p| p.map(|c| c + normal.sample(rng))).collect()
        }
        Family::Rotate => {
            let axis = random_unit_vector(rng);
            let angle = s * std::f64::consts::PI / 12.0;
            pts.iter().map(|p| rotate(p, &axis, angle)).collect()
        }
        Family::DropGlobal => {
            let drop = (n as f64 * 0.15 * s).floor() as usize;
            let remaining = n.saturating_sub(drop);
            if remaining < MIN_REMAINING {
                return Err(Error::TooFewPoints { family: spec.family.name().into(), severity: spec.severity, remaining });
            }
            let mut removed = vec![false; n];
            for i in choose_distinct(n, drop, rng) {
                removed[i] = true;
            }
            keep(pts, &removed)
        }
        Family::DropLocal => {
            if n < MIN_REMAINING {
                return Err(Error::TooFewPoints { family: spec.family.name().into(), severity: spec.severity, remaining: n });
            }
            let cluster = (n as f64 * 0.15).floor() as usize;
            let budget = (cluster * spec.severity as usize).min(n - MIN_REMAINING);
            let mut removed = vec![false; n];
            let mut total = 0;
            for _ in 0..spec.severity {
                if total >= budget {
                    break;
                }
                let alive: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
                let center = pts[alive[rng.random_range(0..alive.len())]];
                let mut by_dist: Vec<(f64, usize)> = alive.iter().map(|&i| (dist2(&pts[i], &center), i)).collect();
                by_dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let take = cluster.min(budget - total);
                for &(_, i) in &by_dist[..take] {
                    removed[i] = true;
                }
                total += take;
            }
            keep(pts, &removed)
        }
        Family::AddGlobal => {
            let add = (n as f64 * 0.05 * s).floor() as usize;
            let mut out = pts.to_vec();
            out.extend((0..add).map(|_| uniform_in_ball(rng)));
            out
        }
        Family::AddLocal => {
            let per_blob = (n as f64 * 0.05).floor() as usize;
            let normal = Normal::new(0.0, 0.05).expect("positive sigma");
            let mut out = pts.to_vec();
            for _ in 0..spec.severity {
                let c = pts[rng.random_range(0..n)];
                for _ in 0..per_blob {
                    out.push([c[0] + normal.sample(rng), c[1] + normal.sample(rng), c[2] + normal.sample(rng)]);
                }
            }
            out
        }
    };
    PointCloud::new(out)
}

fn keep(pts: &[Point], removed: &[bool]) -> Vec<Point> {
    pts.iter().zip(removed).filter(|(_, &r)| !r).map(|(p, _)| *p).collect()
}

/// Corrupts every sample of `dataset` under all 35 specs. Sample `i` under
/// spec `c` draws from its own stream derived from `seed`, `c` and `i`.
pub fn corrupted_test_set(dataset: &[LabeledCloud], seed: u64) -> Result<BTreeMap<CorruptionSpec, Vec<LabeledCloud>>> {
    if dataset.is_empty() {
        return Err(Error::EmptyEval);
    }
    CorruptionSpec::all()
        .into_iter()
        .map(|spec| Ok((spec, corrupt_dataset(spec, dataset, seed)?)))
        .collect()
}

pub fn corrupt_dataset(spec: CorruptionSpec, dataset: &[LabeledCloud], seed: u64) -> Result<Vec<LabeledCloud>> {
    let spec_seed = child_seed(seed, spec.ordinal());
    dataset
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(child_seed(spec_seed, i as u64));
            Ok(LabeledCloud {
                cloud: apply_corruption(spec, &s.cloud, &mut rng)?,
                label: s.label,
                sample_id: s.sample_id.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sphere_cloud(n: usize, seed: u64) -> PointCloud {
        let mut r = stream(seed);
        let pts = (0..n).map(|_| random_unit_vector(&mut r)).collect();
        PointCloud::new(pts).unwrap()
    }

    fn spec(f: Family, s: u8) -> CorruptionSpec {
        CorruptionSpec::new(f, s).unwrap()
    }

    #[test]
    fn drop_global_count() {
        let c = sphere_cloud(256, 1);
        let out = apply_corruption(spec(Family::DropGlobal, 2), &c, &mut stream(2)).unwrap();
        assert_eq!(out.len(), 180);
    }

    #[test]
    fn drop_global_too_few() {
        let c = sphere_cloud(64, 1);
        let err = apply_corruption(spec(Family::DropGlobal, 5), &c, &mut stream(2)).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints { remaining: 16, .. }));
    }

    #[test]
    fn drop_local_count_and_cap() {
        let c = sphere_cloud(256, 1);
        let out = apply_corruption(spec(Family::DropLocal, 3), &c, &mut stream(2)).unwrap();
        assert_eq!(out.len(), 256 - 3 * 38);
        let c = sphere_cloud(64, 1);
        let out = apply_corruption(spec(Family::DropLocal, 5), &c, &mut stream(2)).unwrap();
        assert_eq!(out.len(), 32);
    }

    #[test]
    fn add_global_prefix() {
        let c = sphere_cloud(256, 1);
        let out = apply_corruption(spec(Family::AddGlobal, 1), &c, &mut stream(2)).unwrap();
        assert_eq!(out.len(), 268);
        assert_eq!(&out.points()[..256], c.points());
        assert!(out.points()[256..].iter().all(|p| dist2(p, &[0.0; 3]) <= 1.0));
    }

    #[test]
    fn add_local_prefix_and_count() {
        let c = sphere_cloud(256, 1);
        let out = apply_corruption(spec(Family::AddLocal, 4), &c, &mut stream(2)).unwrap();
        assert_eq!(out.len(), 256 + 4 * 12);
        assert_eq!(&out.points()[..256], c.points());
    }

    #[test]
    fn rotate_is_isometry() {
        let c = sphere_cloud(64, 4);
        for s in 1..=5 {
            let out = apply_corruption(spec(Family::Rotate, s), &c, &mut stream(s as u64)).unwrap();
            for i in 0..64 {
                for j in 0..64 {
                    let a = dist2(&c.points()[i], &c.points()[j]).sqrt();
                    let b = dist2(&out.points()[i], &out.points()[j]).sqrt();
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn severity_bounds() {
        assert!(CorruptionSpec::new(Family::Jitter, 0).is_err());
        assert!(CorruptionSpec::new(Family::Jitter, 6).is_err());
        assert_eq!(CorruptionSpec::all().len(), 35);
        assert_eq!("add_local".parse::<Family>().unwrap(), Family::AddLocal);
    }
}
