//! Shared oracles and criterion checks for the integration and acceptance tests.
#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use epic_core::classifier::{Architecture, PointSetModel};
use epic_core::corruptions::{apply_corruption, CorruptionSpec, Family};
use epic_core::ensemble::PredictionMatrix;
use epic_core::geometry::{dist2, fps, knn, Point, PointCloud};
use epic_core::metrics::{corruption_error, diversity_c, pointwise_importance, uniformity, FamilyErrors};
use epic_core::rng::{child_stream, stream, Stream};
use rand::Rng;

pub type Check = Result<String, String>;

/// Random cloud with ties: half the clouds sit on a small integer grid and
/// may repeat points.
pub fn random_cloud(rng: &mut Stream, n: usize) -> PointCloud {
    let grid = rng.random_bool(0.5);
    let pts: Vec<Point> = (0..n)
        .map(|_| {
            if grid {
                [rng.random_range(0..3) as f64, rng.random_range(0..3) as f64, rng.random_range(0..2) as f64]
            } else {
                [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
            }
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

pub fn brute_knn(points: &[Point], q: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> =
        (0..points.len()).filter(|&j| j != q).map(|j| (dist2(&points[j], &points[q]), j)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Recomputes every min-distance from scratch at each step.
pub fn brute_fps(points: &[Point], k: usize, start: usize) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..points.len() {
            if chosen.contains(&j) {
                continue;
            }
            let d = chosen.iter().map(|&c| dist2(&points[j], &points[c])).fold(f64::INFINITY, f64::min);
            if best.is_none() || d > best.unwrap().0 {
                best = Some((d, j));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// kNN and FPS against the brute-force oracles, every valid `k` and start.
pub fn oracle_equivalence(clouds: usize, seed: u64) -> Check {
    let t = Instant::now();
    let mut rng = stream(seed);
    let mut calls = 0usize;
    let mut mismatches = Vec::new();
    for c in 0..clouds {
        let n = rng.random_range(2..=64);
        let cloud = random_cloud(&mut rng, n);
        let pts = cloud.points();
        for q in 0..n {
            let full = brute_knn(pts, q, n - 1);
            for k in 1..n {
                calls += 1;
                if knn(&cloud, q, k).unwrap() != full[..k] {
                    mismatches.push(format!("knn cloud {c} q {q} k {k}"));
                }
            }
        }
        for start in 0..n {
            let full = brute_fps(pts, n, start);
            for k in 1..=n {
                calls += 1;
                if fps(&cloud, k, start).unwrap() != full[..k] {
                    mismatches.push(format!("fps cloud {c} start {start} k {k}"));
                }
            }
        }
    }
    let elapsed = t.elapsed();
    let detail = format!("{clouds} clouds, {calls} calls, {} mismatches, {:.2?}", mismatches.len(), elapsed);
    if mismatches.is_empty() && elapsed < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {:?}", mismatches.first()))
    }
}

/// Independent forward pass from the flat parameter vector.
///
/// Returns the mean cross-entropy and the activation pattern (every ReLU
/// sign and every pooling argmax).
pub fn oracle_loss(arch: &Architecture, theta: &[f64], batch: &[(&PointCloud, usize)]) -> (f64, Vec<usize>) {
    let mut pattern = Vec::new();
    let mut cursor = 0;
    let mut layers = |widths: &[usize]| -> Vec<(Vec<f64>, Vec<f64>, usize, usize)> {
        widths
            .windows(2)
            .map(|w| {
                let wts = theta[cursor..cursor + w[0] * w[1]].to_vec();
                cursor += w[0] * w[1];
                let b = theta[cursor..cursor + w[1]].to_vec();
                cursor += w[1];
                (wts, b, w[0], w[1])
            })
            .collect()
    };
    let enc = layers(&arch.encoder);
    let head = layers(&arch.head);
    let apply = |x: &[f64], (w, b, i, o): &(Vec<f64>, Vec<f64>, usize, usize)| -> Vec<f64> {
        (0..*o).map(|j| b[j] + (0..*i).map(|r| x[r] * w[r * o + j]).sum::<f64>()).collect()
    };
    let mut loss = 0.0;
    for (cloud, label) in batch {
        let mut feats: Vec<Vec<f64>> = Vec::new();
        for p in cloud.points() {
            let mut x = p.to_vec();
            for layer in &enc {
                x = apply(&x, layer);
                for v in x.iter_mut() {
                    pattern.push((*v > 0.0) as usize);
                    *v = v.max(0.0);
                }
            }
            feats.push(x);
        }
        let f = feats[0].len();
        let mut pooled = vec![0.0; f];
        for k in 0..f {
            let mut arg = 0;
            for r in 1..feats.len() {
                if feats[r][k] > feats[arg][k] {
                    arg = r;
                }
            }
            pattern.push(arg);
            pooled[k] = feats[arg][k];
        }
        let mut z = pooled;
        for (li, layer) in head.iter().enumerate() {
            z = apply(&z, layer);
            if li + 1 < head.len() {
                for v in z.iter_mut() {
                    pattern.push((*v > 0.0) as usize);
                    *v = v.max(0.0);
                }
            }
        }
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[*label];
    }
    (loss / batch.len() as f64, pattern)
}

pub struct GradientResult {
    pub max_rel_error: f64,
    pub compared: usize,
    pub excluded: usize,
    pub max_forward_diff: f64,
}

/// Central differences with `h` on tiny models; entries whose activation
/// pattern changes between `theta - h` and `theta + h` are excluded.
pub fn gradient_check(models: usize, h: f64, seed: u64) -> GradientResult {
    let arch = Architecture::new(&[6, 8], &[5], 4).unwrap();
    let mut out = GradientResult { max_rel_error: 0.0, compared: 0, excluded: 0, max_forward_diff: 0.0 };
    for m in 0..models {
        let mut rng = child_stream(seed, m as u64);
        let model = PointSetModel::new(&arch, &mut rng).unwrap();
        let clouds: Vec<PointCloud> = (0..2)
            .map(|_| {
                PointCloud::new(
                    (0..16)
                        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let batch: Vec<(&PointCloud, usize)> = clouds.iter().map(|c| (c, rng.random_range(0..4))).collect();
        let (loss, grads) = model.loss_and_gradients(&batch);
        let analytic = grads.to_flat();
        let theta = model.to_flat();
        let (oracle, base_pattern) = oracle_loss(&arch, &theta, &batch);
        out.max_forward_diff = out.max_forward_diff.max((oracle - loss).abs());
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let (lp, pp) = oracle_loss(&arch, &plus, &batch);
            let (lm, pm) = oracle_loss(&arch, &minus, &batch);
            if pp != base_pattern || pm != base_pattern {
                out.excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            out.max_rel_error = out.max_rel_error.max(rel);
            out.compared += 1;
        }
    }
    out
}

pub fn gradient_correctness() -> Check {
    let t = Instant::now();
    let r = gradient_check(20, 1e-4, 11);
    let elapsed = t.elapsed();
    let detail = format!(
        "max rel error {:.3e} over {} entries ({} excluded at kinks), forward diff {:.1e}, {:.2?}",
        r.max_rel_error, r.compared, r.excluded, r.max_forward_diff, elapsed
    );
    if r.max_rel_error < 1e-3 && r.max_forward_diff < 1e-10 && r.compared > 0 && elapsed < Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn small_model(seed: u64, classes: usize) -> PointSetModel {
    PointSetModel::new(&Architecture::new(&[16, 32], &[16], classes).unwrap(), &mut stream(seed)).unwrap()
}

pub fn softmax_normalized() -> Check {
    let mut rng = stream(21);
    let mut worst: f64 = 0.0;
    for s in 0..50 {
        let model = small_model(s, 2 + (s as usize % 7));
        let n = rng.random_range(1..100);
        let cloud = random_cloud(&mut rng, n);
        let p = model.forward(&cloud).prediction;
        worst = worst.max((p.probs().iter().sum::<f64>() - 1.0).abs());
        if p.probs().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(format!("probability outside [0,1] for model {s}"));
        }
    }
    if worst <= 1e-6 {
        Ok(format!("max |sum - 1| = {worst:.1e} over 50 models"))
    } else {
        Err(format!("max |sum - 1| = {worst:.1e}"))
    }
}

pub fn permutation_and_duplicate_invariance() -> Check {
    let mut rng = stream(22);
    for s in 0..50 {
        let model = small_model(100 + s, 5);
        let n = rng.random_range(2..200);
        let cloud = random_cloud(&mut rng, n);
        let base = model.forward(&cloud).prediction;
        let mut pts = cloud.points().to_vec();
        for i in (1..pts.len()).rev() {
            pts.swap(i, rng.random_range(0..=i));
        }
        let permuted = model.forward(&PointCloud::new(pts.clone()).unwrap()).prediction;
        if permuted != base {
            return Err(format!("permutation changed the prediction (model {s}, N {n})"));
        }
        for _ in 0..rng.random_range(1..50) {
            let j = rng.random_range(0..n);
            pts.push(pts[j]);
        }
        let duplicated = model.forward(&PointCloud::new(pts).unwrap()).prediction;
        if duplicated != base {
            return Err(format!("duplicates changed the prediction (model {s}, N {n})"));
        }
    }
    Ok("bit-identical over 50 models".into())
}

pub fn importance_sums_to_features() -> Check {
    let mut rng = stream(23);
    for s in 0..30 {
        let model = small_model(200 + s, 3);
        let n = rng.random_range(1..100);
        let feats = model.pointwise_features(&random_cloud(&mut rng, n));
        let imp = pointwise_importance(&feats);
        if imp.len() != n || imp.iter().sum::<usize>() != feats.ncols() {
            return Err(format!("sum of importance {} != F {}", imp.iter().sum::<usize>(), feats.ncols()));
        }
    }
    Ok("sum Imp = F over 30 clouds".into())
}

pub fn uniformity_bounds() -> Check {
    let mut rng = stream(24);
    for i in 0..5u64 {
        let cloud = PointCloud::new(
            (0..256)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect(),
        )
        .unwrap();
        if uniformity(&cloud, &cloud, 0.0) != 0.0 {
            return Err("u(identity) != 0".into());
        }
        for spec in CorruptionSpec::all() {
            let out = apply_corruption(spec, &cloud, &mut child_stream(i, spec.ordinal())).unwrap();
            for eps in [0.0, 0.05] {
                let u = uniformity(&cloud, &out, eps);
                if !(0.0..=1.0).contains(&u) {
                    return Err(format!("u = {u} outside [0,1] for {}", spec.dir_name()));
                }
            }
            if matches!(spec.family, Family::Rotate | Family::Scale) && uniformity(&cloud, &out, 0.0) != 1.0 {
                return Err(format!("u != 1 for {}", spec.dir_name()));
            }
        }
    }
    Ok("u in [0,1], u(identity) = 0, u(rotate/scale) = 1".into())
}

pub fn duplicated_members_correlate() -> Check {
    let mut rng = stream(25);
    let mut matrices = Vec::new();
    for _ in 0..10 {
        let mut row: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= z);
        let pv = epic_core::classifier::PredictionVector(row);
        matrices.push(PredictionMatrix::new(vec![pv; 4]).unwrap());
    }
    let c = diversity_c(&matrices).map_err(|e| e.to_string())?;
    if (c - 1.0).abs() < 1e-12 {
        Ok(format!("c = {c}"))
    } else {
        Err(format!("c = {c}"))
    }
}

pub fn self_referenced_mce() -> Check {
    let mut rng = stream(26);
    let mut errors = FamilyErrors::new();
    for f in Family::ALL {
        errors.insert(f, std::array::from_fn(|_| rng.random_range(0.01..1.0)));
    }
    let r = corruption_error(&errors, &errors).map_err(|e| e.to_string())?;
    if r.mce == 1.0 {
        Ok("mCE = 1 exactly".into())
    } else {
        Err(format!("mCE = {}", r.mce))
    }
}

pub fn exact_invariants() -> Vec<(&'static str, Check)> {
    vec![
        ("softmax normalization", softmax_normalized()),
        ("permutation/duplicate invariance", permutation_and_duplicate_invariance()),
        ("importance sums to F", importance_sums_to_features()),
        ("uniformity bounds", uniformity_bounds()),
        ("duplicated-member diversity", duplicated_members_correlate()),
        ("self-referenced mCE", self_referenced_mce()),
    ]
}

pub fn cli(args: &[&str]) -> i32 {
    epic_core::cli::run(std::iter::once("epic").chain(args.iter().copied()))
}

/// Settings for quick end-to-end runs.
pub const SMALL: &[&str] = &[
    "--set", "train_size=48",
    "--set", "test_size=24",
    "--set", "points_per_cloud=128",
    "--set", "epochs=2",
    "--set", "diversity_members=3",
    "--set", "importance_samples=2",
    "--k-tilde", "2",
];

pub fn run_stages(out: &Path, stages: &[&str], extra: &[&str]) -> Result<(), String> {
    let out = out.to_str().unwrap();
    for stage in stages {
        let mut args = vec![*stage, "--out", out];
        args.extend_from_slice(extra);
        if cli(&args) != 0 {
            return Err(format!("stage {stage} failed"));
        }
    }
    Ok(())
}
