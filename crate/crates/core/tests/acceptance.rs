//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! The trend criteria run the full default pipeline once, which takes
//! several minutes.

mod common;

use std::time::{Duration, Instant};

use common::{run_stages, Check, SMALL};
use epic_core::cli::commands::Summary;

const NONUNIFORM: [&str; 5] = ["dropout_global", "dropout_local", "add_global", "add_local", "jitter"];

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let stages = ["gen-data", "train", "corrupt", "eval"];
    run_stages(a.path(), &stages, SMALL)?;
    run_stages(b.path(), &stages, SMALL)?;
    for file in ["eval/report.json", "eval/report.csv"] {
        let x = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(file)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{file} differs between runs"));
        }
    }
    Ok("eval/report.json and eval/report.csv identical across two runs".into())
}

fn family_sum(summary: &Summary, model: &str, family: &str) -> Option<f64> {
    let row = summary.eval.reports.get(model)?.error_rates.get(family)?;
    row.iter().copied().sum::<Option<f64>>()
}

fn robustness(s: &Summary) -> Check {
    let mce = s.mce["epic_mean"];
    let better: Vec<&str> = NONUNIFORM
        .into_iter()
        .filter(|f| matches!((family_sum(s, "epic_mean", f), family_sum(s, "baseline", f)), (Some(e), Some(b)) if e < b))
        .collect();
    let detail = format!("EPiC mean mCE {mce:.4}; lower error on {}/5 nonuniform families {better:?}", better.len());
    if mce < 0.95 && better.len() >= 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn aggregation(s: &Summary) -> Check {
    let oa = &s.overall_accuracy;
    let best_single = ["epic_patches", "epic_curves", "epic_random"].iter().map(|k| oa[*k]).fold(0.0, f64::max);
    let (mean_mce, majority_mce) = (s.mce["epic_mean"], s.mce["epic_majority"]);
    let detail = format!(
        "mean OA {:.4} vs best single {best_single:.4}; mean mCE {mean_mce:.4} vs majority {majority_mce:.4}",
        oa["epic_mean"]
    );
    if oa["epic_mean"] >= best_single - 0.01 && mean_mce <= majority_mce + 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn diversity(s: &Summary) -> Check {
    let d = s.diversity.as_ref().ok_or("no diversity output")?;
    let detail = format!("c(S-1A) {:.4}, c(NS-1A) {:.4}", d.s_1a.c, d.ns_1a.c);
    if d.s_1a.c + 0.02 <= d.ns_1a.c {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniformity_trend(s: &Summary) -> Check {
    let t = s.uniformity_trend.get("add_global").ok_or("no add_global trend")?;
    let detail = format!("Spearman {:?}; u {:?}; baseline error {:?}", t.spearman, t.mean_uniformity, t.baseline_error);
    match t.spearman {
        Some(r) if r > 0.0 => Ok(detail),
        _ => Err(detail),
    }
}

fn exposure(s: &Summary) -> Check {
    let row = s.exposure.iter().find(|r| r.severity == 5).ok_or("no add_local_5 exposure row")?;
    let detail = format!(
        "exposed {} members, entropy {:?}; unexposed {} members, entropy {:?}",
        row.exposed_members, row.exposed_mean_entropy, row.unexposed_members, row.unexposed_mean_entropy
    );
    match (row.exposed_mean_entropy, row.unexposed_mean_entropy) {
        (Some(e), Some(u)) if e - u > 0.0 => Ok(format!("margin {:.4}; {detail}", e - u)),
        _ => Err(detail),
    }
}

fn main() {
    let mut results: Vec<(String, Check)> = Vec::new();
    let mut record = |name: &str, check: Check| {
        let line = match &check {
            Ok(d) => format!("PASS  {name}: {d}"),
            Err(d) => format!("FAIL  {name}: {d}"),
        };
        println!("{line}");
        results.push((name.to_string(), check));
    };

    record("oracle equivalence", common::oracle_equivalence(500, 1));
    record("gradient correctness", common::gradient_correctness());
    for (name, check) in common::exact_invariants() {
        record(&format!("exact invariants / {name}"), check);
    }
    record("determinism", determinism());

    let dir = tempfile::tempdir().expect("temp dir");
    let start = Instant::now();
    let pipeline = run_stages(dir.path(), &["pipeline"], &[]);
    let elapsed = start.elapsed();
    let summary: Result<Summary, String> = pipeline.and_then(|_| {
        let text = std::fs::read_to_string(dir.path().join("report.json")).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    });
    match &summary {
        Ok(s) => {
            record("robustness trend", robustness(s));
            record("aggregation ordering", aggregation(s));
            record("diversity ordering", diversity(s));
            record("uniformity trend", uniformity_trend(s));
            record("exposure/noise", exposure(s));
        }
        Err(e) => {
            for name in ["robustness trend", "aggregation ordering", "diversity ordering", "uniformity trend", "exposure/noise"] {
                record(name, Err(format!("pipeline failed: {e}")));
            }
        }
    }
    let runtime = format!("default pipeline took {elapsed:.1?}");
    record("pipeline runtime", if summary.is_ok() && elapsed < Duration::from_secs(15 * 60) { Ok(runtime) } else { Err(runtime) });

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
