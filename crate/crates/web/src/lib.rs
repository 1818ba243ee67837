//! wasm-bindgen entry points for the browser demo in `www/`.
//!
//! Every export returns a JSON string; errors come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use dual_core::bench::{self, BenchConfig, Variant};
use dual_core::boottest::{run_test, TestOptions};
use dual_core::data::Sample;
use dual_core::datagen::{self, DatasetKind, DatasetSpec, Hypothesis};
use dual_core::kernel::Family;
use dual_core::seed::{self, stream};
use dual_core::trainer::{learn_kernels, TrainConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn kind(dataset: &str) -> Result<DatasetKind, String> {
    match dataset {
        "blob" => Ok(DatasetKind::blob()),
        "indep" => Ok(DatasetKind::indep(2)),
        other => Err(format!("unknown dataset '{other}'")),
    }
}

fn hypothesis(alt: bool) -> Hypothesis {
    if alt {
        Hypothesis::Alt
    } else {
        Hypothesis::Null
    }
}

fn train_config(c: usize, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        c,
        families: vec![Family::Gaussian],
        epochs,
        learning_rate: lr,
        ..Default::default()
    }
}

fn respond(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Points of one generated dataset: BLOB gives the two samples, `indep`
/// gives the first coordinate of `x` against the first of `y`.
#[wasm_bindgen]
pub fn sample_points(dataset: &str, n: usize, alt: bool, seed: u64) -> String {
    respond((|| {
        let spec = DatasetSpec::new(kind(dataset)?, hypothesis(alt), n, seed);
        let sample = datagen::generate(&spec).map_err(|e| e.to_string())?;
        Ok(match sample {
            Sample::TwoSample(w) => json!({
                "a": w.iter().map(|p| [p.x[0], p.x[1]]).collect::<Vec<_>>(),
                "b": w.iter().map(|p| [p.y[0], p.y[1]]).collect::<Vec<_>>(),
            }),
            Sample::Independence(w) => json!({
                "a": w.iter().flat_map(|q| [[q.x1[0], q.y1[0]], [q.x2[0], q.y2[0]]]).collect::<Vec<_>>(),
                "b": [],
            }),
        })
    })())
}

/// Train a pool on one split and test on the other.
#[wasm_bindgen]
pub fn single_test(dataset: &str, n: usize, alt: bool, c: usize, epochs: usize, lr: f64, bootstrap: usize, seed: u64) -> String {
    respond((|| {
        let e = |e: dual_core::Error| e.to_string();
        let sub = |s: u64| seed::mix(seed, s, n as u64);
        let spec = DatasetSpec::new(kind(dataset)?, hypothesis(alt), n, sub(stream::DATA));
        let sample = datagen::generate(&spec).map_err(e)?;
        let (w_tr, w_te) = datagen::split_train_test(&sample, sub(stream::SPLIT)).map_err(e)?;
        let tc = TrainConfig {
            resample_seed: sub(stream::TRAIN_RESAMPLE),
            ..train_config(c, epochs, lr)
        };
        let trained = learn_kernels(&w_tr, &tc).map_err(e)?;
        let opts = TestOptions {
            bootstrap,
            ..Default::default()
        };
        let r = run_test(&w_te, &trained.pool, &trained.f_tr, &opts, &mut seed::rng(sub(stream::TEST))).map_err(e)?;
        Ok(json!({
            "statistic": r.statistic,
            "threshold": r.threshold,
            "p_value": r.p_value,
            "reject": r.reject,
            "mask": r.mask.0,
            "f_tr": trained.f_tr.0,
            "boot_stats": r.boot_stats,
            "full_statistic": r.full_statistic,
            "full_threshold": r.full_threshold,
            "objective_trace": trained.objective_trace,
            "bandwidths": trained.pool.iter().map(|k| match k {
                dual_core::kernel::PoolKernel::Mmd(s) => s.bandwidth(),
                dual_core::kernel::PoolKernel::Hsic { x, .. } => x.bandwidth(),
            }).collect::<Vec<_>>(),
        }))
    })())
}

/// Rejection rates of DUAL and the plain aggregated variant over a few sizes.
#[wasm_bindgen]
pub fn power_curve(dataset: &str, ns: &str, alt: bool, trials: usize, c: usize, epochs: usize, lr: f64, seed: u64) -> String {
    respond((|| {
        let ns: Vec<usize> = ns
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad n '{s}': {e}")))
            .collect::<Result<_, _>>()?;
        if ns.is_empty() {
            return Err("no sample sizes".into());
        }
        let cfg = BenchConfig {
            train: train_config(c, epochs, lr),
            test: TestOptions {
                bootstrap: 199,
                ..Default::default()
            },
            workers: 1,
        };
        let spec = DatasetSpec::new(kind(dataset)?, hypothesis(alt), ns[0], seed);
        let reports =
            bench::estimate_rates(&spec, &ns, &[Variant::DUAL, Variant::AU], &cfg, trials, seed).map_err(|e| e.to_string())?;
        Ok(json!(reports
            .iter()
            .map(|r| json!({
                "variant": r.variant,
                "n": r.rows.iter().map(|x| x.n).collect::<Vec<_>>(),
                "rate": r.rows.iter().map(|x| x.rate).collect::<Vec<_>>(),
                "se": r.rows.iter().map(|x| x.se()).collect::<Vec<_>>(),
            }))
            .collect::<Vec<_>>()))
    })())
}
