//! Repetition harness: rejection rates, ablation variants and selection
//! diagnostics.
//!
//! Trial `t` derives every random stream from `mix(base_seed, t, 0)`, so
//! results do not depend on the worker count or scheduling order, and all
//! variants of an ablation see identical data, splits and bootstrap signs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::boottest::{run_test, Normalization, TestOptions, TestResult};
use crate::datagen::{generate, split_train_test, DatasetSpec};
use crate::error::{invalid, Error, Result};
use crate::seed::{self, stream};
use crate::selection::AlignMask;
use crate::trainer::{learn_kernels, TrainConfig, TrainedPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub use_diversity: bool,
    pub use_selection: bool,
}

impl Variant {
    pub const DUAL: Variant = Variant {
        use_diversity: true,
        use_selection: true,
    };
    pub const AU_D: Variant = Variant {
        use_diversity: true,
        use_selection: false,
    };
    pub const AU_S: Variant = Variant {
        use_diversity: false,
        use_selection: true,
    };
    pub const AU: Variant = Variant {
        use_diversity: false,
        use_selection: false,
    };

    pub fn all() -> [Variant; 4] {
        [Variant::DUAL, Variant::AU_D, Variant::AU_S, Variant::AU]
    }

    pub fn name(self) -> &'static str {
        match (self.use_diversity, self.use_selection) {
            (true, true) => "DUAL",
            (true, false) => "AU+D",
            (false, true) => "AU+S",
            (false, false) => "AU",
        }
    }

    pub fn normalization(self) -> Normalization {
        if self.use_diversity {
            Normalization::NullCov
        } else {
            Normalization::Identity
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// `normalization` and `resample_seed` are set per trial and variant.
    pub train: TrainConfig,
    /// `normalization` and `selection` are set per variant.
    pub test: TestOptions,
    /// Worker threads; `0` uses all available cores.
    pub workers: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.test.validate()
    }
}

/// One pipeline execution for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub reject: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub full_threshold: f64,
    pub mask: AlignMask,
    pub whitened: Vec<f64>,
    pub boot_alignment: Vec<f64>,
    /// Set when the trial failed; it then counts as a non-rejection.
    pub error: Option<String>,
}

impl TrialOutcome {
    fn failed(trial: usize, c: usize, e: &Error) -> Self {
        TrialOutcome {
            trial,
            reject: false,
            statistic: f64::NAN,
            threshold: f64::NAN,
            p_value: f64::NAN,
            full_threshold: f64::NAN,
            mask: AlignMask(vec![0; c]),
            whitened: vec![],
            boot_alignment: vec![],
            error: Some(e.to_string()),
        }
    }
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    seed::mix(base_seed, trial as u64, 0)
}

/// Runs every variant on the same data; training is shared between
/// variants with the same diversity setting.
pub fn run_trial_variants(
    spec: &DatasetSpec,
    variants: &[Variant],
    cfg: &BenchConfig,
    trial: usize,
    trial_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    let wrap = |e: Error| Error::Trial {
        trial,
        source: Box::new(e),
    };
    let sub = |s: u64| seed::mix(trial_seed, s, spec.n as u64);
    let data_spec = DatasetSpec {
        seed: sub(stream::DATA),
        ..*spec
    };
    let sample = generate(&data_spec).map_err(wrap)?;
    let (w_tr, w_te) = split_train_test(&sample, sub(stream::SPLIT)).map_err(wrap)?;

    let mut trained: [Option<TrainedPool>; 2] = [None, None];
    // One selection-aware run per pool also yields the no-selection result,
    // since both consume the same test stream.
    let mut tested: [Option<TestResult>; 2] = [None, None];
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let slot = usize::from(v.use_diversity);
        if trained[slot].is_none() {
            let tc = TrainConfig {
                normalization: v.normalization(),
                resample_seed: sub(stream::TRAIN_RESAMPLE),
                ..cfg.train.clone()
            };
            trained[slot] = Some(learn_kernels(&w_tr, &tc).map_err(wrap)?);
        }
        let tp = trained[slot].as_ref().unwrap();
        if tested[slot].is_none() {
            let opts = TestOptions {
                normalization: v.normalization(),
                selection: true,
                ..cfg.test
            };
            tested[slot] = Some(run_test(&w_te, &tp.pool, &tp.f_tr, &opts, &mut seed::rng(sub(stream::TEST))).map_err(wrap)?);
        }
        let r = tested[slot].as_ref().unwrap();
        let r = if v.use_selection { r.clone() } else { r.without_selection() };
        out.push(TrialOutcome {
            trial,
            reject: r.reject,
            statistic: r.statistic,
            threshold: r.threshold,
            p_value: r.p_value,
            full_threshold: r.full_threshold,
            mask: r.mask,
            whitened: r.whitened,
            boot_alignment: r.boot_alignment,
            error: tp.halted.clone(),
        });
    }
    Ok(out)
}

pub fn run_trial(spec: &DatasetSpec, variant: Variant, cfg: &BenchConfig, trial: usize, trial_seed: u64) -> Result<TrialOutcome> {
    Ok(run_trial_variants(spec, &[variant], cfg, trial, trial_seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub n: usize,
    pub trials: usize,
    pub rejections: usize,
    pub failures: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_threshold: f64,
    pub mean_statistic: f64,
    pub mean_full_threshold: f64,
    /// Per-kernel fraction of trials with `F_i = 1`.
    pub selection_frequency: Vec<f64>,
    /// Per-kernel mean bootstrap alignment rate.
    pub boot_alignment: Vec<f64>,
    pub seconds: f64,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

impl PowerRow {
    pub fn from_outcomes(n: usize, c: usize, outcomes: Vec<TrialOutcome>, seconds: f64) -> Self {
        let trials = outcomes.len();
        let rejections = outcomes.iter().filter(|o| o.reject).count();
        let ok: Vec<&TrialOutcome> = outcomes.iter().filter(|o| !o.statistic.is_nan()).collect();
        let failures = trials - ok.len();
        let mean = |f: &dyn Fn(&TrialOutcome) -> f64| ok.iter().map(|o| f(o)).sum::<f64>() / ok.len() as f64;
        let per_kernel = |f: &dyn Fn(&TrialOutcome, usize) -> f64| -> Vec<f64> {
            (0..c).map(|k| mean(&|o| f(o, k))).collect()
        };
        let rate = rejections as f64 / trials as f64;
        let half = 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt();
        PowerRow {
            n,
            trials,
            rejections,
            failures,
            rate,
            ci_low: rate - half,
            ci_high: rate + half,
            mean_threshold: mean(&|o| o.threshold),
            mean_statistic: mean(&|o| o.statistic),
            mean_full_threshold: mean(&|o| o.full_threshold),
            selection_frequency: per_kernel(&|o, k| f64::from(o.mask.0[k])),
            boot_alignment: per_kernel(&|o, k| o.boot_alignment[k]),
            seconds,
            outcomes,
        }
    }

    /// Binomial standard error `√(rate(1−rate)/R)`.
    pub fn se(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.trials as f64).sqrt()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.outcomes.iter().filter(|o| !o.p_value.is_nan()).map(|o| o.p_value).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub variant: String,
    pub dataset: String,
    pub problem: String,
    pub hypothesis: String,
    pub rows: Vec<PowerRow>,
}

/// Wall-clock timer; reads 0 where the platform has no clock (bare wasm).
struct Stopwatch(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch(
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        return 0.0;
    }
}

fn map_trials<T: Send>(workers: usize, r: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || (0..r).into_par_iter().map(&f).collect();
        if workers == 0 {
            return run();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => (0..r).map(&f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..r).map(f).collect()
    }
}

/// `R` paired trials per sample size for every variant; one report per
/// variant with one row per entry of `ns`.
pub fn estimate_rates(
    spec: &DatasetSpec,
    ns: &[usize],
    variants: &[Variant],
    cfg: &BenchConfig,
    r: usize,
    base_seed: u64,
) -> Result<Vec<PowerReport>> {
    cfg.validate()?;
    if r == 0 {
        return Err(invalid("R", "need at least one trial"));
    }
    if variants.is_empty() || ns.is_empty() {
        return Err(invalid("variants", "nothing to run"));
    }
    let c = cfg.train.c;
    let mut reports: Vec<PowerReport> = variants
        .iter()
        .map(|v| PowerReport {
            variant: v.name().into(),
            dataset: spec.kind.name().into(),
            problem: spec.problem().as_str().into(),
            hypothesis: spec.hypothesis.as_str().into(),
            rows: vec![],
        })
        .collect();
    for &n in ns {
        let s = DatasetSpec { n, ..*spec };
        s.validate()?;
        let start = Stopwatch::start();
        let per_trial = map_trials(cfg.workers, r, |t| {
            run_trial_variants(&s, variants, cfg, t, trial_seed(base_seed, t))
                .unwrap_or_else(|e| variants.iter().map(|_| TrialOutcome::failed(t, c, &e)).collect())
        });
        let seconds = start.seconds();
        for (vi, report) in reports.iter_mut().enumerate() {
            let outcomes = per_trial.iter().map(|o| o[vi].clone()).collect();
            report.rows.push(PowerRow::from_outcomes(n, c, outcomes, seconds));
        }
    }
    Ok(reports)
}

pub fn estimate_rate(spec: &DatasetSpec, variant: Variant, cfg: &BenchConfig, r: usize, base_seed: u64) -> Result<PowerReport> {
    Ok(estimate_rates(spec, &[spec.n], &[variant], cfg, r, base_seed)?.remove(0))
}

/// All four variants on shared per-trial seeds.
pub fn ablation_suite(spec: &DatasetSpec, ns: &[usize], cfg: &BenchConfig, r: usize, base_seed: u64) -> Result<Vec<PowerReport>> {
    estimate_rates(spec, ns, &Variant::all(), cfg, r, base_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub variant: String,
    pub hypothesis: String,
    pub n: usize,
    pub kernel: usize,
    pub probability: f64,
}

/// Long-format per-kernel selection probability table.
pub fn selection_diagnostics(reports: &[PowerReport]) -> Vec<SelectionRow> {
    let mut out = vec![];
    for rep in reports {
        for row in &rep.rows {
            for (k, &p) in row.selection_frequency.iter().enumerate() {
                out.push(SelectionRow {
                    variant: rep.variant.clone(),
                    hypothesis: rep.hypothesis.clone(),
                    n: row.n,
                    kernel: k,
                    probability: p,
                });
            }
        }
    }
    out
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "variant",
    "problem",
    "hypothesis",
    "n",
    "R",
    "rejections",
    "rate",
    "ci_low",
    "ci_high",
    "mean_threshold",
    "mean_statistic",
    "seconds",
];

/// One flat record per report row, in [`REPORT_COLUMNS`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub variant: String,
    pub problem: String,
    pub hypothesis: String,
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_threshold: f64,
    pub mean_statistic: f64,
    pub seconds: f64,
    pub failures: usize,
    pub selection_frequency: Vec<f64>,
}

/// Flatten reports; `seconds` is zeroed unless `timing` so reruns are byte-identical.
pub fn records(reports: &[PowerReport], timing: bool) -> Vec<ReportRecord> {
    reports
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(move |row| ReportRecord {
                variant: rep.variant.clone(),
                problem: rep.problem.clone(),
                hypothesis: rep.hypothesis.clone(),
                n: row.n,
                r: row.trials,
                rejections: row.rejections,
                rate: row.rate,
                ci_low: row.ci_low,
                ci_high: row.ci_high,
                mean_threshold: row.mean_threshold,
                mean_statistic: row.mean_statistic,
                seconds: if timing { row.seconds } else { 0.0 },
                failures: row.failures,
                selection_frequency: row.selection_frequency.clone(),
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(reports: &[PowerReport], timing: bool, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
    for r in records(reports, timing) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.problem,
            r.hypothesis,
            r.n,
            r.r,
            r.rejections,
            r.rate,
            r.ci_low,
            r.ci_high,
            r.mean_threshold,
            r.mean_statistic,
            r.seconds
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(reports: &[PowerReport], timing: bool, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, &records(reports, timing))?;
    writeln!(out)
}
