//! Configuration and command dispatch for the `dual` binary.
//!
//! Settings come from three layers: built-in defaults, an optional flat
//! `key = value` file, and command-line flags (highest precedence). File
//! keys are the long flag names without the leading dashes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use dual_core::bench::{self, BenchConfig, PowerReport, Variant};
use dual_core::boottest::{run_test, TestOptions};
use dual_core::data::Sample;
use dual_core::datagen::{self, DatasetKind, DatasetSpec, Hypothesis};
use dual_core::kernel::Family;
use dual_core::oracle;
use dual_core::seed::{self, stream};
use dual_core::trainer::{learn_kernels, TrainConfig};
use dual_core::ustat::Regularization;

pub const WORKERS_ENV: &str = "DUAL_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Args(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SingleTest,
    Type1,
    Power,
    Ablation,
    Selfcheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    Blob,
    Indep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "dual", version, about = "Learned kernel-pool two-sample and independence tests")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Flat key = value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetName>,
    /// Per-split sample size(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Generate data under the alternative.
    #[arg(long)]
    pub alt: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Perturbation strength for `indep`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of perturbed dimensions for `indep`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Kernels in the pool.
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Adam epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// `auto`, `scaled:<factor>` or a fixed value.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long = "R")]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub no_diversity: bool,
    #[arg(long)]
    pub no_selection: bool,
    /// Record wall-clock seconds in reports (otherwise written as 0).
    #[arg(long)]
    pub timing: bool,
    /// Write the generated sample (single-test) as delimited text.
    #[arg(long)]
    pub export_data: Option<PathBuf>,
    /// Read the sample for single-test from a delimited file.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

const FILE_KEYS: &[&str] = &[
    "dataset",
    "n",
    "alt",
    "rho",
    "a",
    "noise",
    "k",
    "d",
    "c",
    "families",
    "epochs",
    "lr",
    "lambda",
    "B",
    "alpha",
    "R",
    "seed",
    "workers",
    "out",
    "format",
    "no-diversity",
    "no-selection",
    "timing",
    "export-data",
    "data",
];

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dataset: Option<DatasetName>,
    pub ns: Vec<usize>,
    pub alt: bool,
    pub rho: f64,
    pub a: f64,
    pub noise: f64,
    pub k: Option<usize>,
    pub d: usize,
    pub c: usize,
    pub families: Vec<Family>,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: Regularization,
    pub bootstrap: usize,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub use_diversity: bool,
    pub use_selection: bool,
    pub timing: bool,
    pub export_data: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

impl RunConfig {
    pub fn variant(&self) -> Variant {
        Variant {
            use_diversity: self.use_diversity,
            use_selection: self.use_selection,
        }
    }

    pub fn dataset_kind(&self) -> Result<DatasetKind, ConfigError> {
        match self.dataset.ok_or(ConfigError::Missing("dataset"))? {
            DatasetName::Blob => Ok(DatasetKind::Blob { rho: self.rho }),
            DatasetName::Indep => Ok(DatasetKind::Indep {
                dim: self.d,
                strength: self.a,
                noise: self.noise,
                perturbed: self.k.unwrap_or(self.d.min(3)),
            }),
        }
    }

    pub fn dataset_spec(&self, hypothesis: Hypothesis, n: usize) -> Result<DatasetSpec, ConfigError> {
        Ok(DatasetSpec::new(self.dataset_kind()?, hypothesis, n, self.seed))
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            train: TrainConfig {
                c: self.c,
                families: self.families.clone(),
                epochs: self.epochs,
                learning_rate: self.lr,
                regularization: self.lambda,
                ..Default::default()
            },
            test: TestOptions {
                alpha: self.alpha,
                bootstrap: self.bootstrap,
                regularization: self.lambda,
                ..Default::default()
            },
            workers: self.workers,
        }
    }

    fn hypothesis(&self) -> Hypothesis {
        match self.command {
            Command::Type1 => Hypothesis::Null,
            Command::Power => Hypothesis::Alt,
            _ if self.alt => Hypothesis::Alt,
            _ => Hypothesis::Null,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let core = |e: dual_core::Error| match e {
            dual_core::Error::InvalidParameter { name, reason } => bad(name, reason),
            other => bad("config", other.to_string()),
        };
        self.bench_config().validate().map_err(core)?;
        if self.trials == 0 {
            return Err(bad("R", "need at least one trial"));
        }
        if self.command == Command::Selfcheck {
            return Ok(());
        }
        if self.data.is_none() {
            if self.ns.is_empty() {
                return Err(ConfigError::Missing("n"));
            }
            for &n in &self.ns {
                self.dataset_spec(self.hypothesis(), n)?.validate().map_err(core)?;
            }
        }
        if self.data.is_some() && self.command != Command::SingleTest {
            return Err(bad("data", "only single-test reads a data file"));
        }
        Ok(())
    }
}

fn parse_file(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let k = k.trim().replace('_', "-");
        let k = match k.as_str() {
            "b" => "B".to_string(),
            "r" => "R".to_string(),
            _ => k,
        };
        if !FILE_KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey(k));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: std::str::FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    file.get(key)
        .map(|v| v.parse::<T>().map_err(|e| bad(key, e.to_string())))
        .transpose()
}

fn file_bool(file: &BTreeMap<String, String>, key: &str) -> Result<bool, ConfigError> {
    match file.get(key).map(String::as_str) {
        None => Ok(false),
        Some("true" | "1" | "yes") => Ok(true),
        Some("false" | "0" | "no") => Ok(false),
        Some(v) => Err(bad(key, format!("expected true or false, got '{v}'"))),
    }
}

fn file_enum<T: ValueEnum>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
    file.get(key).map(|v| T::from_str(v, true).map_err(|e| bad(key, e))).transpose()
}

fn parse_families(items: &[String]) -> Result<Vec<Family>, ConfigError> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Family>().map_err(|e| bad("families", e.to_string())))
        .collect()
}

fn parse_lambda(v: &str) -> Result<Regularization, ConfigError> {
    let v = v.trim();
    if v == "auto" {
        return Ok(Regularization::default());
    }
    if let Some(f) = v.strip_prefix("scaled:") {
        let factor = f.parse::<f64>().map_err(|e| bad("lambda", e.to_string()))?;
        return Ok(Regularization::Scaled { factor });
    }
    v.parse::<f64>()
        .map(Regularization::Fixed)
        .map_err(|e| bad("lambda", e.to_string()))
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).collect()
}

/// Resolve flags over optional config-file text over defaults.
pub fn parse_config<I, T>(args: I, file_text: Option<&str>) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| ConfigError::Args(e.to_string()))?;
    resolve(cli, file_text)
}

/// As [`parse_config`], reading the `--config` file if one is named.
pub fn load<I, T>(args: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| ConfigError::Args(e.to_string()))?;
    let text = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?),
        None => None,
    };
    resolve(cli, text.as_deref())
}

fn resolve(cli: Cli, file_text: Option<&str>) -> Result<RunConfig, ConfigError> {
    let file = match file_text {
        Some(t) => parse_file(t)?,
        None => BTreeMap::new(),
    };
    let ns = match cli.n {
        Some(v) => v,
        None => match file.get("n") {
            Some(v) => split_list(v)
                .iter()
                .map(|s| s.parse::<usize>().map_err(|e| bad("n", e.to_string())))
                .collect::<Result<_, _>>()?,
            None => vec![],
        },
    };
    let families = match cli.families {
        Some(v) => parse_families(&v)?,
        None => match file.get("families") {
            Some(v) => parse_families(&split_list(v))?,
            None => TrainConfig::default().families,
        },
    };
    let lambda = match cli.lambda.or_else(|| file.get("lambda").cloned()) {
        Some(v) => parse_lambda(&v)?,
        None => Regularization::default(),
    };
    let cfg = RunConfig {
        command: cli.command,
        dataset: cli.dataset.or(file_enum(&file, "dataset")?),
        ns,
        alt: cli.alt || file_bool(&file, "alt")?,
        rho: cli.rho.or(from_file(&file, "rho")?).unwrap_or(datagen::BLOB_RHO),
        a: cli.a.or(from_file(&file, "a")?).unwrap_or(datagen::INDEP_STRENGTH),
        noise: cli.noise.or(from_file(&file, "noise")?).unwrap_or(datagen::INDEP_NOISE),
        k: cli.k.or(from_file(&file, "k")?),
        d: cli.d.or(from_file(&file, "d")?).unwrap_or(datagen::INDEP_DIM),
        c: cli.c.or(from_file(&file, "c")?).unwrap_or(6),
        families,
        epochs: cli.epochs.or(from_file(&file, "epochs")?).unwrap_or(200),
        lr: cli.lr.or(from_file(&file, "lr")?).unwrap_or(5e-4),
        lambda,
        bootstrap: cli.bootstrap.or(from_file(&file, "B")?).unwrap_or(300),
        alpha: cli.alpha.or(from_file(&file, "alpha")?).unwrap_or(0.05),
        trials: cli.trials.or(from_file(&file, "R")?).unwrap_or(200),
        seed: cli.seed.or(from_file(&file, "seed")?).unwrap_or(0),
        workers: cli.workers.or(from_file(&file, "workers")?).unwrap_or(0),
        out: cli.out.or(from_file(&file, "out")?),
        format: cli.format.or(file_enum(&file, "format")?).unwrap_or(Format::Csv),
        use_diversity: !(cli.no_diversity || file_bool(&file, "no-diversity")?),
        use_selection: !(cli.no_selection || file_bool(&file, "no-selection")?),
        timing: cli.timing || file_bool(&file, "timing")?,
        export_data: cli.export_data.or(from_file(&file, "export-data")?),
        data: cli.data.or(from_file(&file, "data")?),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes),
        None => stdout.write_all(bytes),
    }
}

fn selection_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}_selection.csv"))
}

fn write_reports(cfg: &RunConfig, reports: &[PowerReport], stdout: &mut dyn Write) -> Result<(), String> {
    let mut buf = Vec::new();
    match cfg.format {
        Format::Csv => bench::write_csv(reports, cfg.timing, &mut buf),
        Format::Json => bench::write_json(reports, cfg.timing, &mut buf),
    }
    .map_err(|e| e.to_string())?;
    write_output(cfg.out.as_deref(), &buf, stdout).map_err(|e| format!("writing report: {e}"))?;
    if let Some(out) = &cfg.out {
        let mut sel = String::from("variant,hypothesis,n,kernel,probability\n");
        for r in bench::selection_diagnostics(reports) {
            sel.push_str(&format!("{},{},{},{},{}\n", r.variant, r.hypothesis, r.n, r.kernel, r.probability));
        }
        std::fs::write(selection_path(out), sel).map_err(|e| format!("writing selection table: {e}"))?;
    }
    for rep in reports {
        for row in &rep.rows {
            for o in row.outcomes.iter().filter(|o| o.error.is_some()) {
                eprintln!("{} n={} trial {}: {}", rep.variant, row.n, o.trial, o.error.as_deref().unwrap_or(""));
            }
        }
    }
    Ok(())
}

fn single_test(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), String> {
    let sub = |n: usize, s: u64| seed::mix(cfg.seed, s, n as u64);
    let sample = match &cfg.data {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
            Sample::read_delimited(&text).map_err(|e| e.to_string())?
        }
        None => {
            let n = cfg.ns[0];
            let spec = DatasetSpec {
                seed: sub(n, stream::DATA),
                ..cfg.dataset_spec(cfg.hypothesis(), n).map_err(|e| e.to_string())?
            };
            datagen::generate(&spec).map_err(|e| e.to_string())?
        }
    };
    // Seeds follow the per-split size, so an exported sample replays exactly.
    let n = sample.len() / 2;
    let sub = |s: u64| sub(n, s);
    if let Some(path) = &cfg.export_data {
        let mut buf = Vec::new();
        sample.write_delimited(&mut buf).map_err(|e| e.to_string())?;
        std::fs::write(path, buf).map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    let (w_tr, w_te) = datagen::split_train_test(&sample, sub(stream::SPLIT)).map_err(|e| e.to_string())?;
    let bc = cfg.bench_config();
    let v = cfg.variant();
    let tc = TrainConfig {
        normalization: v.normalization(),
        resample_seed: sub(stream::TRAIN_RESAMPLE),
        ..bc.train
    };
    let trained = learn_kernels(&w_tr, &tc).map_err(|e| e.to_string())?;
    if let Some(h) = &trained.halted {
        eprintln!("training halted early: {h}");
    }
    let opts = TestOptions {
        normalization: v.normalization(),
        selection: v.use_selection,
        ..bc.test
    };
    let r = run_test(&w_te, &trained.pool, &trained.f_tr, &opts, &mut seed::rng(sub(stream::TEST)))
        .map_err(|e| e.to_string())?;
    let mask: Vec<String> = r.mask.0.iter().map(|m| m.to_string()).collect();
    let text = format!(
        "variant={}\nn={}\nstatistic={}\nthreshold={}\np_value={}\nreject={}\nmask={}\n",
        v.name(),
        r.n,
        r.statistic,
        r.threshold,
        r.p_value,
        r.reject,
        mask.join(",")
    );
    stdout.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    if let Some(out) = &cfg.out {
        let body = serde_json::json!({
            "variant": v.name(),
            "pool": trained.pool,
            "objective_trace": trained.objective_trace,
            "f_tr": trained.f_tr,
            "result": r,
        });
        let text = serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?;
        std::fs::write(out, text + "\n").map_err(|e| format!("writing {}: {e}", out.display()))?;
    }
    Ok(())
}

fn selfcheck(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<bool, String> {
    let results = oracle::selfcheck(50, cfg.seed, 1e-12).map_err(|e| e.to_string())?;
    let mut all = true;
    let mut text = String::new();
    for r in &results {
        all &= r.pass;
        text.push_str(&format!(
            "{} {:<18} max_rel_err={:.3e} tol={:.0e} instances={}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_err,
            r.tolerance,
            r.instances
        ));
    }
    write_output(cfg.out.as_deref(), text.as_bytes(), stdout).map_err(|e| e.to_string())?;
    if cfg.out.is_some() {
        stdout.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    }
    Ok(all)
}

/// Execute a resolved configuration; returns the process exit code.
pub fn run_with(cfg: &RunConfig, stdout: &mut dyn Write) -> i32 {
    let result = (|| -> Result<bool, String> {
        let bc = cfg.bench_config();
        match cfg.command {
            Command::Selfcheck => selfcheck(cfg, stdout),
            Command::SingleTest => single_test(cfg, stdout).map(|_| true),
            Command::Type1 | Command::Power => {
                let spec = cfg.dataset_spec(cfg.hypothesis(), cfg.ns[0]).map_err(|e| e.to_string())?;
                let reps = bench::estimate_rates(&spec, &cfg.ns, &[cfg.variant()], &bc, cfg.trials, cfg.seed)
                    .map_err(|e| e.to_string())?;
                write_reports(cfg, &reps, stdout).map(|_| true)
            }
            Command::Ablation => {
                let spec = cfg.dataset_spec(cfg.hypothesis(), cfg.ns[0]).map_err(|e| e.to_string())?;
                let reps = bench::ablation_suite(&spec, &cfg.ns, &bc, cfg.trials, cfg.seed).map_err(|e| e.to_string())?;
                write_reports(cfg, &reps, stdout).map(|_| true)
            }
        }
    })();
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cfg: &RunConfig) -> i32 {
    run_with(cfg, &mut std::io::stdout().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("dual".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn defaults_filled() {
        let cfg = parse_config(args("power --dataset blob --n 100 --alt"), None).unwrap();
        assert_eq!(cfg.command, Command::Power);
        assert_eq!(cfg.ns, vec![100]);
        assert_eq!((cfg.alpha, cfg.bootstrap, cfg.epochs, cfg.lr, cfg.c, cfg.trials), (0.05, 300, 200, 5e-4, 6, 200));
        assert_eq!(cfg.lambda, Regularization::default());
        assert_eq!(cfg.variant(), Variant::DUAL);
    }

    #[test]
    fn alpha_out_of_range() {
        let e = parse_config(args("power --dataset blob --n 100 --alpha 1.5"), None).unwrap_err();
        assert!(e.to_string().contains("alpha must be in (0,1)"), "{e}");
    }

    #[test]
    fn flags_override_file() {
        let cfg = parse_config(args("type1 --dataset blob --n 100 --B 500"), Some("B = 100\nR = 7\n")).unwrap();
        assert_eq!(cfg.bootstrap, 500);
        assert_eq!(cfg.trials, 7);
    }

    #[test]
    fn file_supplies_values_and_rejects_unknown_keys() {
        let cfg = parse_config(
            args("ablation"),
            Some("# study\ndataset = indep\nn = 50, 100\nd = 4\nk = 2\nfamilies = gaussian,laplacian\nlambda = 1e-4\nno-selection = true\n"),
        )
        .unwrap();
        assert_eq!(cfg.dataset, Some(DatasetName::Indep));
        assert_eq!(cfg.ns, vec![50, 100]);
        assert_eq!(cfg.families, vec![Family::Gaussian, Family::Laplacian]);
        assert_eq!(cfg.lambda, Regularization::Fixed(1e-4));
        assert!(!cfg.use_selection);
        let e = parse_config(args("type1 --dataset blob --n 10"), Some("bogus = 3\n")).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "bogus"));
        let e = parse_config(args("type1 --dataset blob --n 10"), Some("alpha 3\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1 }));
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse_config(args("type1 --dataset indep --n 10 --d 2 --k 5"), None).unwrap_err();
        assert!(e.to_string().contains("k"), "{e}");
        let e = parse_config(args("type1 --dataset blob --n 10 --rho 1.0"), None).unwrap_err();
        assert!(e.to_string().contains("rho"), "{e}");
        let e = parse_config(args("type1 --dataset blob"), None).unwrap_err();
        assert!(matches!(e, ConfigError::Missing("n")));
        let e = parse_config(args("type1 --n 10"), None).unwrap_err();
        assert!(matches!(e, ConfigError::Missing("dataset")));
        let e = parse_config(args("type1 --dataset blob --n 10 --lambda nope"), None).unwrap_err();
        assert!(e.to_string().contains("lambda"), "{e}");
        let e = parse_config(args("type1 --dataset blob --n 10 --families gaussian,spline"), None).unwrap_err();
        assert!(e.to_string().contains("spline"), "{e}");
        assert!(parse_config(args("frobnicate"), None).is_err());
    }

    #[test]
    fn lambda_forms() {
        assert_eq!(parse_lambda("auto").unwrap(), Regularization::default());
        assert_eq!(parse_lambda("scaled:1e-3").unwrap(), Regularization::Scaled { factor: 1e-3 });
        assert_eq!(parse_lambda("0").unwrap(), Regularization::Fixed(0.0));
    }

    #[test]
    fn selfcheck_needs_no_dataset() {
        let cfg = parse_config(args("selfcheck"), None).unwrap();
        let mut out = Vec::new();
        assert_eq!(run_with(&cfg, &mut out), 0);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    }
}
