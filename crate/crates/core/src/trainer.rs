//! Kernel pool initialization from pairwise-distance quantiles and
//! Adam ascent on the studentized statistic of the training split.
//!
//! The objective is `T = n² uᵀ S⁻¹ u` with `S = Σ̂ + λI`, where `u` comes
//! from the training split and `Σ̂` from one null resample of it that is
//! drawn once and then frozen, so `T` is a deterministic function of the
//! kernel parameters. Its gradient is assembled analytically:
//!
//! ```text
//! dT = n² (2 zᵀ du − zᵀ dS z),   z = S⁻¹ u
//! ```
//!
//! Each kernel's parameters only touch its own coordinate of `u` and its own
//! row/column of `Σ̂`, which keeps the per-pair weights cheap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boottest::Normalization;
use crate::data::Sample;
use crate::error::{invalid, Error, Result};
use crate::kernel::{pool_params, set_pool_params, Family, Geometry, HStack, KernelSpec, PoolKernel, StackCache};
use crate::seed;
use crate::selection::{signum, SignVector};
use crate::ustat::{self, NullCov, Regularization, SqrtInv};

/// Condition number above which the ridge is raised tenfold for that evaluation.
pub const CONDITION_LIMIT: f64 = 1e12;
const MAX_RIDGE_BOOSTS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: usize,
    pub families: Vec<Family>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: Regularization,
    /// `Identity` trains on `n²‖u‖²` (no diversity term).
    pub normalization: Normalization,
    pub resample_seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 6,
            families: vec![Family::Gaussian, Family::Laplacian, Family::Mahalanobis],
            epochs: 200,
            learning_rate: 5e-4,
            regularization: Regularization::default(),
            normalization: Normalization::NullCov,
            resample_seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 {
            return Err(invalid("c", "need at least one kernel"));
        }
        if self.families.is_empty() {
            return Err(invalid("families", "need at least one kernel family"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("lr", "learning rate must be > 0"));
        }
        self.regularization.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPool {
    pub pool: Vec<PoolKernel>,
    pub f_tr: SignVector,
    pub objective_trace: Vec<f64>,
    /// Evaluations where the ridge had to be raised to tame conditioning.
    pub ridge_boosts: usize,
    /// Set when training stopped early on a non-finite objective or gradient.
    pub halted: Option<String>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0);
    let h = (m - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 0.05 and 0.95 quantiles of all pairwise Euclidean distances.
pub fn distance_quantiles(points: &[&[f64]]) -> Result<(f64, f64)> {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let s: f64 = points[i].iter().zip(points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: points.len(),
        });
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let max = *d.last().unwrap();
    if !(max > 0.0) {
        return Err(Error::DegenerateData("all pairwise distances are zero"));
    }
    let mut lo = quantile(&d, 0.05);
    let mut hi = quantile(&d, 0.95);
    if !(hi > 0.0) {
        hi = max;
    }
    if !(lo > 0.0) {
        lo = *d.iter().find(|&&x| x > 0.0).unwrap();
    }
    Ok((lo, hi.max(lo)))
}

/// `count` bandwidths spaced uniformly in log scale on `[lo, hi]`; a single
/// bandwidth sits at the (geometric) midpoint.
pub fn bandwidth_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    match count {
        0 => vec![],
        1 => vec![(0.5 * (a + b)).exp()],
        _ => (0..count)
            .map(|t| (a + (b - a) * t as f64 / (count - 1) as f64).exp())
            .collect(),
    }
}

/// Grid slot `(family, index, count)` of kernel `k`: families cycle over
/// the pool and each family position gets its own grid.
fn slot(k: usize, c: usize, families: &[Family]) -> (Family, usize, usize) {
    let f = families.len();
    let pos = k % f;
    let count = (c - pos).div_ceil(f);
    (families[pos], k / f, count)
}

/// Median-heuristic style pool: bandwidths on a log grid between the 0.05
/// and 0.95 quantiles of pairwise distances. Deterministic in the data.
pub fn init_pool_median(sample: &Sample, cfg: &TrainConfig) -> Result<Vec<PoolKernel>> {
    cfg.validate()?;
    sample.validate()?;
    if sample.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: sample.len(),
        });
    }
    let (dx, dy) = sample.dims();
    let pool = match sample {
        Sample::TwoSample(w) => {
            let pts: Vec<&[f64]> = w.iter().map(|p| p.x.as_slice()).chain(w.iter().map(|p| p.y.as_slice())).collect();
            let (lo, hi) = distance_quantiles(&pts)?;
            (0..cfg.c)
                .map(|k| {
                    let (fam, t, count) = slot(k, cfg.c, &cfg.families);
                    PoolKernel::Mmd(KernelSpec::with_bandwidth(fam, dx, bandwidth_grid(lo, hi, count)[t]))
                })
                .collect()
        }
        Sample::Independence(w) => {
            let xs: Vec<&[f64]> = w.iter().map(|q| q.x1.as_slice()).chain(w.iter().map(|q| q.x2.as_slice())).collect();
            let ys: Vec<&[f64]> = w.iter().map(|q| q.y1.as_slice()).chain(w.iter().map(|q| q.y2.as_slice())).collect();
            let (xlo, xhi) = distance_quantiles(&xs)?;
            let (ylo, yhi) = distance_quantiles(&ys)?;
            (0..cfg.c)
                .map(|k| {
                    let (fam, t, count) = slot(k, cfg.c, &cfg.families);
                    PoolKernel::Hsic {
                        x: KernelSpec::with_bandwidth(fam, dx, bandwidth_grid(xlo, xhi, count)[t]),
                        y: KernelSpec::with_bandwidth(fam, dy, bandwidth_grid(ylo, yhi, count)[t]),
                    }
                })
                .collect()
        }
    };
    Ok(pool)
}

/// Everything derived from one evaluation of the objective.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub u: ustat::MultiU,
    pub linv: SqrtInv,
    pub lambda: f64,
    pub ridge_boosts: u32,
}

struct Internal {
    eval: Evaluation,
    stack_tr: HStack,
    cache_tr: StackCache,
    stack_h0: Option<(HStack, StackCache)>,
    z: Vec<f64>,
    lambda_slope: f64,
}

/// The training objective on a fixed training split and frozen null resample.
#[derive(Debug, Clone)]
pub struct Objective {
    geo_tr: Geometry,
    geo_h0: Option<Geometry>,
    regularization: Regularization,
    normalization: Normalization,
}

impl Objective {
    /// Draws the null resample from `seed`; it stays fixed for this objective.
    pub fn new(sample_tr: &Sample, regularization: Regularization, normalization: Normalization, seed: u64) -> Result<Self> {
        let geo_h0 = match normalization {
            Normalization::NullCov => {
                let w_h0 = ustat::null_resample(sample_tr, &mut seed::rng(seed))?;
                Some(Geometry::new(&w_h0)?)
            }
            Normalization::Identity => None,
        };
        Ok(Objective {
            geo_tr: Geometry::new(sample_tr)?,
            geo_h0,
            regularization,
            normalization,
        })
    }

    fn eval_internal(&self, pool: &[PoolKernel]) -> Result<Internal> {
        let (stack_tr, cache_tr) = self.geo_tr.stack_with_cache(pool)?;
        let u = ustat::multi_u(&stack_tr)?;
        let n2 = (u.n as f64).powi(2);
        let c = pool.len();
        match (&self.normalization, &self.geo_h0) {
            (Normalization::NullCov, Some(geo_h0)) => {
                let (stack_h0, cache_h0) = geo_h0.stack_with_cache(pool)?;
                let sigma = ustat::null_sigma(&stack_h0)?;
                let (base, depends) = self.regularization.lambda(sigma.trace(), c);
                let (cov, boosts) = guarded_cov(sigma, base)?;
                let slope = match (depends, self.regularization) {
                    (true, Regularization::Scaled { factor }) => factor * 10f64.powi(boosts as i32) / c as f64,
                    _ => 0.0,
                };
                let linv = ustat::sqrt_inv(&cov)?;
                let uv = DVector::from_column_slice(&u.values);
                let z = cov
                    .regularized
                    .clone()
                    .cholesky()
                    .map(|ch| ch.solve(&uv))
                    .unwrap_or_else(|| &linv.linv * (&linv.linv * &uv));
                let value = n2 * uv.dot(&z);
                Ok(Internal {
                    eval: Evaluation {
                        value,
                        u,
                        linv,
                        lambda: cov.lambda,
                        ridge_boosts: boosts,
                    },
                    stack_tr,
                    cache_tr,
                    stack_h0: Some((stack_h0, cache_h0)),
                    z: z.iter().copied().collect(),
                    lambda_slope: slope,
                })
            }
            _ => {
                let value = n2 * u.values.iter().map(|x| x * x).sum::<f64>();
                let z = u.values.clone();
                Ok(Internal {
                    eval: Evaluation {
                        value,
                        u,
                        linv: SqrtInv::identity(c),
                        lambda: 0.0,
                        ridge_boosts: 0,
                    },
                    stack_tr,
                    cache_tr,
                    stack_h0: None,
                    z,
                    lambda_slope: 0.0,
                })
            }
        }
    }

    pub fn evaluate(&self, pool: &[PoolKernel]) -> Result<Evaluation> {
        Ok(self.eval_internal(pool)?.eval)
    }

    pub fn value(&self, pool: &[PoolKernel]) -> Result<f64> {
        Ok(self.evaluate(pool)?.value)
    }

    /// Objective and its gradient in [`pool_params`] order.
    pub fn value_and_grad(&self, pool: &[PoolKernel]) -> Result<(Evaluation, Vec<f64>)> {
        let it = self.eval_internal(pool)?;
        let n = self.geo_tr.n();
        let n2 = (n as f64).powi(2);
        let np = it.stack_tr.n_pairs() as f64;
        let c = pool.len();
        let mut grad = Vec::with_capacity(pool_params(pool).len());

        // Σ_b z_b G_b[p] on the null stack, shared by every kernel.
        let zg: Vec<f64> = match &it.stack_h0 {
            Some((h0, _)) => (0..h0.n_pairs())
                .map(|p| h0.pair(p).iter().zip(&it.z).map(|(g, z)| g * z).sum())
                .collect(),
            None => Vec::new(),
        };
        let ztz: f64 = it.z.iter().map(|z| z * z).sum();

        for (k, kernel) in pool.iter().enumerate() {
            let mut g = vec![0.0; kernel.n_params()];
            let zk = it.z[k];
            let w_tr = 2.0 * n2 * zk / np;
            self.geo_tr.accumulate_grad(pool, &it.cache_tr, k, |_| w_tr, &mut g);
            if let (Some((h0, cache_h0)), Some(geo_h0)) = (&it.stack_h0, &self.geo_h0) {
                let nh = geo_h0.n() as f64;
                let s = (nh / h0.n_pairs() as f64).powi(2);
                let slope = it.lambda_slope;
                geo_h0.accumulate_grad(
                    pool,
                    cache_h0,
                    k,
                    |p| -n2 * 2.0 * s * (zk * zg[p] + ztz * slope * h0.pair(p)[k]),
                    &mut g,
                );
            }
            grad.extend(g);
        }
        debug_assert_eq!(c, it.z.len());
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok((it.eval, grad))
    }

    /// `sgn(L̂⁻¹ u)` on the training split.
    pub fn signs(&self, pool: &[PoolKernel]) -> Result<SignVector> {
        let e = self.evaluate(pool)?;
        signum(&e.linv.whiten(&e.u)?)
    }
}

/// `Σ̂ + λI`, raising `λ` tenfold while the result is ill-conditioned.
fn guarded_cov(sigma: DMatrix<f64>, lambda: f64) -> Result<(NullCov, u32)> {
    let mut boosts = 0;
    let mut lam = lambda;
    loop {
        match NullCov::from_sigma(sigma.clone(), lam) {
            Ok(cov) if cov.condition_number() <= CONDITION_LIMIT => return Ok((cov, boosts)),
            Ok(_) | Err(Error::NotPositiveDefinite { .. }) if boosts < MAX_RIDGE_BOOSTS => {
                boosts += 1;
                lam = if lam > 0.0 { lam * 10.0 } else { ustat::LAMBDA_FLOOR };
            }
            Ok(cov) => return Ok((cov, boosts)),
            Err(e) => return Err(e),
        }
    }
}

/// Training objective with the null resample drawn from `resample_seed`.
pub fn objective(pool: &[PoolKernel], sample_tr: &Sample, reg: Regularization, resample_seed: u64) -> Result<f64> {
    Objective::new(sample_tr, reg, Normalization::NullCov, resample_seed)?.value(pool)
}

/// Gradient of [`objective`] with respect to [`pool_params`].
pub fn grad_objective(pool: &[PoolKernel], sample_tr: &Sample, reg: Regularization, resample_seed: u64) -> Result<Vec<f64>> {
    Ok(Objective::new(sample_tr, reg, Normalization::NullCov, resample_seed)?
        .value_and_grad(pool)?
        .1)
}

/// Adam ascent from the quantile-grid pool, then training signs from the final pool.
pub fn learn_kernels(sample_tr: &Sample, cfg: &TrainConfig) -> Result<TrainedPool> {
    let init = init_pool_median(sample_tr, cfg)?;
    train_from(sample_tr, init, cfg)
}

/// As [`learn_kernels`] but from a caller-supplied initial pool.
pub fn train_from(sample_tr: &Sample, mut pool: Vec<PoolKernel>, cfg: &TrainConfig) -> Result<TrainedPool> {
    cfg.validate()?;
    let obj = Objective::new(sample_tr, cfg.regularization, cfg.normalization, cfg.resample_seed)?;
    let mut params = pool_params(&pool);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let AdamConfig { beta1, beta2, eps } = cfg.adam;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let mut boosts = 0usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut halted = None;

    for epoch in 0..cfg.epochs {
        let (eval, grad) = match obj.value_and_grad(&pool) {
            Ok(r) if r.0.value.is_finite() => r,
            Ok(_) => {
                halted = Some(format!("non-finite objective at epoch {epoch}"));
                break;
            }
            Err(e @ (Error::NonFinite(_) | Error::NonFiniteGradient { .. })) => {
                halted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        boosts += usize::from(eval.ridge_boosts > 0);
        trace.push(eval.value);
        if best.as_ref().is_none_or(|(b, _)| eval.value > *b) {
            best = Some((eval.value, params.clone()));
        }
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for i in 0..params.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] += cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        set_pool_params(&mut pool, &params);
    }

    if halted.is_none() {
        match obj.evaluate(&pool) {
            Ok(e) if e.value.is_finite() => {
                boosts += usize::from(e.ridge_boosts > 0);
                trace.push(e.value);
            }
            Ok(_) => halted = Some("non-finite objective after final step".into()),
            Err(e @ Error::NonFinite(_)) => halted = Some(format!("final step: {e}")),
            Err(e) => return Err(e),
        }
    }
    if halted.is_some() {
        if let Some((_, p)) = best {
            set_pool_params(&mut pool, &p);
        }
    }
    let f_tr = obj.signs(&pool)?;
    Ok(TrainedPool {
        pool,
        f_tr,
        objective_trace: trace,
        ridge_boosts: boosts,
        halted,
    })
}
