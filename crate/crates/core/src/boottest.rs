//! Wild bootstrap with Rademacher weights, the selection-aware threshold,
//! p-value and decision.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{invalid, Error, Result};
use crate::kernel::{Geometry, HStack, PoolKernel};
use crate::selection::{alignment, masked_sq_norm, signum, AlignMask, SignVector};
use crate::ustat::{self, MultiU, Regularization, SqrtInv};

pub const DEFAULT_BOOTSTRAP: usize = 300;
const BATCH: usize = 64;

/// i.i.d. signs with `Pr(+1) = Pr(-1) = 1/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RademacherVec(pub Vec<i8>);

pub fn draw_rademacher<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RademacherVec {
    RademacherVec((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
}

/// Whether the statistic is studentized by the null covariance or left raw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    NullCov,
    Identity,
}

/// `binom(n,2)⁻¹ Σ_{i<j} ε_i ε_j h(w_i, w_j; κ_k)` for every kernel.
pub fn bootstrap_multi_u(stack: &HStack, eps: &RademacherVec) -> Result<MultiU> {
    let n = stack.n();
    if eps.0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: eps.0.len(),
        });
    }
    let c = stack.c();
    let mut acc = vec![0.0; c];
    let mut row = vec![0.0; c];
    let mut p = 0;
    for i in 0..n {
        // Σ_j ε_j h_ij for this row, then one multiply by ε_i.
        row.iter_mut().for_each(|r| *r = 0.0);
        for j in i + 1..n {
            let e = f64::from(eps.0[j]);
            for (r, h) in row.iter_mut().zip(stack.pair(p)) {
                *r += e * h;
            }
            p += 1;
        }
        let ei = f64::from(eps.0[i]);
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += ei * r;
        }
    }
    let np = stack.n_pairs() as f64;
    Ok(MultiU {
        values: acc.into_iter().map(|s| s / np).collect(),
        n,
    })
}

/// [`bootstrap_multi_u`] for many weight vectors at once; replicate order
/// is preserved and each result equals the single-vector version up to
/// summation order.
pub fn bootstrap_multi_u_batch(stack: &HStack, eps: &[RademacherVec]) -> Result<Vec<MultiU>> {
    let n = stack.n();
    let c = stack.c();
    let b = eps.len();
    if let Some(e) = eps.iter().find(|e| e.0.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: e.0.len(),
        });
    }
    // Column-major weights: w[j * b + r] = ε_j of replicate r.
    let mut w = vec![0.0; n * b];
    for (r, e) in eps.iter().enumerate() {
        for (j, &x) in e.0.iter().enumerate() {
            w[j * b + r] = f64::from(x);
        }
    }
    let mut acc = vec![0.0; c * b];
    let mut row = vec![0.0; c * b];
    let mut p = 0;
    for i in 0..n {
        row.iter_mut().for_each(|r| *r = 0.0);
        for j in i + 1..n {
            let wj = &w[j * b..(j + 1) * b];
            for (k, &h) in stack.pair(p).iter().enumerate() {
                for (r, &e) in row[k * b..(k + 1) * b].iter_mut().zip(wj) {
                    *r += e * h;
                }
            }
            p += 1;
        }
        let wi = &w[i * b..(i + 1) * b];
        for (a, r) in acc.chunks_mut(b).zip(row.chunks(b)) {
            for ((a, &r), &e) in a.iter_mut().zip(r).zip(wi) {
                *a += e * r;
            }
        }
    }
    let np = stack.n_pairs() as f64;
    Ok((0..b)
        .map(|r| MultiU {
            values: (0..c).map(|k| acc[k * b + r] / np).collect(),
            n,
        })
        .collect())
}

/// Selection-aware bootstrap replicate `n² ‖F^b ⊙ L̂⁻¹U^b‖²`.
pub fn bootstrap_stat(stack: &HStack, linv: &SqrtInv, f_tr: &SignVector, eps: &RademacherVec) -> Result<f64> {
    let ub = bootstrap_multi_u(stack, eps)?;
    let v = linv.whiten(&ub)?;
    let mask = alignment(f_tr, &signum(&v)?)?;
    Ok(masked_sq_norm(ub.n, &v, &mask))
}

/// Smallest `τ` with at least `(1-α)` of `all_stats` at or below it, i.e.
/// the `⌈(1-α)m⌉`-th order statistic of the `m` values.
pub fn threshold(all_stats: &[f64], alpha: f64) -> Result<f64> {
    if all_stats.is_empty() {
        return Err(Error::Empty("bootstrap statistics"));
    }
    check_alpha(alpha)?;
    let mut sorted = all_stats.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    // The epsilon absorbs representation error in (1-α)·m, e.g. 0.95·200.
    let k = (((1.0 - alpha) * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[k.min(m) - 1])
}

/// `(1 + #{b: T^b ≥ T}) / (B + 1)`.
pub fn p_value(statistic: f64, boot_stats: &[f64]) -> f64 {
    let count = boot_stats.iter().filter(|&&t| t >= statistic).count();
    (1 + count) as f64 / (boot_stats.len() + 1) as f64
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "alpha must be in (0,1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub alpha: f64,
    pub bootstrap: usize,
    pub regularization: Regularization,
    pub normalization: Normalization,
    /// Apply the train/test sign-alignment mask; otherwise all kernels count.
    pub selection: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            alpha: 0.05,
            bootstrap: DEFAULT_BOOTSTRAP,
            regularization: Regularization::default(),
            normalization: Normalization::NullCov,
            selection: true,
        }
    }
}

impl TestOptions {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.bootstrap == 0 {
            return Err(invalid("B", "need at least one bootstrap replicate"));
        }
        self.regularization.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub mask: AlignMask,
    pub boot_stats: Vec<f64>,
    pub n: usize,
    pub alpha: f64,
    /// Statistic and threshold with every kernel kept (no selection).
    pub full_statistic: f64,
    pub full_threshold: f64,
    pub full_boot_stats: Vec<f64>,
    /// Per-kernel fraction of bootstrap replicates whose sign matched `f_tr`.
    pub boot_alignment: Vec<f64>,
    /// `L̂⁻¹ U` on the test split.
    pub whitened: Vec<f64>,
    pub lambda: f64,
}

impl TestResult {
    /// The result the same run would give with selection switched off.
    pub fn without_selection(&self) -> TestResult {
        TestResult {
            statistic: self.full_statistic,
            threshold: self.full_threshold,
            p_value: p_value(self.full_statistic, &self.full_boot_stats),
            reject: self.full_statistic > self.full_threshold,
            mask: AlignMask::ones(self.mask.len()),
            boot_stats: self.full_boot_stats.clone(),
            ..self.clone()
        }
    }
}

/// Studentizer for a sample: `L̂⁻¹` from a null resample of it, or `I`.
pub fn studentizer<R: Rng + ?Sized>(
    sample: &Sample,
    pool: &[PoolKernel],
    reg: Regularization,
    normalization: Normalization,
    rng: &mut R,
) -> Result<(SqrtInv, f64)> {
    match normalization {
        Normalization::Identity => Ok((SqrtInv::identity(pool.len()), 0.0)),
        Normalization::NullCov => {
            let w_h0 = ustat::null_resample(sample, rng)?;
            let stack_h0 = Geometry::new(&w_h0)?.stack(pool)?;
            let cov = ustat::estimate_null_cov(&stack_h0, reg)?;
            Ok((ustat::sqrt_inv(&cov)?, cov.lambda))
        }
    }
}

/// Full test on the held-out split with a fixed pool and training signs.
pub fn run_test<R: Rng + ?Sized>(
    sample_te: &Sample,
    pool: &[PoolKernel],
    f_tr: &SignVector,
    opts: &TestOptions,
    rng: &mut R,
) -> Result<TestResult> {
    opts.validate()?;
    if f_tr.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            got: f_tr.len(),
        });
    }
    let stack = Geometry::new(sample_te)?.stack(pool)?;
    let (linv, lambda) = studentizer(sample_te, pool, opts.regularization, opts.normalization, rng)?;
    test_with_stack(&stack, &linv, f_tr, opts, lambda, rng)
}

/// Observed statistic, bootstrap and decision for a prepared stack and studentizer.
pub fn test_with_stack<R: Rng + ?Sized>(
    stack: &HStack,
    linv: &SqrtInv,
    f_tr: &SignVector,
    opts: &TestOptions,
    lambda: f64,
    rng: &mut R,
) -> Result<TestResult> {
    opts.validate()?;
    let n = stack.n();
    let c = stack.c();
    let u = ustat::multi_u(stack)?;
    let whitened = linv.whiten(&u)?;
    let full_statistic = masked_sq_norm(n, &whitened, &AlignMask::ones(c));
    let mask = if opts.selection {
        alignment(f_tr, &signum(&whitened)?)?
    } else {
        AlignMask::ones(c)
    };
    let statistic = masked_sq_norm(n, &whitened, &mask);

    let b = opts.bootstrap;
    let mut boot_stats = Vec::with_capacity(b + 1);
    let mut full_stats = Vec::with_capacity(b + 1);
    let mut aligned = vec![0usize; c];
    let mut replicates = Vec::with_capacity(b);
    for start in (0..b).step_by(BATCH) {
        let eps: Vec<RademacherVec> = (start..b.min(start + BATCH)).map(|_| draw_rademacher(n, rng)).collect();
        replicates.extend(bootstrap_multi_u_batch(stack, &eps)?);
    }
    for ub in &replicates {
        let v = linv.whiten(ub)?;
        let mb = alignment(f_tr, &signum(&v)?)?;
        for (a, m) in aligned.iter_mut().zip(&mb.0) {
            *a += usize::from(*m);
        }
        full_stats.push(masked_sq_norm(n, &v, &AlignMask::ones(c)));
        boot_stats.push(if opts.selection {
            masked_sq_norm(n, &v, &mb)
        } else {
            *full_stats.last().unwrap()
        });
    }
    let p = p_value(statistic, &boot_stats);
    boot_stats.push(statistic);
    let tau = threshold(&boot_stats, opts.alpha)?;
    boot_stats.pop();
    full_stats.push(full_statistic);
    let full_threshold = threshold(&full_stats, opts.alpha)?;
    full_stats.pop();

    Ok(TestResult {
        statistic,
        threshold: tau,
        p_value: p,
        reject: statistic > tau,
        mask,
        boot_stats,
        n,
        alpha: opts.alpha,
        full_statistic,
        full_threshold,
        full_boot_stats: full_stats,
        boot_alignment: aligned.iter().map(|&a| a as f64 / b as f64).collect(),
        whitened,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TwoSamplePair;
    use crate::kernel::KernelSpec;
    use crate::seed;
    use crate::selection::selected_stat;
    use crate::ustat::{aggregated_stat, multi_u};
    use nalgebra::DMatrix;

    fn random_stack(n: usize, c: usize, s: u64) -> HStack {
        let mut rng = seed::rng(s);
        let mats: Vec<Vec<Vec<f64>>> = (0..c)
            .map(|_| {
                let mut m = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in i + 1..n {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        m[i][j] = v;
                        m[j][i] = v;
                    }
                }
                m
            })
            .collect();
        HStack::from_matrices(&mats).unwrap()
    }

    #[test]
    fn rademacher_entries_and_reproducibility() {
        let a = draw_rademacher(1000, &mut seed::rng(1));
        assert!(a.0.iter().all(|&e| e == 1 || e == -1));
        assert_eq!(a, draw_rademacher(1000, &mut seed::rng(1)));
    }

    #[test]
    fn rademacher_mean_within_clt_bound() {
        let n = 100_000;
        let e = draw_rademacher(n, &mut seed::rng(5));
        let mean = e.0.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn bootstrap_all_ones_and_global_flip() {
        let st = random_stack(7, 3, 2);
        let ones = RademacherVec(vec![1; 7]);
        let a = bootstrap_multi_u(&st, &ones).unwrap();
        let u = multi_u(&st).unwrap();
        for (x, y) in a.values.iter().zip(&u.values) {
            assert!((x - y).abs() < 1e-15);
        }
        let eps = draw_rademacher(7, &mut seed::rng(8));
        let neg = RademacherVec(eps.0.iter().map(|e| -e).collect());
        assert_eq!(bootstrap_multi_u(&st, &eps).unwrap(), bootstrap_multi_u(&st, &neg).unwrap());
        assert!(bootstrap_multi_u(&st, &RademacherVec(vec![1; 6])).is_err());
    }

    #[test]
    fn bootstrap_stat_reduces_and_composes() {
        let st = random_stack(6, 3, 4);
        let linv = SqrtInv {
            linv: DMatrix::from_row_slice(3, 3, &[1.2, 0.1, 0.0, 0.1, 0.8, -0.2, 0.0, -0.2, 1.0]),
        };
        let u = multi_u(&st).unwrap();
        let f_tr = SignVector(vec![1, -1, 1]);
        let mask = alignment(&f_tr, &signum(&linv.whiten(&u).unwrap()).unwrap()).unwrap();
        let observed = selected_stat(&u, &linv, &mask).unwrap();
        let ones = RademacherVec(vec![1; 6]);
        assert!((bootstrap_stat(&st, &linv, &f_tr, &ones).unwrap() - observed).abs() < 1e-12);

        let eps = draw_rademacher(6, &mut seed::rng(12));
        let ub = bootstrap_multi_u(&st, &eps).unwrap();
        let fb = signum(&linv.whiten(&ub).unwrap()).unwrap();
        let composed = selected_stat(&ub, &linv, &alignment(&f_tr, &fb).unwrap()).unwrap();
        assert_eq!(bootstrap_stat(&st, &linv, &f_tr, &eps).unwrap(), composed);

        let zero = HStack::from_matrices(&[vec![vec![0.0; 4]; 4]]).unwrap();
        let r = bootstrap_stat(&zero, &SqrtInv::identity(1), &SignVector(vec![1]), &RademacherVec(vec![1, -1, 1, 1]));
        assert_eq!(r.unwrap(), 0.0);
        let _ = aggregated_stat(&u, &linv).unwrap();
    }

    #[test]
    fn batched_bootstrap_matches_single() {
        let st = random_stack(9, 3, 21);
        let mut rng = seed::rng(3);
        let eps: Vec<RademacherVec> = (0..5).map(|_| draw_rademacher(9, &mut rng)).collect();
        let batch = bootstrap_multi_u_batch(&st, &eps).unwrap();
        for (e, ub) in eps.iter().zip(&batch) {
            let single = bootstrap_multi_u(&st, e).unwrap();
            for (a, b) in single.values.iter().zip(&ub.values) {
                assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
            }
        }
        assert!(bootstrap_multi_u_batch(&st, &[RademacherVec(vec![1; 8])]).is_err());
    }

    #[test]
    fn without_selection_matches_unselected_run() {
        let mut rng = seed::rng(6);
        let w: Vec<TwoSamplePair> = (0..24)
            .map(|_| TwoSamplePair {
                x: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                y: vec![rng.random_range(-0.8..1.2), rng.random_range(-1.0..1.0)],
            })
            .collect();
        let s = Sample::TwoSample(w);
        let pool: Vec<PoolKernel> = [0.4, 1.0, 2.5].iter().map(|&b| PoolKernel::Mmd(KernelSpec::gaussian(b))).collect();
        let f = SignVector(vec![1, -1, 1]);
        let on = TestOptions { bootstrap: 99, ..Default::default() };
        let off = TestOptions { selection: false, ..on };
        let a = run_test(&s, &pool, &f, &on, &mut seed::rng(2)).unwrap();
        let b = run_test(&s, &pool, &f, &off, &mut seed::rng(2)).unwrap();
        assert_eq!(a.without_selection(), b);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold(&[1.0, 2.0, 3.0, 4.0], 0.05).unwrap(), 4.0);
        assert_eq!(threshold(&[4.0, 2.0, 1.0, 3.0], 0.25).unwrap(), 3.0);
        assert!(threshold(&[], 0.05).is_err());
        assert!(threshold(&[1.0], 1.0).is_err());
    }

    #[test]
    fn threshold_order_statistic_oracle() {
        let mut rng = seed::rng(77);
        let stats: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let mut sorted = stats.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // ⌈0.95 · 200⌉ = 190
        assert_eq!(threshold(&stats, 0.05).unwrap(), sorted[189]);
    }

    #[test]
    fn p_value_counts_ties() {
        assert_eq!(p_value(2.0, &[1.0, 2.0, 3.0]), 0.75);
        assert_eq!(p_value(5.0, &[1.0, 2.0, 3.0]), 0.25);
    }

    #[test]
    fn fully_degenerate_two_sample_data() {
        let w: Vec<TwoSamplePair> = (0..10)
            .map(|i| {
                let p = vec![i as f64 * 0.3, (i * i) as f64 * 0.1];
                TwoSamplePair { x: p.clone(), y: p }
            })
            .collect();
        let s = Sample::TwoSample(w);
        let pool: Vec<PoolKernel> = [0.5, 1.0, 2.0].iter().map(|&b| PoolKernel::Mmd(KernelSpec::gaussian(b))).collect();
        let r = run_test(&s, &pool, &SignVector::ones(3), &TestOptions::default(), &mut seed::rng(1)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.boot_stats.iter().all(|&b| b == 0.0));
        assert_eq!(r.threshold, 0.0);
        assert!(!r.reject);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn run_test_is_deterministic() {
        let mut rng = seed::rng(4);
        let w: Vec<TwoSamplePair> = (0..20)
            .map(|_| TwoSamplePair {
                x: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                y: vec![rng.random_range(-1.0..1.5), rng.random_range(-1.0..1.0)],
            })
            .collect();
        let s = Sample::TwoSample(w);
        let pool: Vec<PoolKernel> = [0.3, 1.0].iter().map(|&b| PoolKernel::Mmd(KernelSpec::gaussian(b))).collect();
        let f = SignVector(vec![1, -1]);
        let opts = TestOptions { bootstrap: 50, ..Default::default() };
        let a = run_test(&s, &pool, &f, &opts, &mut seed::rng(10)).unwrap();
        let b = run_test(&s, &pool, &f, &opts, &mut seed::rng(10)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reject, a.statistic > a.threshold);
        assert_eq!(a.boot_stats.len(), 50);
        assert!(run_test(&s, &pool, &SignVector(vec![1]), &opts, &mut seed::rng(10)).is_err());
    }
}
