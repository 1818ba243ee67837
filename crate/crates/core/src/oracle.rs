//! Slow reference implementations and the self-check that compares them
//! with the packed fast paths.
//!
//! Everything here works on plain `Vec<Vec<f64>>`, evaluates kernels
//! directly per pair and uses its own elimination and square-root
//! iteration, so it shares no numerical code with the main modules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boottest::{bootstrap_multi_u, draw_rademacher, RademacherVec};
use crate::data::{IndepQuad, Problem, Sample, TwoSamplePair};
use crate::error::Result;
use crate::kernel::{build_h_stack, CholeskyFactor, KernelSpec, PoolKernel};
use crate::seed;
use crate::selection::{selected_stat, AlignMask};
use crate::ustat::{aggregated_stat, estimate_null_cov, multi_u, sqrt_inv, MultiU, Regularization};

type Mat = Vec<Vec<f64>>;

/// `h_k(w_i, w_j)` for every pair `i < j`, kernel-major.
pub fn h_pairs(pool: &[PoolKernel], sample: &Sample) -> Result<Vec<Vec<f64>>> {
    let n = sample.len();
    pool.iter()
        .map(|k| {
            let mut v = vec![];
            for i in 0..n {
                for j in i + 1..n {
                    v.push(k.h(sample, i, j)?);
                }
            }
            Ok(v)
        })
        .collect()
}

pub fn u_stat(pool: &[PoolKernel], sample: &Sample) -> Result<Vec<f64>> {
    Ok(h_pairs(pool, sample)?
        .iter()
        .map(|h| h.iter().sum::<f64>() / h.len() as f64)
        .collect())
}

/// `n²/N² Σ_{i<j} h_a h_b + λ δ_ab`.
pub fn null_cov(pool: &[PoolKernel], w_h0: &Sample, lambda: f64) -> Result<Mat> {
    let h = h_pairs(pool, w_h0)?;
    let n = w_h0.len() as f64;
    let np = h[0].len() as f64;
    let c = pool.len();
    let mut s = vec![vec![0.0; c]; c];
    for a in 0..c {
        for b in 0..c {
            let dot: f64 = h[a].iter().zip(&h[b]).map(|(x, y)| x * y).sum();
            s[a][b] = n * n / (np * np) * dot + if a == b { lambda } else { 0.0 };
        }
    }
    Ok(s)
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let m = b.len();
    let mut aug: Mat = a.iter().zip(b).map(|(r, &bi)| r.iter().copied().chain([bi]).collect()).collect();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, piv);
        for r in col + 1..m {
            let f = aug[r][col] / aug[col][col];
            for k in col..=m {
                aug[r][k] -= f * aug[col][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| aug[r][k] * x[k]).sum();
        x[r] = (aug[r][m] - s) / aug[r][r];
    }
    x
}

fn inverse(a: &Mat) -> Mat {
    let m = a.len();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| solve(a, &(0..m).map(|i| f64::from(u8::from(i == j))).collect::<Vec<_>>()))
        .collect();
    (0..m).map(|i| (0..m).map(|j| cols[j][i]).collect()).collect()
}

/// `A^{-1/2}` by the Denman–Beavers iteration.
pub fn inv_sqrt(a: &Mat) -> Mat {
    let m = a.len();
    let mut y = a.clone();
    let mut z: Mat = (0..m).map(|i| (0..m).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let (yi, zi) = (inverse(&y), inverse(&z));
        let ny: Mat = (0..m).map(|i| (0..m).map(|j| 0.5 * (y[i][j] + zi[i][j])).collect()).collect();
        let nz: Mat = (0..m).map(|i| (0..m).map(|j| 0.5 * (z[i][j] + yi[i][j])).collect()).collect();
        let delta: f64 = ny.iter().flatten().zip(y.iter().flatten()).map(|(p, q)| (p - q).abs()).sum();
        let scale: f64 = ny.iter().flatten().map(|p| p.abs()).sum();
        y = ny;
        z = nz;
        if delta <= 1e-15 * scale {
            break;
        }
    }
    z
}

/// `n² uᵀ S⁻¹ u`.
pub fn aggregated(u: &[f64], s: &Mat, n: usize) -> f64 {
    let x = solve(s, u);
    (n * n) as f64 * u.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
}

/// `n² Σ_i mask_i (S^{-1/2} u)_i²`.
pub fn selected(u: &[f64], s: &Mat, n: usize, mask: &[u8]) -> f64 {
    let l = inv_sqrt(s);
    let v: Vec<f64> = l.iter().map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum()).collect();
    (n * n) as f64 * v.iter().zip(mask).filter(|(_, &m)| m == 1).map(|(x, _)| x * x).sum::<f64>()
}

/// `Σ_{i<j} ε_i ε_j h_k(w_i,w_j) / N` per kernel.
pub fn bootstrap_u(pool: &[PoolKernel], sample: &Sample, eps: &[i8]) -> Result<Vec<f64>> {
    let n = sample.len();
    pool.iter()
        .map(|k| {
            let (mut s, mut cnt) = (0.0, 0usize);
            for i in 0..n {
                for j in i + 1..n {
                    s += f64::from(eps[i] * eps[j]) * k.h(sample, i, j)?;
                    cnt += 1;
                }
            }
            Ok(s / cnt as f64)
        })
        .collect()
}

/// `|a − b| / scale` with `scale = max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor).max(f64::MIN_POSITIVE)
}

pub fn random_kernel(dim: usize, rng: &mut seed::Rng) -> KernelSpec {
    let bw = rng.random_range(0.5..3.0);
    match rng.random_range(0..3) {
        0 => KernelSpec::gaussian(bw),
        1 => KernelSpec::laplacian(bw),
        _ => {
            let log_diag = (0..dim).map(|_| rng.random_range(-1.0..0.5)).collect();
            let strict = (0..dim * (dim - 1) / 2).map(|_| rng.random_range(-0.5..0.5)).collect();
            KernelSpec::mahalanobis(CholeskyFactor::from_parts(log_diag, strict).expect("valid factor"))
        }
    }
}

/// `n` items with coordinates uniform on `[-2, 2]`.
pub fn random_sample(rng: &mut seed::Rng, problem: Problem, n: usize, d: usize) -> Sample {
    let v = |rng: &mut seed::Rng| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    match problem {
        Problem::TwoSample => Sample::TwoSample((0..n).map(|_| TwoSamplePair { x: v(rng), y: v(rng) }).collect()),
        Problem::Independence => Sample::Independence(
            (0..n)
                .map(|_| IndepQuad {
                    x1: v(rng),
                    x2: v(rng),
                    y1: v(rng),
                    y2: v(rng),
                })
                .collect(),
        ),
    }
}

/// A random small problem: sample and pool.
pub fn random_instance(rng: &mut seed::Rng, n_range: (usize, usize), max_c: usize, d: usize) -> (Sample, Vec<PoolKernel>) {
    let n = rng.random_range(n_range.0..=n_range.1);
    let c = rng.random_range(1..=max_c);
    if rng.random::<bool>() {
        let pool = (0..c).map(|_| PoolKernel::Mmd(random_kernel(d, rng))).collect();
        (random_sample(rng, Problem::TwoSample, n, d), pool)
    } else {
        let pool = (0..c)
            .map(|_| PoolKernel::Hsic {
                x: random_kernel(d, rng),
                y: random_kernel(d, rng),
            })
            .collect();
        (random_sample(rng, Problem::Independence, n, d), pool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Instances whose regularized covariance is worse conditioned than this
/// are redrawn: beyond it any two backward-stable evaluations of `uᵀS⁻¹u`
/// may differ by more than the tolerance.
pub const MAX_CONDITION: f64 = 1e4;

/// Compares each fast path with its reference on `instances` random
/// problems (`4 ≤ n ≤ 8`, `c ≤ 3`, `d = 2`, null sample drawn fresh).
pub fn selfcheck(instances: usize, base_seed: u64, tolerance: f64) -> Result<Vec<CheckResult>> {
    let names = ["u_stat", "null_cov", "aggregated_stat", "bootstrap_multi_u", "selected_stat"];
    let mut worst = [0.0f64; 5];
    let mut draw = 0u64;
    for _ in 0..instances {
        let (mut rng, sample, pool, w_h0, cov) = loop {
            let mut rng = seed::rng(seed::mix(base_seed, draw, 0));
            draw += 1;
            let (sample, pool) = random_instance(&mut rng, (4, 8), 3, 2);
            let w_h0 = random_sample(&mut rng, sample.problem(), sample.len(), 2);
            let cov = estimate_null_cov(&build_h_stack(&pool, &w_h0)?, Regularization::default())?;
            if cov.condition_number() <= MAX_CONDITION {
                break (rng, sample, pool, w_h0, cov);
            }
        };
        let n = sample.len();
        let h = h_pairs(&pool, &sample)?;
        let term_scale = |k: usize| h[k].iter().map(|x| x.abs()).sum::<f64>() / h[k].len() as f64;

        let fast_u = multi_u(&build_h_stack(&pool, &sample)?)?;
        let ref_u = u_stat(&pool, &sample)?;
        for k in 0..pool.len() {
            worst[0] = worst[0].max(rel_err(fast_u.values[k], ref_u[k], term_scale(k)));
        }

        let ref_s = null_cov(&pool, &w_h0, cov.lambda)?;
        for (a, row) in ref_s.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                // off-diagonal entries are scaled by the Cauchy–Schwarz bound
                let bound = (ref_s[a][a] * ref_s[b][b]).sqrt();
                worst[1] = worst[1].max(rel_err(cov.regularized[(a, b)], v, bound));
            }
        }

        let linv = sqrt_inv(&cov)?;
        let u = MultiU {
            values: ref_u.clone(),
            n,
        };
        let fast_t = aggregated_stat(&u, &linv)?;
        let ref_t = aggregated(&ref_u, &ref_s, n);
        worst[2] = worst[2].max(rel_err(fast_t, ref_t, 1e-300));

        let eps: RademacherVec = draw_rademacher(n, &mut rng);
        let fast_b = bootstrap_multi_u(&build_h_stack(&pool, &sample)?, &eps)?;
        let ref_b = bootstrap_u(&pool, &sample, &eps.0)?;
        for k in 0..pool.len() {
            worst[3] = worst[3].max(rel_err(fast_b.values[k], ref_b[k], term_scale(k)));
        }

        let mask: Vec<u8> = (0..pool.len()).map(|_| rng.random_range(0..2)).collect();
        let fast_s = selected_stat(&u, &linv, &AlignMask(mask.clone()))?;
        let ref_sel = selected(&ref_u, &ref_s, n, &mask);
        worst[4] = worst[4].max(rel_err(fast_s, ref_sel, ref_t));
    }
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, e)| CheckResult {
            name: (*name).into(),
            instances,
            max_rel_err: e,
            tolerance,
            pass: e <= tolerance,
        })
        .collect())
}
