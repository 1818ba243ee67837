//! Second-order U-statistics over an [`HStack`], the null covariance
//! estimate, its inverse symmetric square root and the studentized
//! aggregate `n²·uᵀ(Σ̂+λI)⁻¹u`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{IndepQuad, Sample, TwoSamplePair};
use crate::error::{invalid, Error, Result};
use crate::kernel::HStack;

/// Smallest ridge ever added by [`Regularization::Scaled`].
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Vector of per-kernel U-statistics on one sample, in pool order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiU {
    pub values: Vec<f64>,
    pub n: usize,
}

impl MultiU {
    pub fn c(&self) -> usize {
        self.values.len()
    }
}

/// How the ridge `λ` added to `Σ̂` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// `λ = max(factor · trace(Σ̂)/c, 1e-12)`.
    Scaled { factor: f64 },
    /// A fixed `λ ≥ 0`.
    Fixed(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Scaled { factor: 1e-6 }
    }
}

impl Regularization {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            Regularization::Scaled { factor } => factor,
            Regularization::Fixed(l) => l,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid("lambda", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Ridge for a covariance with the given trace, and whether it depends
    /// on that trace (needed for the training gradient).
    pub fn lambda(&self, trace: f64, c: usize) -> (f64, bool) {
        match *self {
            Regularization::Fixed(l) => (l, false),
            Regularization::Scaled { factor } => {
                let l = factor * trace / c as f64;
                if l > LAMBDA_FLOOR {
                    (l, true)
                } else {
                    (LAMBDA_FLOOR, false)
                }
            }
        }
    }
}

/// Null covariance estimate of `n·U` with its ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct NullCov {
    pub sigma: DMatrix<f64>,
    pub lambda: f64,
    pub regularized: DMatrix<f64>,
    /// Eigenvalues of `regularized`, ascending.
    pub eigenvalues: Vec<f64>,
}

impl NullCov {
    /// Adds `lambda·I` to a symmetric matrix and checks it is numerically PD.
    pub fn from_sigma(sigma: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid("lambda", "must be finite and >= 0"));
        }
        let c = sigma.nrows();
        let regularized = &sigma + DMatrix::identity(c, c) * lambda;
        let eigenvalues = sorted_eigenvalues(&regularized);
        let min = eigenvalues[0];
        let max = eigenvalues[c - 1];
        if !(min > 0.0 && min > max.abs() * c as f64 * f64::EPSILON) || !max.is_finite() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(NullCov {
            sigma,
            lambda,
            regularized,
            eigenvalues,
        })
    }

    pub fn c(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[self.c() - 1] / self.eigenvalues[0]
    }
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Inverse of the symmetric PD square root of the regularized null covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SqrtInv {
    pub linv: DMatrix<f64>,
}

impl SqrtInv {
    /// Used when covariance studentization is switched off.
    pub fn identity(c: usize) -> Self {
        SqrtInv {
            linv: DMatrix::identity(c, c),
        }
    }

    pub fn c(&self) -> usize {
        self.linv.nrows()
    }

    /// `L̂⁻¹ u`.
    pub fn whiten(&self, u: &MultiU) -> Result<Vec<f64>> {
        if u.c() != self.c() {
            return Err(Error::DimensionMismatch {
                expected: self.c(),
                got: u.c(),
            });
        }
        let v = &self.linv * DVector::from_column_slice(&u.values);
        Ok(v.iter().copied().collect())
    }
}

/// `binom(n,2)⁻¹ Σ_{i<j} H_k[i][j]` for one kernel of the stack.
pub fn u_stat(stack: &HStack, k: usize) -> Result<f64> {
    if stack.n() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: stack.n(),
        });
    }
    if k >= stack.c() {
        return Err(Error::DimensionMismatch {
            expected: stack.c(),
            got: k,
        });
    }
    let np = stack.n_pairs();
    let sum: f64 = (0..np).map(|p| stack.pair(p)[k]).sum();
    Ok(sum / np as f64)
}

/// Per-kernel U-statistics, preserving kernel order.
pub fn multi_u(stack: &HStack) -> Result<MultiU> {
    if stack.n() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: stack.n(),
        });
    }
    let c = stack.c();
    let np = stack.n_pairs();
    let mut acc = vec![0.0; c];
    for p in 0..np {
        for (a, h) in acc.iter_mut().zip(stack.pair(p)) {
            *a += h;
        }
    }
    Ok(MultiU {
        values: acc.into_iter().map(|s| s / np as f64).collect(),
        n: stack.n(),
    })
}

/// Simulate a sample from the null by resampling `sample` with replacement.
///
/// Two-sample: each new `x'` and `y'` is drawn independently from the pooled
/// `{x_i} ∪ {y_i}`. Independence: x-halves and y-halves come from two
/// independent index draws, which breaks the x–y coupling.
pub fn null_resample<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> Result<Sample> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    Ok(match sample {
        Sample::TwoSample(w) => {
            let pick = |r: usize| -> &Vec<f64> {
                if r < n {
                    &w[r].x
                } else {
                    &w[r - n].y
                }
            };
            Sample::TwoSample(
                (0..n)
                    .map(|_| {
                        let a = rng.random_range(0..2 * n);
                        let b = rng.random_range(0..2 * n);
                        TwoSamplePair {
                            x: pick(a).clone(),
                            y: pick(b).clone(),
                        }
                    })
                    .collect(),
            )
        }
        Sample::Independence(w) => Sample::Independence(
            (0..n)
                .map(|_| {
                    let a = rng.random_range(0..n);
                    let b = rng.random_range(0..n);
                    IndepQuad {
                        x1: w[a].x1.clone(),
                        x2: w[a].x2.clone(),
                        y1: w[b].y1.clone(),
                        y2: w[b].y2.clone(),
                    }
                })
                .collect(),
        ),
    })
}

/// Unregularized `Σ̂` with entries `n² binom(n,2)⁻² Σ_{i<j} h_a h_b`.
pub fn null_sigma(stack_h0: &HStack) -> Result<DMatrix<f64>> {
    let n = stack_h0.n();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let c = stack_h0.c();
    let np = stack_h0.n_pairs();
    let mut sigma = DMatrix::zeros(c, c);
    for p in 0..np {
        let h = stack_h0.pair(p);
        for a in 0..c {
            let ha = h[a];
            for b in a..c {
                sigma[(a, b)] += ha * h[b];
            }
        }
    }
    let scale = (n as f64 / np as f64).powi(2);
    for a in 0..c {
        for b in a..c {
            let v = sigma[(a, b)] * scale;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    Ok(sigma)
}

/// `Σ̂ + λI` from a stack built on a null resample.
pub fn estimate_null_cov(stack_h0: &HStack, reg: Regularization) -> Result<NullCov> {
    reg.validate()?;
    let sigma = null_sigma(stack_h0)?;
    let (lambda, _) = reg.lambda(sigma.trace(), sigma.nrows());
    NullCov::from_sigma(sigma, lambda)
}

/// `L̂⁻¹` with `L̂ L̂ = Σ̂ + λI`, through the spectral decomposition.
pub fn sqrt_inv(cov: &NullCov) -> Result<SqrtInv> {
    let eig = SymmetricEigen::new(cov.regularized.clone());
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: bad });
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt()));
    let q = &eig.eigenvectors;
    let m = q * scale * q.transpose();
    Ok(SqrtInv {
        linv: (&m + m.transpose()) * 0.5,
    })
}

/// `n² ‖L̂⁻¹ u‖²`.
pub fn aggregated_stat(u: &MultiU, linv: &SqrtInv) -> Result<f64> {
    let v = linv.whiten(u)?;
    let n2 = (u.n as f64).powi(2);
    Ok(n2 * v.iter().map(|x| x * x).sum::<f64>())
}

/// `(1 + |Cor(a,b)| · sqrt(Var(a)/Var(b)))⁻¹` between two series of
/// U-statistics; 1 means fully diverse, 1/2 means redundant copies.
pub fn relative_diversity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: a.len() });
    }
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    if !(vb > 0.0) {
        return Err(Error::DegenerateSeries("denominator series has zero variance"));
    }
    if !(va > 0.0) {
        // Cor is undefined but the ratio term vanishes.
        return Ok(1.0);
    }
    let cor = cab / (va * vb).sqrt();
    Ok(1.0 / (1.0 + cor.abs() * (va / vb).sqrt()))
}
