//! Sign vectors, train/test alignment masks and the masked statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ustat::{MultiU, SqrtInv};

/// Entries in `{-1, +1}`; a zero coordinate maps to `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignVector(pub Vec<i8>);

impl SignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(c: usize) -> Self {
        SignVector(vec![1; c])
    }

    pub fn negated(&self) -> Self {
        SignVector(self.0.iter().map(|s| -s).collect())
    }
}

/// Entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignMask(pub Vec<u8>);

impl AlignMask {
    pub fn ones(c: usize) -> Self {
        AlignMask(vec![1; c])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&m| m == 1).count()
    }
}

pub fn signum(v: &[f64]) -> Result<SignVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("signum input"));
    }
    Ok(SignVector(v.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect()))
}

pub fn alignment(f_tr: &SignVector, f_te: &SignVector) -> Result<AlignMask> {
    if f_tr.len() != f_te.len() {
        return Err(Error::DimensionMismatch {
            expected: f_tr.len(),
            got: f_te.len(),
        });
    }
    Ok(AlignMask(
        f_tr.0.iter().zip(&f_te.0).map(|(a, b)| u8::from(a == b)).collect(),
    ))
}

/// `n² Σ_i mask_i · v_i²` for an already whitened vector `v`.
pub(crate) fn masked_sq_norm(n: usize, v: &[f64], mask: &AlignMask) -> f64 {
    let n2 = (n as f64).powi(2);
    n2 * v
        .iter()
        .zip(&mask.0)
        .filter(|(_, &m)| m == 1)
        .map(|(x, _)| x * x)
        .sum::<f64>()
}

/// `n² ‖mask ⊙ (L̂⁻¹ u)‖²`.
pub fn selected_stat(u: &MultiU, linv: &SqrtInv, mask: &AlignMask) -> Result<f64> {
    if mask.len() != u.c() {
        return Err(Error::DimensionMismatch {
            expected: u.c(),
            got: mask.len(),
        });
    }
    let v = linv.whiten(u)?;
    Ok(masked_sq_norm(u.n, &v, mask))
}
