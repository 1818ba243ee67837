//! Synthetic datasets and the seeded train/test split.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{IndepQuad, Problem, Sample, TwoSamplePair};
use crate::error::{invalid, Error, Result};
use crate::seed;

pub const BLOB_SPACING: f64 = 5.0;
pub const BLOB_RHO: f64 = 0.5;
pub const INDEP_DIM: usize = 20;
pub const INDEP_STRENGTH: f64 = 0.2;
pub const INDEP_NOISE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alt,
}

impl Hypothesis {
    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::Null => "null",
            Hypothesis::Alt => "alt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dataset", rename_all = "lowercase")]
pub enum DatasetKind {
    /// 2-d mixture of nine unit Gaussians on a 3×3 grid.
    Blob { rho: f64 },
    /// `y_j = a·x_j + σ_n·ε_j` on the first `perturbed` coordinates.
    Indep {
        dim: usize,
        strength: f64,
        noise: f64,
        perturbed: usize,
    },
}

impl DatasetKind {
    pub fn blob() -> Self {
        DatasetKind::Blob { rho: BLOB_RHO }
    }

    pub fn indep(dim: usize) -> Self {
        DatasetKind::Indep {
            dim,
            strength: INDEP_STRENGTH,
            noise: INDEP_NOISE,
            perturbed: dim.min(3),
        }
    }

    pub fn problem(&self) -> Problem {
        match self {
            DatasetKind::Blob { .. } => Problem::TwoSample,
            DatasetKind::Indep { .. } => Problem::Independence,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Blob { .. } => "blob",
            DatasetKind::Indep { .. } => "indep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub hypothesis: Hypothesis,
    /// Items per split; [`generate`] produces `2n`.
    pub n: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, hypothesis: Hypothesis, n: usize, seed: u64) -> Self {
        DatasetSpec {
            kind,
            hypothesis,
            n,
            seed,
        }
    }

    pub fn problem(&self) -> Problem {
        self.kind.problem()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(invalid("n", format!("need n >= 4, got {}", self.n)));
        }
        match self.kind {
            DatasetKind::Blob { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(invalid("rho", "|rho| must be < 1 for a positive definite covariance"));
                }
            }
            DatasetKind::Indep {
                dim,
                strength,
                noise,
                perturbed,
            } => {
                if dim == 0 {
                    return Err(invalid("d", "dimension must be >= 1"));
                }
                if perturbed > dim {
                    return Err(invalid("k", format!("perturbed dimensions {perturbed} exceed d = {dim}")));
                }
                if !strength.is_finite() {
                    return Err(invalid("a", "must be finite"));
                }
                if !(noise.is_finite() && noise >= 0.0) {
                    return Err(invalid("noise", "must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

fn normal(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `2n` BLOB pairs. Under the null the `y` modes are isotropic; the draw
/// sequence is identical for both hypotheses, so `rho = 0` is the null.
pub fn gen_blob(spec: &DatasetSpec) -> Result<Vec<TwoSamplePair>> {
    spec.validate()?;
    let DatasetKind::Blob { rho } = spec.kind else {
        return Err(Error::ProblemMismatch("gen_blob needs a blob spec"));
    };
    let rho = match spec.hypothesis {
        Hypothesis::Null => 0.0,
        Hypothesis::Alt => rho,
    };
    let mut rng = seed::rng(spec.seed);
    let mode = |rng: &mut seed::Rng| {
        let (i, j) = (rng.random_range(0..3usize), rng.random_range(0..3usize));
        (i, j, i as f64 * BLOB_SPACING, j as f64 * BLOB_SPACING)
    };
    let out = (0..2 * spec.n)
        .map(|_| {
            let (_, _, cx, cy) = mode(&mut rng);
            let x = vec![cx + normal(&mut rng), cy + normal(&mut rng)];
            let (i, j, cx, cy) = mode(&mut rng);
            let r = if (i + j) % 2 == 0 { rho } else { -rho };
            let (z1, z2) = (normal(&mut rng), normal(&mut rng));
            let y = vec![cx + z1, cy + r * z1 + (1.0 - r * r).sqrt() * z2];
            TwoSamplePair { x, y }
        })
        .collect();
    Ok(out)
}

/// `m` raw `(x, y)` observations. Under the null every `y` coordinate is an
/// independent standard normal; with `a = 0`, `σ_n = 1` the alternative
/// draws exactly the same values.
pub fn gen_indep_raw(spec: &DatasetSpec, m: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    spec.validate()?;
    let DatasetKind::Indep {
        dim,
        strength,
        noise,
        perturbed,
    } = spec.kind
    else {
        return Err(Error::ProblemMismatch("gen_indep needs an indep spec"));
    };
    let mut rng = seed::rng(spec.seed);
    let out = (0..m)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
            let y = (0..dim)
                .map(|j| {
                    let e = normal(&mut rng);
                    match spec.hypothesis {
                        Hypothesis::Alt if j < perturbed => strength * x[j] + noise * e,
                        _ => e,
                    }
                })
                .collect();
            (x, y)
        })
        .collect();
    Ok(out)
}

/// `w_i = (x_i, x_{i+h}, y_i, y_{i+h})` with `h = ⌊m/2⌋`; an odd last
/// observation is dropped.
pub fn pair_quads(raw: &[(Vec<f64>, Vec<f64>)]) -> Vec<IndepQuad> {
    let h = raw.len() / 2;
    (0..h)
        .map(|i| IndepQuad {
            x1: raw[i].0.clone(),
            x2: raw[i + h].0.clone(),
            y1: raw[i].1.clone(),
            y2: raw[i + h].1.clone(),
        })
        .collect()
}

/// `2n` quads built from `4n` raw observations, plus the raw stream.
pub fn gen_indep(spec: &DatasetSpec) -> Result<(Vec<IndepQuad>, Vec<(Vec<f64>, Vec<f64>)>)> {
    let raw = gen_indep_raw(spec, 4 * spec.n)?;
    Ok((pair_quads(&raw), raw))
}

/// Both splits together (`2n` items).
pub fn generate(spec: &DatasetSpec) -> Result<Sample> {
    match spec.kind {
        DatasetKind::Blob { .. } => Ok(Sample::TwoSample(gen_blob(spec)?)),
        DatasetKind::Indep { .. } => Ok(Sample::Independence(gen_indep(spec)?.0)),
    }
}

/// Equal disjoint halves by a seeded permutation.
pub fn split_train_test(sample: &Sample, split_seed: u64) -> Result<(Sample, Sample)> {
    let m = sample.len();
    if m < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: m });
    }
    if !m.is_multiple_of(2) {
        return Err(Error::OddSample(m));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut seed::rng(split_seed));
    let (a, b) = idx.split_at(m / 2);
    Ok((sample.select(a), sample.select(b)))
}
