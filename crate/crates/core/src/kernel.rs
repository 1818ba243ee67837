//! Kernel families, the MMD and HSIC core functions, and the per-kernel
//! matrices of pairwise h-values every statistic is built from.
//!
//! All three families are bounded by one and equal exactly one at equal
//! arguments. Bandwidths are stored as logarithms and the Mahalanobis
//! precision as a lower-triangular factor with log-diagonal, so any real
//! parameter vector is a valid kernel.

use serde::{Deserialize, Serialize};

use crate::data::{IndepQuad, Problem, Sample, TwoSamplePair};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplacian,
    Mahalanobis,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Laplacian => "laplacian",
            Family::Mahalanobis => "mahalanobis",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "g" => Ok(Family::Gaussian),
            "laplacian" | "l" => Ok(Family::Laplacian),
            "mahalanobis" | "m" => Ok(Family::Mahalanobis),
            other => Err(invalid("family", format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Lower-triangular `M` with positive diagonal; the kernel precision is `M Mᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    dim: usize,
    log_diag: Vec<f64>,
    /// Strictly-lower entries, row-major: (1,0), (2,0), (2,1), ...
    strict_lower: Vec<f64>,
}

impl CholeskyFactor {
    /// `M = I / bandwidth`, i.e. the precision `I / bandwidth²` of a Gaussian
    /// kernel with the same bandwidth.
    pub fn isotropic(dim: usize, bandwidth: f64) -> Self {
        CholeskyFactor {
            dim,
            log_diag: vec![-bandwidth.ln(); dim],
            strict_lower: vec![0.0; dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn from_parts(log_diag: Vec<f64>, strict_lower: Vec<f64>) -> Result<Self> {
        let dim = log_diag.len();
        if dim == 0 {
            return Err(Error::Empty("Mahalanobis factor"));
        }
        if strict_lower.len() != dim * (dim - 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: dim * (dim - 1) / 2,
                got: strict_lower.len(),
            });
        }
        Ok(CholeskyFactor {
            dim,
            log_diag,
            strict_lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense row-major `d × d` factor.
    pub fn dense(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        let mut idx = 0;
        for r in 0..d {
            for s in 0..r {
                m[r * d + s] = self.strict_lower[idx];
                idx += 1;
            }
            m[r * d + r] = self.log_diag[r].exp();
        }
        m
    }

    /// Dense precision `M Mᵀ`.
    pub fn precision(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.dense();
        let mut p = vec![0.0; d * d];
        for r in 0..d {
            for s in 0..d {
                p[r * d + s] = (0..d).map(|t| m[r * d + t] * m[s * d + t]).sum();
            }
        }
        p
    }
}

/// One base kernel with its trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-‖u-v‖² / σ²)`
    Gaussian { log_bandwidth: f64 },
    /// `exp(-‖u-v‖ / σ)`
    Laplacian { log_bandwidth: f64 },
    /// `exp(-(u-v)ᵀ M Mᵀ (u-v))`
    Mahalanobis { factor: CholeskyFactor },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Self {
        KernelSpec::Gaussian {
            log_bandwidth: bandwidth.ln(),
        }
    }

    pub fn laplacian(bandwidth: f64) -> Self {
        KernelSpec::Laplacian {
            log_bandwidth: bandwidth.ln(),
        }
    }

    pub fn mahalanobis(factor: CholeskyFactor) -> Self {
        KernelSpec::Mahalanobis { factor }
    }

    /// Kernel of `family` at scale `bandwidth`; Mahalanobis starts isotropic.
    pub fn with_bandwidth(family: Family, dim: usize, bandwidth: f64) -> Self {
        match family {
            Family::Gaussian => Self::gaussian(bandwidth),
            Family::Laplacian => Self::laplacian(bandwidth),
            Family::Mahalanobis => Self::mahalanobis(CholeskyFactor::isotropic(dim, bandwidth)),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            KernelSpec::Gaussian { .. } => Family::Gaussian,
            KernelSpec::Laplacian { .. } => Family::Laplacian,
            KernelSpec::Mahalanobis { .. } => Family::Mahalanobis,
        }
    }

    /// Bandwidth for the isotropic families, `None` for Mahalanobis.
    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            KernelSpec::Gaussian { log_bandwidth } | KernelSpec::Laplacian { log_bandwidth } => {
                Some(log_bandwidth.exp())
            }
            KernelSpec::Mahalanobis { .. } => None,
        }
    }

    /// Input dimension this kernel is tied to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Mahalanobis { factor } => Some(factor.dim),
            _ => None,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::Laplacian { .. } => 1,
            KernelSpec::Mahalanobis { factor } => factor.log_diag.len() + factor.strict_lower.len(),
        }
    }

    /// Trainable parameters: log-bandwidth, or log-diagonal then strict-lower entries.
    pub fn params(&self) -> Vec<f64> {
        match self {
            KernelSpec::Gaussian { log_bandwidth } | KernelSpec::Laplacian { log_bandwidth } => {
                vec![*log_bandwidth]
            }
            KernelSpec::Mahalanobis { factor } => {
                let mut p = factor.log_diag.clone();
                p.extend_from_slice(&factor.strict_lower);
                p
            }
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter count");
        match self {
            KernelSpec::Gaussian { log_bandwidth } | KernelSpec::Laplacian { log_bandwidth } => {
                *log_bandwidth = params[0];
            }
            KernelSpec::Mahalanobis { factor } => {
                let d = factor.dim;
                factor.log_diag.copy_from_slice(&params[..d]);
                factor.strict_lower.copy_from_slice(&params[d..]);
            }
        }
    }

    /// Evaluate `κ(u, v)`.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        if let Some(d) = self.fixed_dim() {
            if u.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: u.len(),
                });
            }
        }
        if u.iter().chain(v).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("kernel argument"));
        }
        Ok(self.prepare().eval_pair(u, v))
    }

    fn prepare(&self) -> Prepared {
        match self {
            KernelSpec::Gaussian { log_bandwidth } => Prepared::Gaussian {
                inv_sq: (-2.0 * log_bandwidth).exp(),
            },
            KernelSpec::Laplacian { log_bandwidth } => Prepared::Laplacian {
                inv: (-log_bandwidth).exp(),
            },
            KernelSpec::Mahalanobis { factor } => Prepared::Mahalanobis {
                dim: factor.dim,
                m: factor.dense(),
            },
        }
    }
}

/// `κ(u, v)` with dimension and finiteness checks.
pub fn eval_kernel(kernel: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    kernel.eval(u, v)
}

/// `κ(x,x') + κ(y,y') - κ(x,y') - κ(y,x')`.
pub fn h_mmd(kernel: &KernelSpec, w: &TwoSamplePair, w2: &TwoSamplePair) -> Result<f64> {
    Ok(kernel.eval(&w.x, &w2.x)? + kernel.eval(&w.y, &w2.y)?
        - kernel.eval(&w.x, &w2.y)?
        - kernel.eval(&w.y, &w2.x)?)
}

/// `¼ · h_MMD^γ(x-halves) · h_MMD^ℓ(y-halves)`.
pub fn h_hsic(gamma: &KernelSpec, ell: &KernelSpec, w: &IndepQuad, w2: &IndepQuad) -> Result<f64> {
    let hx = gamma.eval(&w.x1, &w2.x1)? + gamma.eval(&w.x2, &w2.x2)?
        - gamma.eval(&w.x1, &w2.x2)?
        - gamma.eval(&w.x2, &w2.x1)?;
    let hy = ell.eval(&w.y1, &w2.y1)? + ell.eval(&w.y2, &w2.y2)?
        - ell.eval(&w.y1, &w2.y2)?
        - ell.eval(&w.y2, &w2.y1)?;
    Ok(0.25 * hx * hy)
}

/// A member of the kernel pool: a single kernel for MMD, or the product
/// `γ(x,x')·ℓ(y,y')` for HSIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKernel {
    Mmd(KernelSpec),
    Hsic { x: KernelSpec, y: KernelSpec },
}

impl PoolKernel {
    pub fn problem(&self) -> Problem {
        match self {
            PoolKernel::Mmd(_) => Problem::TwoSample,
            PoolKernel::Hsic { .. } => Problem::Independence,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            PoolKernel::Mmd(k) => k.family(),
            PoolKernel::Hsic { x, .. } => x.family(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            PoolKernel::Mmd(k) => k.n_params(),
            PoolKernel::Hsic { x, y } => x.n_params() + y.n_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            PoolKernel::Mmd(k) => k.params(),
            PoolKernel::Hsic { x, y } => {
                let mut p = x.params();
                p.extend(y.params());
                p
            }
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        match self {
            PoolKernel::Mmd(k) => k.set_params(params),
            PoolKernel::Hsic { x, y } => {
                let nx = x.n_params();
                x.set_params(&params[..nx]);
                y.set_params(&params[nx..]);
            }
        }
    }

    /// h between two items of the matching problem.
    pub fn h(&self, sample: &Sample, i: usize, j: usize) -> Result<f64> {
        match (self, sample) {
            (PoolKernel::Mmd(k), Sample::TwoSample(w)) => h_mmd(k, &w[i], &w[j]),
            (PoolKernel::Hsic { x, y }, Sample::Independence(w)) => h_hsic(x, y, &w[i], &w[j]),
            _ => Err(Error::ProblemMismatch("kernel pool does not match sample problem")),
        }
    }
}

/// Total number of trainable parameters across a pool.
pub fn pool_params(pool: &[PoolKernel]) -> Vec<f64> {
    pool.iter().flat_map(|k| k.params()).collect()
}

pub fn set_pool_params(pool: &mut [PoolKernel], params: &[f64]) {
    let mut offset = 0;
    for k in pool.iter_mut() {
        let np = k.n_params();
        k.set_params(&params[offset..offset + np]);
        offset += np;
    }
    assert_eq!(offset, params.len(), "parameter count");
}

enum Prepared {
    Gaussian { inv_sq: f64 },
    Laplacian { inv: f64 },
    Mahalanobis { dim: usize, m: Vec<f64> },
}

impl Prepared {
    fn eval_pair(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Prepared::Gaussian { inv_sq } => (-sq_dist(u, v) * inv_sq).exp(),
            Prepared::Laplacian { inv } => (-sq_dist(u, v).sqrt() * inv).exp(),
            Prepared::Mahalanobis { dim, m } => {
                let d = *dim;
                let q: f64 = (0..d)
                    .map(|s| (s..d).map(|r| m[r * d + s] * (u[r] - v[r])).sum::<f64>().powi(2))
                    .sum();
                (-q).exp()
            }
        }
    }
}

#[inline]
fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Number of unordered pairs `i < j`.
pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Packed index of pair `(i, j)`, `i < j`, in row-major upper-triangle order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

const LEG_SIGN: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

/// Four legs of an h_MMD-shaped core on point sets `a`, `b`:
/// `(a_i,a_j), (b_i,b_j), (a_i,b_j), (b_i,a_j)` with signs `+ + - -`.
/// Points are indexed `0..n` for `a` and `n..2n` for `b`.
#[derive(Debug, Clone)]
struct LegSet {
    dim: usize,
    n: usize,
    /// `2n × dim`, row-major: `a` then `b`.
    points: Vec<f64>,
    /// `[p*4 + leg]`
    sq: Vec<f64>,
    dist: Vec<f64>,
}

/// One base kernel evaluated on every leg of a [`LegSet`].
#[derive(Debug, Clone)]
struct SideEval {
    kappa: Vec<f64>,
    /// Signed leg sum per pair.
    h: Vec<f64>,
    /// Mahalanobis only: `Mᵀ x` for every point, `2n × dim`.
    proj: Vec<f64>,
}

impl LegSet {
    fn new<'s>(dim: usize, items: impl Iterator<Item = (&'s [f64], &'s [f64])>) -> Self {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (u, v) in items {
            a.extend_from_slice(u);
            b.extend_from_slice(v);
        }
        let n = a.len() / dim;
        a.extend_from_slice(&b);
        let mut legs = LegSet {
            dim,
            n,
            points: a,
            sq: Vec::with_capacity(4 * n_pairs(n)),
            dist: vec![],
        };
        let mut sq = std::mem::take(&mut legs.sq);
        for i in 0..n {
            for j in i + 1..n {
                for (u, v) in legs.leg_points(i, j) {
                    sq.push(sq_dist(legs.point(u), legs.point(v)));
                }
            }
        }
        legs.dist = sq.iter().map(|s| s.sqrt()).collect();
        legs.sq = sq;
        legs
    }

    #[inline]
    fn point(&self, u: usize) -> &[f64] {
        &self.points[u * self.dim..(u + 1) * self.dim]
    }

    #[inline]
    fn leg_points(&self, i: usize, j: usize) -> [(usize, usize); 4] {
        let n = self.n;
        [(i, j), (n + i, n + j), (i, n + j), (n + i, j)]
    }

    fn eval(&self, spec: &KernelSpec) -> SideEval {
        let np = self.sq.len() / 4;
        let (kappa, proj) = match spec.prepare() {
            Prepared::Gaussian { inv_sq } => (self.sq.iter().map(|s| (-s * inv_sq).exp()).collect(), vec![]),
            Prepared::Laplacian { inv } => (self.dist.iter().map(|s| (-s * inv).exp()).collect(), vec![]),
            Prepared::Mahalanobis { dim: d, m } => {
                let mut proj = vec![0.0; self.points.len()];
                for (x, p) in self.points.chunks_exact(d).zip(proj.chunks_exact_mut(d)) {
                    for s in 0..d {
                        p[s] = (s..d).map(|r| m[r * d + s] * x[r]).sum();
                    }
                }
                let mut kappa = Vec::with_capacity(4 * np);
                self.for_pairs(|_, i, j| {
                    for (u, v) in self.leg_points(i, j) {
                        let q = sq_dist(&proj[u * d..(u + 1) * d], &proj[v * d..(v + 1) * d]);
                        kappa.push((-q).exp());
                    }
                });
                (kappa, proj)
            }
        };
        let h = kappa
            .chunks_exact(4)
            .map(|k: &[f64]| k[0] + k[1] - k[2] - k[3])
            .collect();
        SideEval { kappa, h, proj }
    }

    /// `out += Σ_p coef(p) · ∂h_p/∂θ`.
    fn accumulate(&self, spec: &KernelSpec, ev: &SideEval, coef: impl Fn(usize) -> f64, out: &mut [f64]) {
        match spec.prepare() {
            Prepared::Gaussian { inv_sq } => {
                // ∂κ/∂log σ = 2 κ r² / σ²
                let mut acc = 0.0;
                for (p, k) in ev.kappa.chunks_exact(4).enumerate() {
                    let c = coef(p);
                    if c != 0.0 {
                        let s = &self.sq[4 * p..4 * p + 4];
                        acc += c * (0..4).map(|l| LEG_SIGN[l] * k[l] * s[l]).sum::<f64>();
                    }
                }
                out[0] += 2.0 * inv_sq * acc;
            }
            Prepared::Laplacian { inv } => {
                // ∂κ/∂log σ = κ r / σ
                let mut acc = 0.0;
                for (p, k) in ev.kappa.chunks_exact(4).enumerate() {
                    let c = coef(p);
                    if c != 0.0 {
                        let s = &self.dist[4 * p..4 * p + 4];
                        acc += c * (0..4).map(|l| LEG_SIGN[l] * k[l] * s[l]).sum::<f64>();
                    }
                }
                out[0] += inv * acc;
            }
            Prepared::Mahalanobis { dim: d, m } => {
                // ∂κ/∂M_rs = -2κ δ_r (Mᵀδ)_s; summed over legs this is
                // G = Σ_u X_u (r_u P_u - Σ_v C_uv P_v)ᵀ for leg weights C.
                let m2 = 2 * self.n;
                let mut cw = vec![0.0; m2 * m2];
                self.for_pairs(|p, i, j| {
                    let c = coef(p);
                    if c == 0.0 {
                        return;
                    }
                    for (l, (u, v)) in self.leg_points(i, j).into_iter().enumerate() {
                        let w = -2.0 * c * LEG_SIGN[l] * ev.kappa[4 * p + l];
                        cw[u * m2 + v] += w;
                        cw[v * m2 + u] += w;
                    }
                });
                let mut g = vec![0.0; d * d];
                let mut q = vec![0.0; d];
                for u in 0..m2 {
                    let row = &cw[u * m2..(u + 1) * m2];
                    let r: f64 = row.iter().sum();
                    let pu = &ev.proj[u * d..(u + 1) * d];
                    for (t, qt) in q.iter_mut().enumerate() {
                        *qt = r * pu[t];
                    }
                    for (v, &w) in row.iter().enumerate() {
                        if w != 0.0 {
                            let pv = &ev.proj[v * d..(v + 1) * d];
                            for t in 0..d {
                                q[t] -= w * pv[t];
                            }
                        }
                    }
                    let xu = self.point(u);
                    for rr in 0..d {
                        for s in 0..=rr {
                            g[rr * d + s] += xu[rr] * q[s];
                        }
                    }
                }
                let mut idx = d;
                for rr in 0..d {
                    for s in 0..rr {
                        out[idx] += g[rr * d + s];
                        idx += 1;
                    }
                    out[rr] += g[rr * d + rr] * m[rr * d + rr];
                }
            }
        }
    }

    #[inline]
    fn for_pairs(&self, mut f: impl FnMut(usize, usize, usize)) {
        let mut p = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                f(p, i, j);
                p += 1;
            }
        }
    }
}

/// Leg-level kernel values from [`Geometry::stack_with_cache`], reused by
/// [`Geometry::accumulate_grad`] so the gradient needs no further exponentials.
#[derive(Debug, Clone)]
pub struct StackCache {
    sides: Vec<(SideEval, Option<SideEval>)>,
}

/// Cached pairwise geometry of one sample, reused across kernel parameter
/// updates so only the exponentials are recomputed.
#[derive(Debug, Clone)]
pub struct Geometry {
    n: usize,
    problem: Problem,
    x: LegSet,
    y: Option<LegSet>,
}

impl Geometry {
    pub fn new(sample: &Sample) -> Result<Self> {
        sample.validate()?;
        let n = sample.len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let (dx, dy) = sample.dims();
        Ok(match sample {
            Sample::TwoSample(w) => Geometry {
                n,
                problem: Problem::TwoSample,
                x: LegSet::new(dx, w.iter().map(|p| (p.x.as_slice(), p.y.as_slice()))),
                y: None,
            },
            Sample::Independence(w) => Geometry {
                n,
                problem: Problem::Independence,
                x: LegSet::new(dx, w.iter().map(|q| (q.x1.as_slice(), q.x2.as_slice()))),
                y: Some(LegSet::new(dy, w.iter().map(|q| (q.y1.as_slice(), q.y2.as_slice())))),
            },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn check_pool(&self, pool: &[PoolKernel]) -> Result<()> {
        if pool.is_empty() {
            return Err(Error::Empty("kernel pool"));
        }
        for k in pool {
            if k.problem() != self.problem {
                return Err(Error::ProblemMismatch("kernel pool does not match sample problem"));
            }
            let dims: Vec<(Option<usize>, usize)> = match k {
                PoolKernel::Mmd(s) => vec![(s.fixed_dim(), self.x.dim)],
                PoolKernel::Hsic { x, y } => vec![
                    (x.fixed_dim(), self.x.dim),
                    (y.fixed_dim(), self.y.as_ref().map_or(0, |l| l.dim)),
                ],
            };
            for (want, got) in dims {
                if let Some(want) = want {
                    if want != got {
                        return Err(Error::DimensionMismatch { expected: want, got });
                    }
                }
            }
        }
        Ok(())
    }

    /// h-values of every pool kernel on every pair.
    pub fn stack(&self, pool: &[PoolKernel]) -> Result<HStack> {
        Ok(self.stack_with_cache(pool)?.0)
    }

    /// As [`Geometry::stack`], also returning the leg values for gradients.
    pub fn stack_with_cache(&self, pool: &[PoolKernel]) -> Result<(HStack, StackCache)> {
        self.check_pool(pool)?;
        let c = pool.len();
        let np = n_pairs(self.n);
        let mut values = vec![0.0; np * c];
        let mut sides = Vec::with_capacity(c);
        for (k, kernel) in pool.iter().enumerate() {
            match kernel {
                PoolKernel::Mmd(s) => {
                    let ex = self.x.eval(s);
                    for (p, h) in ex.h.iter().enumerate() {
                        values[p * c + k] = *h;
                    }
                    sides.push((ex, None));
                }
                PoolKernel::Hsic { x, y } => {
                    let ex = self.x.eval(x);
                    let ey = self.y.as_ref().expect("independence geometry").eval(y);
                    for p in 0..np {
                        values[p * c + k] = 0.25 * ex.h[p] * ey.h[p];
                    }
                    sides.push((ex, Some(ey)));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("h-value"));
        }
        Ok((HStack { n: self.n, c, values }, StackCache { sides }))
    }

    /// Accumulate `Σ_p weight(p) · ∂h(w_i, w_j; κ)/∂θ` for pool kernel `k` into `out`.
    pub fn accumulate_grad(&self, pool: &[PoolKernel], cache: &StackCache, k: usize, weight: impl Fn(usize) -> f64, out: &mut [f64]) {
        assert_eq!(out.len(), pool[k].n_params());
        let (ex, ey) = &cache.sides[k];
        match &pool[k] {
            PoolKernel::Mmd(s) => self.x.accumulate(s, ex, weight, out),
            PoolKernel::Hsic { x, y } => {
                let ey = ey.as_ref().expect("independence cache");
                let nx = x.n_params();
                let (ox, oy) = out.split_at_mut(nx);
                self.x.accumulate(x, ex, |p| 0.25 * weight(p) * ey.h[p], ox);
                self.y
                    .as_ref()
                    .expect("independence geometry")
                    .accumulate(y, ey, |p| 0.25 * weight(p) * ex.h[p], oy);
            }
        }
    }
}

/// Per-kernel symmetric matrices of pairwise h-values with zero diagonal.
///
/// Stored packed and pair-major: the `c` values of pair `(i, j)` are
/// contiguous, which is the access pattern of the covariance estimate and
/// the bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct HStack {
    n: usize,
    c: usize,
    values: Vec<f64>,
}

impl HStack {
    /// Build from full `n × n` matrices; rejects asymmetric or non-finite input.
    pub fn from_matrices(mats: &[Vec<Vec<f64>>]) -> Result<Self> {
        let c = mats.len();
        if c == 0 {
            return Err(Error::Empty("h-matrix stack"));
        }
        let n = mats[0].len();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let mut values = vec![0.0; n_pairs(n) * c];
        for (k, m) in mats.iter().enumerate() {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch { expected: n, got: m.len() });
            }
            for i in 0..n {
                for j in i + 1..n {
                    let v = m[i][j];
                    if !v.is_finite() {
                        return Err(Error::NonFinite("h-value"));
                    }
                    if v != m[j][i] {
                        return Err(invalid("h-matrix", format!("not symmetric at ({i},{j})")));
                    }
                    values[pair_index(n, i, j) * c + k] = v;
                }
            }
        }
        Ok(HStack { n, c, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.n)
    }

    /// `h(w_i, w_j; κ_k)`; zero on the diagonal.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.values[pair_index(self.n, i, j) * self.c + k],
            std::cmp::Ordering::Greater => self.values[pair_index(self.n, j, i) * self.c + k],
        }
    }

    /// The `c` values of pair number `p`.
    #[inline]
    pub fn pair(&self, p: usize) -> &[f64] {
        &self.values[p * self.c..(p + 1) * self.c]
    }

    pub fn matrix(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(k, i, j)).collect()).collect()
    }

    /// Multiply every h-value of kernel `k` by `factor`.
    pub fn scale_kernel(&mut self, k: usize, factor: f64) {
        for p in 0..self.n_pairs() {
            self.values[p * self.c + k] *= factor;
        }
    }

    /// Keep only the kernels at `idx`, in that order.
    pub fn select_kernels(&self, idx: &[usize]) -> HStack {
        let c = idx.len();
        let mut values = Vec::with_capacity(self.n_pairs() * c);
        for p in 0..self.n_pairs() {
            let row = self.pair(p);
            values.extend(idx.iter().map(|&k| row[k]));
        }
        HStack { n: self.n, c, values }
    }
}

/// Build the h-value stack of `pool` on `sample`. The problem is read off
/// the sample and must match every pool member.
pub fn build_h_stack(pool: &[PoolKernel], sample: &Sample) -> Result<HStack> {
    Geometry::new(sample)?.stack(pool)
}
