//! Modulars, Luxemburg norms and the small calculus kit built on them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::GridDomain;

/// Relative tolerance of the Luxemburg bisection.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Iteration guard of the Luxemburg bisection.
pub const MAX_ITER: usize = 200;
/// Budget for the measured constant in the variable Hölder inequality.
pub const HOLDER_BUDGET: f64 = 4.0;

const PAR_CHUNK: usize = 1 << 14;

/// Cellwise-constant scalar function on a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn zeros(n: usize) -> Self {
        GridFunction { values: vec![0.0; n] }
    }

    pub fn from_fn(domain: &GridDomain, f: impl Fn([f64; 2]) -> f64) -> Self {
        GridFunction { values: (0..domain.len()).map(|k| f(domain.center(k))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Restriction to a cell set, zero elsewhere.
    pub fn restricted(&self, cells: &[u32]) -> Self {
        let mut out = vec![0.0; self.values.len()];
        for &c in cells {
            out[c as usize] = self.values[c as usize];
        }
        GridFunction { values: out }
    }
}

impl AsRef<[f64]> for GridFunction {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(values: Vec<f64>) -> Self {
        GridFunction { values }
    }
}

/// Seeded smooth field `Σ_j c_j cos(π(a_j x + b_j y) + φ_j)` with integer
/// frequencies `a_j, b_j < 3` and amplitudes decaying with the frequency; the
/// same `(seed, index)` gives the same continuum function at every level.
pub fn smooth_random(domain: &GridDomain, seed: u64, index: u64) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let a = rng.gen_range(0..3) as f64;
            let b = rng.gen_range(0..3) as f64;
            let c = rng.gen_range(-1.0..=1.0) / (1.0 + a + b);
            (a, b, c, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    GridFunction::from_fn(domain, |x| {
        modes.iter().map(|&(a, b, c, ph)| c * (std::f64::consts::PI * (a * x[0] + b * x[1]) + ph).cos()).sum()
    })
}

/// Cellwise-constant vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    /// Pointwise Euclidean length.
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0].hypot(v[1])).collect()
    }
}

/// Cells over which a quantity is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    All,
    Cells(&'a [u32]),
}

impl<'a> Region<'a> {
    fn for_each(&self, n: usize, mut f: impl FnMut(usize)) {
        match self {
            Region::All => (0..n).for_each(&mut f),
            Region::Cells(c) => c.iter().for_each(|&k| f(k as usize)),
        }
    }

    pub fn count(&self, n: usize) -> usize {
        match self {
            Region::All => n,
            Region::Cells(c) => c.len(),
        }
    }
}

/// Result of a Luxemburg norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormValue {
    pub value: f64,
    /// Relative width of the final bracket.
    pub tol: f64,
    pub iterations: usize,
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Order-independent sum: fixed chunks, each compensated, combined in order.
fn stable_sum(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    if n <= PAR_CHUNK {
        return compensated_sum((0..n).map(term));
    }
    let parts: Vec<f64> = (0..n.div_ceil(PAR_CHUNK))
        .into_par_iter()
        .map(|k| compensated_sum((k * PAR_CHUNK..((k + 1) * PAR_CHUNK).min(n)).map(&term)))
        .collect();
    compensated_sum(parts)
}

/// `∫ f` over the region (midpoint rule).
pub fn integral(domain: &GridDomain, f: &[f64], region: Region) -> f64 {
    let mut vals = Vec::with_capacity(region.count(f.len()));
    region.for_each(f.len(), |k| vals.push(f[k]));
    domain.cell_area() * compensated_sum(vals)
}

/// `∫ |f|^{p(x)}` over the region.
pub fn modular(domain: &GridDomain, f: &[f64], p: &[f64], region: Region) -> f64 {
    let pairs = log_pairs(f, p, region);
    domain.cell_area() * stable_sum(pairs.len(), |k| (pairs[k].0 * pairs[k].1).exp())
}

/// `(ln|f|, p)` for the nonzero cells of the region.
fn log_pairs(f: &[f64], p: &[f64], region: Region) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    region.for_each(f.len(), |k| {
        let a = f[k].abs();
        if a > 0.0 {
            pairs.push((a.ln(), p[k]));
        }
    });
    pairs
}

/// Luxemburg norm of the cellwise values `f` with exponents `p`, each cell
/// carrying quadrature weight `weight`.
pub fn luxemburg_values(f: &[f64], p: &[f64], weight: f64, tol: f64) -> Result<NormValue> {
    luxemburg_pairs(log_pairs(f, p, Region::All), weight, tol)
}

fn luxemburg_pairs(pairs: Vec<(f64, f64)>, weight: f64, tol: f64) -> Result<NormValue> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    if pairs.is_empty() {
        return Ok(NormValue { value: 0.0, tol: 0.0, iterations: 0 });
    }
    let (ln_a, p_a) = pairs.iter().copied().fold((f64::NEG_INFINITY, 1.0), |acc, v| if v.0 > acc.0 { v } else { acc });
    let p_min = pairs.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let ln_w = weight.ln();
    let total = weight * pairs.len() as f64;
    // rho(f / lo) >= 1 >= rho(f / hi)
    let mut lo = ln_a + ln_w / p_a;
    let mut hi = ln_a + total.max(1.0).ln() / p_min;
    let rho = |ln_lambda: f64| -> f64 {
        weight * stable_sum(pairs.len(), |k| ((pairs[k].0 - ln_lambda) * pairs[k].1).exp())
    };
    let ln_tol = tol.ln_1p();
    for it in 0..MAX_ITER {
        if hi - lo <= ln_tol {
            return Ok(NormValue { value: hi.exp(), tol: (hi - lo).exp_m1(), iterations: it });
        }
        let mid = 0.5 * (lo + hi);
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence(MAX_ITER))
}

/// `inf{λ > 0 : ρ(f/λ) ≤ 1}` over the region, by bisection in `ln λ`.
pub fn luxemburg_norm(domain: &GridDomain, f: &[f64], p: &[f64], region: Region, tol: f64) -> Result<NormValue> {
    luxemburg_pairs(log_pairs(f, p, region), domain.cell_area(), tol)
}

/// Luxemburg norm with the default tolerance; the value only.
pub fn norm(domain: &GridDomain, f: &[f64], p: &[f64], region: Region) -> Result<f64> {
    Ok(luxemburg_norm(domain, f, p, region, DEFAULT_TOL)?.value)
}

/// `‖χ_E‖_{p(·)}` for a cell set.
pub fn indicator_norm(domain: &GridDomain, cells: &[u32], p: &[f64]) -> Result<f64> {
    let pairs = cells.iter().map(|&c| (0.0, p[c as usize])).collect();
    Ok(luxemburg_pairs(pairs, domain.cell_area(), DEFAULT_TOL)?.value)
}

/// `∫|fg|` against `‖f‖_p ‖g‖_{p'}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    pub integral: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    /// `∫|fg| / (‖f‖_p ‖g‖_{p'})`, zero when either norm vanishes.
    pub constant: f64,
    pub within_budget: bool,
}

pub fn holder_pairing(domain: &GridDomain, f: &[f64], g: &[f64], p: &[f64]) -> Result<HolderReport> {
    let mut dual = Vec::with_capacity(p.len());
    for (k, &v) in p.iter().enumerate() {
        if v <= 1.0 {
            return Err(Error::DualUnbounded { cell: k, p: v });
        }
        dual.push(v / (v - 1.0));
    }
    let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a * b).abs()).collect();
    let integral = integral(domain, &prod, Region::All);
    let norm_f = norm(domain, f, p, Region::All)?;
    let norm_g = norm(domain, g, &dual, Region::All)?;
    let constant = if norm_f > 0.0 && norm_g > 0.0 { integral / (norm_f * norm_g) } else { 0.0 };
    Ok(HolderReport { integral, norm_f, norm_g, constant, within_budget: constant <= HOLDER_BUDGET })
}

/// `‖f‖_p ≤ (1 + |Ω|) ‖f‖_q` for `p ≤ q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingReport {
    pub norm_p: f64,
    pub norm_q: f64,
    pub bound: f64,
    /// `‖f‖_p / ((1 + |Ω|) ‖f‖_q)`; at most 1 when the embedding holds.
    pub ratio: f64,
}

pub fn embedding_check(domain: &GridDomain, f: &[f64], p: &[f64], q: &[f64]) -> Result<EmbeddingReport> {
    if let Some(k) = (0..p.len()).find(|&k| p[k] > q[k]) {
        return Err(Error::Ordering { cell: k, lower: p[k], upper: q[k] });
    }
    let norm_p = norm(domain, f, p, Region::All)?;
    let norm_q = norm(domain, f, q, Region::All)?;
    let bound = (1.0 + domain.measure()) * norm_q;
    let ratio = if bound > 0.0 { norm_p / bound } else { 0.0 };
    Ok(EmbeddingReport { norm_p, norm_q, bound, ratio })
}

/// Finite-difference gradient: central differences where both neighbours
/// exist, one-sided differences at the boundary.
pub fn gradient(domain: &GridDomain, f: &[f64]) -> Result<VectorField> {
    let h = domain.h();
    let mut out = Vec::with_capacity(domain.len());
    for k in 0..domain.len() {
        let [i, j] = domain.cell(k).map(|v| v as i64);
        let mut g = [0.0; 2];
        for (axis, (lo, hi)) in [((i - 1, j), (i + 1, j)), ((i, j - 1), (i, j + 1))].into_iter().enumerate() {
            let a = domain.id_at(lo.0, lo.1);
            let b = domain.id_at(hi.0, hi.1);
            g[axis] = match (a, b) {
                (Some(a), Some(b)) => (f[b] - f[a]) / (2.0 * h),
                (None, Some(b)) => (f[b] - f[k]) / h,
                (Some(a), None) => (f[k] - f[a]) / h,
                (None, None) => return Err(Error::StencilUndefined { cell: k, axis }),
            };
        }
        out.push(g);
    }
    Ok(VectorField { values: out })
}

/// Mean of `f` over the region.
pub fn average(f: &[f64], region: Region) -> Result<f64> {
    let n = region.count(f.len());
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let mut vals = Vec::with_capacity(n);
    region.for_each(f.len(), |k| vals.push(f[k]));
    Ok(compensated_sum(vals) / n as f64)
}

/// `‖d^{1-α} |∇f|‖_{p(·)}`.
pub fn weighted_gradient_norm(domain: &GridDomain, f: &[f64], p: &[f64], alpha: f64) -> Result<NormValue> {
    let g = gradient(domain, f)?;
    let w: Vec<f64> =
        g.values.iter().enumerate().map(|(k, v)| domain.dist(k).powf(1.0 - alpha) * v[0].hypot(v[1])).collect();
    luxemburg_norm(domain, &w, p, Region::All, DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn square(level: u32) -> GridDomain {
        GridDomain::build(&DomainSpec::UnitSquare, level).unwrap()
    }

    #[test]
    fn modular_oracles() {
        let d = square(4);
        let n = d.len();
        let p: Vec<f64> = (0..n).map(|k| 1.5 + (k % 7) as f64 * 0.1).collect();
        assert!((modular(&d, &vec![1.0; n], &p, Region::All) - 1.0).abs() < 1e-14);
        assert!((modular(&d, &vec![2.0; n], &vec![3.0; n], Region::All) - 8.0).abs() < 1e-12);
        let f: Vec<f64> = (0..n).map(|k| if d.center(k)[0] < 0.5 { 2.0 } else { 0.0 }).collect();
        let p: Vec<f64> = (0..n).map(|k| if d.center(k)[0] < 0.5 { 2.0 } else { 3.0 }).collect();
        assert!((modular(&d, &f, &p, Region::All) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_has_its_value_as_norm() {
        let d = square(4);
        let n = d.len();
        let p: Vec<f64> = (0..n).map(|k| 1.2 + (k % 5) as f64 * 0.3).collect();
        let v = norm(&d, &vec![3.5; n], &p, Region::All).unwrap();
        assert!((v - 3.5).abs() < 1e-9 * 3.5);
    }

    #[test]
    fn zero_function_is_immediate() {
        let d = square(3);
        let r = luxemburg_norm(&d, &vec![0.0; d.len()], &vec![2.0; d.len()], Region::All, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn two_valued_hand_solution() {
        let d = square(5);
        let left: Vec<bool> = (0..d.len()).map(|k| d.center(k)[0] < 0.5).collect();
        let f: Vec<f64> = left.iter().map(|&l| if l { 2.0 } else { 0.0 }).collect();
        let p: Vec<f64> = left.iter().map(|&l| if l { 2.0 } else { 3.0 }).collect();
        let v = norm(&d, &f, &p, Region::All).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn holder_equality_case() {
        let d = square(4);
        let f: Vec<f64> = (0..d.len()).map(|k| d.center(k)[0] + 0.1).collect();
        let r = holder_pairing(&d, &f, &f, &vec![2.0; d.len()]).unwrap();
        assert!((r.constant - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let d = square(4);
        let f: Vec<f64> = (0..d.len()).map(|k| d.center(k)[0]).collect();
        let g = gradient(&d, &f).unwrap();
        for v in &g.values {
            assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        assert!((average(&f, Region::All).unwrap() - 0.5).abs() <= d.h() * d.h());
    }

    #[test]
    fn stencil_needs_two_cells() {
        let d = GridDomain::from_mask(3, 1, 3, [0, 0], vec![true; 3]).unwrap();
        assert!(matches!(gradient(&d, &[0.0; 3]), Err(Error::StencilUndefined { axis: 0, .. })));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
