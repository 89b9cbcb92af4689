//! Variable exponents and the regularity conditions imposed on them.

mod conditions;
mod extend;
mod pyramid;
mod trace;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{GridDomain, TreeCovering};

pub use conditions::{
    boundary_lh_at, check_boundary_lh, check_boundary_lh_capped, check_eps_continuity, check_k0, check_lh_equiv,
    eps_violation_at, harmonic_mean_norm_check, interior_lh_constant, offdiag_beta, K0Report, LhEquivReport,
};
pub use extend::{extend_exponent, Extension};
pub use trace::{boundary_trace, TraceReport};

/// Space dimension of every domain in this crate.
pub const DIM: f64 = 2.0;

/// Cellwise constant exponent with cached global extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    values: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
}

impl ExponentField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let mut p_minus = f64::INFINITY;
        let mut p_plus = f64::NEG_INFINITY;
        for (k, &p) in values.iter().enumerate() {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::ExponentRange(format!("p = {p} at cell {k} (need 1 <= p < inf)")));
            }
            p_minus = p_minus.min(p);
            p_plus = p_plus.max(p);
        }
        Ok(ExponentField { values, p_minus, p_plus })
    }

    pub fn constant(domain: &GridDomain, p: f64) -> Result<Self> {
        Self::new(vec![p; domain.len()])
    }

    pub fn from_fn(domain: &GridDomain, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((0..domain.len()).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// `p_-(Ω)`.
    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    /// `p_+(Ω)`.
    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// `(p_-(E), p_+(E))` over a set of cells.
    pub fn range_over(&self, cells: &[u32]) -> (f64, f64) {
        cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            let p = self.values[c as usize];
            (lo.min(p), hi.max(p))
        })
    }

    /// `p_E` with `1/p_E = |E|^{-1} ∫_E 1/p`.
    pub fn harmonic_mean(&self, cells: &[u32]) -> f64 {
        let inv = crate::norm::compensated_sum(cells.iter().map(|&c| 1.0 / self.values[c as usize]));
        cells.len() as f64 / inv
    }

    /// `p_{U_t}` for every node of the covering.
    pub fn node_harmonic_means(&self, tree: &TreeCovering) -> Vec<f64> {
        tree.nodes.iter().map(|n| self.harmonic_mean(&n.u_cells)).collect()
    }

    /// `p'` with `1/p + 1/p' = 1`.
    pub fn dual(&self) -> Result<Self> {
        if let Some(cell) = self.values.iter().position(|&p| p <= 1.0) {
            return Err(Error::DualUnbounded { cell, p: self.values[cell] });
        }
        Self::new(self.values.iter().map(|&p| p / (p - 1.0)).collect())
    }

    /// `q` with `1/q = 1/p - α/n`, for `α` in the admissible range.
    pub fn sobolev_target(&self, alpha: f64) -> Result<Self> {
        admissible_alpha(self.p_plus, alpha)?;
        if alpha == 0.0 {
            return Ok(self.clone());
        }
        Self::new(self.values.iter().map(|&p| 1.0 / (1.0 / p - alpha / DIM)).collect())
    }

    /// `p` with every value replaced by `f(p)`; used for contrast runs.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&p| f(p)).collect())
    }
}

/// `α ∈ [0, 1)` when `p_+ < n`, otherwise `α ∈ [0, n/p_+)`.
pub fn admissible_alpha(p_plus: f64, alpha: f64) -> Result<()> {
    if p_plus < DIM {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::AlphaRange { alpha, branch: format!("p_+ = {p_plus} < n requires 0 <= alpha < 1") });
        }
    } else if !(alpha >= 0.0 && alpha < DIM / p_plus) {
        return Err(Error::AlphaRange {
            alpha,
            branch: format!("p_+ = {p_plus} >= n requires 0 <= alpha < n/p_+ = {}", DIM / p_plus),
        });
    }
    Ok(())
}

/// Built-in exponent generators.
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentSpec {
    Constant(f64),
    /// `low` on the cells with center `x < 1/2`, `high` elsewhere.
    Step { low: f64, high: f64 },
    /// `low` on `x < 1/2`; `low + (high - low) log 2 / (-log(d(x)/2))` elsewhere.
    RadialLh { low: f64, high: f64 },
    /// `low + (high - low) x`, clamped to `[low, high]`.
    Linear { low: f64, high: f64 },
    Counterexample(crate::counterexample::CounterexampleConfig),
}

impl ExponentSpec {
    pub fn build(&self, domain: &GridDomain) -> Result<ExponentField> {
        match *self {
            ExponentSpec::Constant(p) => ExponentField::constant(domain, p),
            ExponentSpec::Step { low, high } => {
                ExponentField::from_fn(domain, |k| if domain.center(k)[0] < 0.5 { low } else { high })
            }
            ExponentSpec::RadialLh { low, high } => ExponentField::from_fn(domain, |k| {
                if domain.center(k)[0] < 0.5 {
                    low
                } else {
                    low + (high - low) * radial_factor(domain.dist(k))
                }
            }),
            ExponentSpec::Linear { low, high } => {
                ExponentField::from_fn(domain, |k| low + (high - low) * domain.center(k)[0].clamp(0.0, 1.0))
            }
            ExponentSpec::Counterexample(ref cfg) => crate::counterexample::build_counterexample_exponent(cfg, domain),
        }
    }
}

/// `log 2 / (-log(d/2))`, which is 1 once `d ≥ 1`.
fn radial_factor(d: f64) -> f64 {
    if d >= 1.0 {
        1.0
    } else {
        std::f64::consts::LN_2 / -(0.5 * d).ln()
    }
}

impl FromStr for ExponentSpec {
    type Err = Error;

    /// `constant:P`, `step:LOW:HIGH`, `radial-lh:LOW:HIGH`, `linear:LOW:HIGH`,
    /// `counterexample-boundary:P0:KMAX` or `counterexample-interior:P0:KMAX`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let nums: Vec<f64> = parts
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {v:?} in exponent {s:?}"))))
            .collect::<Result<_>>()?;
        let want = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("exponent {name:?} takes {n} parameters, got {}", nums.len())))
            }
        };
        match name.as_str() {
            "constant" => {
                want(1)?;
                Ok(ExponentSpec::Constant(nums[0]))
            }
            "step" | "radial-lh" | "boundary-lh" | "linear" => {
                want(2)?;
                let (low, high) = (nums[0], nums[1]);
                Ok(match name.as_str() {
                    "step" => ExponentSpec::Step { low, high },
                    "linear" => ExponentSpec::Linear { low, high },
                    _ => ExponentSpec::RadialLh { low, high },
                })
            }
            "counterexample-boundary" | "counterexample-interior" => {
                want(2)?;
                let mode = if name.ends_with("boundary") {
                    crate::counterexample::Placement::Boundary
                } else {
                    crate::counterexample::Placement::Interior
                };
                if nums[1] < 0.0 || nums[1].fract() != 0.0 {
                    return Err(Error::Parse(format!("kmax must be a non-negative integer, got {}", nums[1])));
                }
                Ok(ExponentSpec::Counterexample(crate::counterexample::CounterexampleConfig::new(
                    nums[0],
                    nums[1] as u32,
                    mode,
                )))
            }
            _ => Err(Error::Parse(format!("unknown exponent generator {name:?}"))),
        }
    }
}

/// What a condition report points at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Witness {
    /// Center cell of the ball `B_{x,τ}`.
    Ball { cell: usize, tau: f64 },
    Pair(usize, usize),
    Node(usize),
}

/// Outcome of one regularity check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub name: String,
    pub constant: f64,
    pub witness: Option<Witness>,
    pub threshold: Option<f64>,
    pub pass: bool,
    pub vacuous: bool,
    pub notes: Vec<String>,
    pub extra: Vec<(String, f64)>,
}

impl ConditionReport {
    pub(crate) fn new(name: &str, constant: f64, witness: Option<Witness>) -> Self {
        ConditionReport {
            name: name.to_string(),
            constant,
            witness,
            threshold: None,
            pass: constant.is_finite(),
            vacuous: false,
            notes: Vec::new(),
            extra: Vec::new(),
        }
    }

    /// Pass iff the constant does not exceed `threshold`.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self.pass = self.constant <= threshold;
        self
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.vacuous {
            "vacuous"
        } else if self.pass {
            "pass"
        } else {
            "FAIL"
        };
        write!(f, "{:<28} {:>16.10e}  {verdict}", self.name, self.constant)?;
        if let Some(t) = self.threshold {
            write!(f, " (threshold {t:.6e})")?;
        }
        match self.witness {
            Some(Witness::Ball { cell, tau }) => write!(f, " at ball(cell {cell}, tau {tau})")?,
            Some(Witness::Pair(a, b)) => write!(f, " at cells {a}, {b}")?,
            Some(Witness::Node(t)) => write!(f, " at node {t}")?,
            None => {}
        }
        for (k, v) in &self.extra {
            write!(f, "\n    {k} = {v:.10e}")?;
        }
        for n in &self.notes {
            write!(f, "\n    note: {n}")?;
        }
        Ok(())
    }
}

/// Squared radius of `B_{x,τ}` in cell units, `τ² D / 4` with `D` the squared
/// center distance in half cells. A cell belongs to the ball iff the squared
/// cell-unit distance between centers is at most this value.
pub fn ball_radius2(tau: f64, d2_half: u64) -> f64 {
    tau * tau * d2_half as f64 / 4.0
}

/// Sorted ids of the domain cells in `B_{x,τ}`.
pub fn ball_cells(domain: &GridDomain, x: usize, tau: f64) -> Vec<u32> {
    let r2 = ball_radius2(tau, domain.dist2_half_units(x));
    disc_cells(domain, x, r2)
}

pub(crate) fn disc_cells(domain: &GridDomain, x: usize, r2: f64) -> Vec<u32> {
    let [ci, cj] = domain.cell(x);
    let (ci, cj) = (ci as i64, cj as i64);
    let r = r2.sqrt().floor() as i64;
    let mut out = Vec::new();
    for j in (cj - r).max(0)..=(cj + r).min(domain.height() as i64 - 1) {
        for i in (ci - r).max(0)..=(ci + r).min(domain.width() as i64 - 1) {
            let (dx, dy) = (i - ci, j - cj);
            if ((dx * dx + dy * dy) as f64) <= r2 {
                if let Some(k) = domain.id_at(i, j) {
                    out.push(k as u32);
                }
            }
        }
    }
    out.sort_unstable();
    out
}
