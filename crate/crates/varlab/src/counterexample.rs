//! Families of balls carrying exponent bumps, the matching test functions
//! and the blow-up experiments built on them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponent::{ExponentField, DIM};
use crate::geometry::{DomainSpec, GridDomain};
use crate::io::{num, Csv};
use crate::norm::{gradient, norm, GridFunction, Region, VectorField};

/// Where the balls `B(c_k, 7 r_k)` sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Along the bottom edge with `d(c_k, ∂Ω) = 7 r_k`.
    Boundary,
    /// On the horizontal midline of the bounding box, at distance at least
    /// `μ` from `∂Ω`.
    Interior,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boundary" => Ok(Placement::Boundary),
            "interior" => Ok(Placement::Interior),
            _ => Err(Error::Parse(format!("unknown placement {s:?} (boundary | interior)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleConfig {
    pub p0: f64,
    pub k_min: u32,
    pub k_max: u32,
    pub placement: Placement,
    /// `r_k = base^{-k}`.
    pub base: f64,
    /// Horizontal gap between consecutive balls.
    pub margin: f64,
    /// Minimal distance of the interior balls to the boundary.
    pub mu: f64,
}

impl CounterexampleConfig {
    pub fn new(p0: f64, k_max: u32, placement: Placement) -> Self {
        CounterexampleConfig { p0, k_min: 2, k_max, placement, base: 4.0, margin: 1.0 / 64.0, mu: 1.0 / 16.0 }
    }

    /// The `2 × 2` square that holds the default family.
    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec::Rectangle { width: 2, height: 2 }
    }

    pub fn radius(&self, k: u32) -> f64 {
        self.base.powi(-(k as i32))
    }

    /// `p_k = p_0 + |log r_k|^{-1/2}`.
    pub fn p_k(&self, k: u32) -> f64 {
        self.p0 + 1.0 / self.radius(k).ln().abs().sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.p0 > 1.0 && self.p0.is_finite()) {
            return Err(Error::ExponentRange(format!("p0 must exceed 1, got {}", self.p0)));
        }
        if !(self.base > 1.0) || self.radius(self.k_min.max(1)) >= 1.0 {
            return Err(Error::Invalid("radii must satisfy 0 < r_k < 1".into()));
        }
        Ok(())
    }
}

/// One ball of the family with its two inner centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub k: u32,
    pub r: f64,
    pub p_k: f64,
    pub c: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Bump {
    fn dist(x: [f64; 2], y: [f64; 2]) -> f64 {
        ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt()
    }

    /// Exponent on one side: `p_k` inside `r`, linear down to `p_0` at `2r`.
    fn side_exponent(&self, d: f64, p0: f64) -> Option<f64> {
        if d <= self.r {
            Some(self.p_k)
        } else if d <= 2.0 * self.r {
            Some(((d - self.r) / self.r) * p0 + ((2.0 * self.r - d) / self.r) * self.p_k)
        } else {
            None
        }
    }

    pub fn exponent_at(&self, x: [f64; 2], p0: f64) -> Option<f64> {
        self.side_exponent(Self::dist(x, self.a), p0).or_else(|| self.side_exponent(Self::dist(x, self.b), p0))
    }

    /// `f_k`: `r` on `|x - a| ≤ 2r`, ramp down to 0 at `3r`, mirrored negative at `b`.
    pub fn test_function_at(&self, x: [f64; 2]) -> f64 {
        let (da, db) = (Self::dist(x, self.a), Self::dist(x, self.b));
        if da <= 2.0 * self.r {
            self.r
        } else if da <= 3.0 * self.r {
            3.0 * self.r - da
        } else if db <= 2.0 * self.r {
            -self.r
        } else if db <= 3.0 * self.r {
            db - 3.0 * self.r
        } else {
            0.0
        }
    }

    /// Rotation field `φ S (x - a)` with cutoff `φ = 3 - |x - a|/r` on `2r..3r`,
    /// and its negative around `b`.
    pub fn korn_field_at(&self, x: [f64; 2]) -> [f64; 2] {
        let rot = |ctr: [f64; 2], sign: f64, phi: f64| [-sign * phi * (x[1] - ctr[1]), sign * phi * (x[0] - ctr[0])];
        let cutoff = |d: f64| {
            if d <= 2.0 * self.r {
                Some(1.0)
            } else if d <= 3.0 * self.r {
                Some(3.0 - d / self.r)
            } else {
                None
            }
        };
        if let Some(phi) = cutoff(Self::dist(x, self.a)) {
            rot(self.a, 1.0, phi)
        } else if let Some(phi) = cutoff(Self::dist(x, self.b)) {
            rot(self.b, -1.0, phi)
        } else {
            [0.0, 0.0]
        }
    }

    pub fn in_ball(&self, x: [f64; 2]) -> bool {
        Self::dist(x, self.c) <= 7.0 * self.r
    }

    pub fn in_core(&self, x: [f64; 2]) -> bool {
        Self::dist(x, self.a) <= self.r
    }
}

/// The ball family realised on a domain.
#[derive(Debug, Clone)]
pub struct Family {
    pub bumps: Vec<Bump>,
    pub p0: f64,
    pub warnings: Vec<String>,
}

impl Family {
    pub fn exponent(&self, domain: &GridDomain) -> Result<ExponentField> {
        ExponentField::from_fn(domain, |k| {
            let x = domain.center(k);
            self.bumps.iter().find_map(|b| b.exponent_at(x, self.p0)).unwrap_or(self.p0)
        })
    }

    pub fn test_function(&self, domain: &GridDomain, i: usize) -> GridFunction {
        GridFunction::from_fn(domain, |x| self.bumps[i].test_function_at(x))
    }

    pub fn korn_field(&self, domain: &GridDomain, i: usize) -> VectorField {
        VectorField { values: (0..domain.len()).map(|k| self.bumps[i].korn_field_at(domain.center(k))).collect() }
    }

    /// Sorted cells of `B(c_k, 7 r_k)`.
    pub fn ball_cells(&self, domain: &GridDomain, i: usize) -> Vec<u32> {
        domain.select(|x| self.bumps[i].in_ball(x))
    }
}

/// Place the balls left to right, dropping every `k` whose radius is below one
/// cell. The first ball starts `max(7 r_{k_min}, μ)` from the left edge of the
/// bounding box. Checks containment in the domain and pairwise disjointness
/// on cells.
pub fn layout(cfg: &CounterexampleConfig, domain: &GridDomain) -> Result<Family> {
    cfg.validate()?;
    let h = domain.h();
    let o = domain.origin();
    let bottom = o[1] as f64 * h;
    let mid = (o[1] as f64 + 0.5 * domain.height() as f64) * h;
    let mut warnings = Vec::new();
    let mut bumps = Vec::new();
    let mut cursor = o[0] as f64 * h + (7.0 * cfg.radius(cfg.k_min)).max(cfg.mu);
    for k in cfg.k_min..=cfg.k_max {
        let r = cfg.radius(k);
        if r < h {
            warnings.push(format!("r_{k} = {r} is below the cell size {h}; k_max truncated to {}", k - 1));
            break;
        }
        let c = [
            cursor + 7.0 * r,
            match cfg.placement {
                Placement::Boundary => bottom + 7.0 * r,
                Placement::Interior => mid,
            },
        ];
        cursor = c[0] + 7.0 * r + cfg.margin;
        bumps.push(Bump { k, r, p_k: cfg.p_k(k), c, a: [c[0] - 3.5 * r, c[1]], b: [c[0] + 3.5 * r, c[1]] });
    }
    let family = Family { bumps, p0: cfg.p0, warnings };
    check_family(cfg, domain, &family)?;
    Ok(family)
}

fn check_family(cfg: &CounterexampleConfig, domain: &GridDomain, family: &Family) -> Result<()> {
    let h = domain.h();
    let o = domain.origin();
    let mut owner = vec![u32::MAX; domain.len()];
    for (i, bump) in family.bumps.iter().enumerate() {
        let r7 = 7.0 * bump.r;
        // every grid cell whose center lies in the ball must belong to the domain
        let lo = |t: f64, oo: i64| ((t - r7) / h).floor() as i64 - oo;
        let hi = |t: f64, oo: i64| ((t + r7) / h).ceil() as i64 - oo;
        for j in lo(bump.c[1], o[1])..=hi(bump.c[1], o[1]) {
            for ii in lo(bump.c[0], o[0])..=hi(bump.c[0], o[0]) {
                let x = [(o[0] + ii) as f64 * h + 0.5 * h, (o[1] + j) as f64 * h + 0.5 * h];
                if bump.in_ball(x) && domain.id_at(ii, j).is_none() {
                    return Err(Error::Invalid(format!("ball k = {} leaves the domain", bump.k)));
                }
            }
        }
        for c in family.ball_cells(domain, i) {
            if owner[c as usize] != u32::MAX {
                return Err(Error::Invalid(format!("balls k = {} and k = {} overlap", family.bumps[owner[c as usize] as usize].k, bump.k)));
            }
            owner[c as usize] = i as u32;
        }
        if cfg.placement == Placement::Interior {
            let near = family
                .ball_cells(domain, i)
                .into_iter()
                .map(|c| domain.dist(c as usize))
                .fold(f64::INFINITY, f64::min);
            if near < cfg.mu {
                return Err(Error::Invalid(format!("ball k = {} is closer than mu to the boundary", bump.k)));
            }
        }
    }
    Ok(())
}

pub fn build_counterexample_exponent(cfg: &CounterexampleConfig, domain: &GridDomain) -> Result<ExponentField> {
    layout(cfg, domain)?.exponent(domain)
}

/// One row of a blow-up table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupRow {
    pub k: u32,
    pub r: f64,
    pub p_k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `r_k^{n/p_k - n/p_0}`.
    pub predicted: f64,
    /// `ratio / predicted`.
    pub quotient: f64,
    /// The same ratio with `p ≡ p_0`.
    pub flat_ratio: f64,
    /// `ratio / (flat_ratio · predicted)`.
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub experiment: String,
    pub rows: Vec<BlowupRow>,
    pub band: (f64, f64),
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl BlowupReport {
    /// `ratio_{k+1} > ratio_k` for every retained `k`.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ratio > w[0].ratio)
    }

    pub fn quotients_in_band(&self) -> bool {
        self.rows.iter().all(|r| self.band.0 <= r.quotient && r.quotient <= self.band.1)
    }

    pub fn normalized_in_band(&self) -> bool {
        self.rows.iter().all(|r| self.band.0 <= r.normalized && r.normalized <= self.band.1)
    }

    /// `max / min` of the constant-exponent ratios.
    pub fn flat_spread(&self) -> f64 {
        let lo = self.rows.iter().map(|r| r.flat_ratio).fold(f64::INFINITY, f64::min);
        let hi = self.rows.iter().map(|r| r.flat_ratio).fold(f64::NEG_INFINITY, f64::max);
        hi / lo
    }

    /// `flat_spread` over the rows whose radius spans at least `cells` cells
    /// of width `h`.
    pub fn flat_spread_resolved(&self, h: f64, cells: f64) -> f64 {
        let rows = self.rows.iter().filter(|r| r.r >= cells * h);
        let (lo, hi) = rows.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.flat_ratio), b.max(r.flat_ratio)));
        if lo.is_finite() { hi / lo } else { 1.0 }
    }

    pub fn growth(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.ratio / a.ratio,
            _ => 1.0,
        }
    }

    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "k", "r_k", "p_k", "lhs", "rhs", "ratio", "predicted", "quotient", "flat_ratio", "normalized",
        ]);
        for r in &self.rows {
            csv.row(&[
                r.k.to_string(),
                num(r.r),
                num(r.p_k),
                num(r.lhs),
                num(r.rhs),
                num(r.ratio),
                num(r.predicted),
                num(r.quotient),
                num(r.flat_ratio),
                num(r.normalized),
            ]);
        }
        csv
    }
}

impl std::fmt::Display for BlowupReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.experiment)?;
        writeln!(f, "{:>3} {:>10} {:>8} {:>14} {:>12} {:>10} {:>12} {:>11}", "k", "r_k", "p_k", "ratio", "predicted", "quotient", "flat_ratio", "normalized")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>3} {:>10.4e} {:>8.5} {:>14.6e} {:>12.6e} {:>10.5} {:>12.6e} {:>11.5}",
                r.k, r.r, r.p_k, r.ratio, r.predicted, r.quotient, r.flat_ratio, r.normalized
            )?;
        }
        writeln!(f, "monotone: {}  quotient band [{}, {}]: {}", self.monotone(), self.band.0, self.band.1, self.quotients_in_band())?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Acceptance band for `ratio / predicted`.
pub const QUOTIENT_BAND: (f64, f64) = (0.25, 4.0);

fn row(bump: &Bump, p0: f64, lhs: f64, rhs: f64, flat_ratio: f64) -> BlowupRow {
    let ratio = lhs / rhs;
    let predicted = bump.r.powf(DIM / bump.p_k - DIM / p0);
    BlowupRow {
        k: bump.k,
        r: bump.r,
        p_k: bump.p_k,
        lhs,
        rhs,
        ratio,
        predicted,
        quotient: ratio / predicted,
        flat_ratio,
        normalized: ratio / (flat_ratio * predicted),
    }
}

fn magnitude(v: &VectorField) -> Vec<f64> {
    v.magnitude()
}

/// Sobolev-Poincaré quotients of the test functions.
///
/// Boundary placement: `‖f_k‖_q / ‖d^{1-α} ∇f_k‖_p` with `1/q = 1/p - α/n`.
/// Interior placement: `‖f_k‖_{p*} / ‖∇f_k‖_p` with `p* = np/(n - p)`,
/// which needs `p_+ < n`; `alpha` is ignored.
pub fn blowup_sp(cfg: &CounterexampleConfig, domain: &GridDomain, alpha: f64) -> Result<BlowupReport> {
    let family = layout(cfg, domain)?;
    let p = family.exponent(domain)?;
    let flat = ExponentField::constant(domain, cfg.p0)?;
    let target = |e: &ExponentField| -> Result<ExponentField> {
        match cfg.placement {
            Placement::Boundary => e.sobolev_target(alpha),
            Placement::Interior => {
                if e.p_plus() >= DIM {
                    return Err(Error::ExponentRange(format!("critical exponent needs p_+ < n, got {}", e.p_plus())));
                }
                e.map(|v| DIM * v / (DIM - v))
            }
        }
    };
    let (q, q_flat) = (target(&p)?, target(&flat)?);
    let weight: Vec<f64> = match cfg.placement {
        Placement::Boundary => (0..domain.len()).map(|k| domain.dist(k).powf(1.0 - alpha)).collect(),
        Placement::Interior => vec![1.0; domain.len()],
    };
    let rows = (0..family.bumps.len())
        .into_par_iter()
        .map(|i| {
            let f = family.test_function(domain, i);
            let g = magnitude(&gradient(domain, &f.values)?);
            let wg: Vec<f64> = g.iter().zip(&weight).map(|(a, b)| a * b).collect();
            let lhs = norm(domain, &f.values, q.values(), Region::All)?;
            let rhs = norm(domain, &wg, p.values(), Region::All)?;
            let flat_ratio = norm(domain, &f.values, q_flat.values(), Region::All)? / norm(domain, &wg, flat.values(), Region::All)?;
            Ok(row(&family.bumps[i], cfg.p0, lhs, rhs, flat_ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    let experiment = match cfg.placement {
        Placement::Boundary => format!("weighted Sobolev-Poincare, boundary balls, p0 = {}, alpha = {alpha}", cfg.p0),
        Placement::Interior => format!("critical Sobolev-Poincare (q = p*), interior balls, p0 = {}", cfg.p0),
    };
    Ok(BlowupReport { experiment, rows, band: QUOTIENT_BAND, warnings: family.warnings, notes: Vec::new() })
}

/// Pointwise Frobenius norms of `∇u` and of its symmetric part.
pub fn korn_densities(domain: &GridDomain, u: &VectorField) -> Result<(Vec<f64>, Vec<f64>)> {
    let u0: Vec<f64> = u.values.iter().map(|v| v[0]).collect();
    let u1: Vec<f64> = u.values.iter().map(|v| v[1]).collect();
    let (g0, g1) = (gradient(domain, &u0)?, gradient(domain, &u1)?);
    let mut full = Vec::with_capacity(domain.len());
    let mut sym = Vec::with_capacity(domain.len());
    for k in 0..domain.len() {
        let [a, b] = g0.values[k];
        let [c, d] = g1.values[k];
        full.push((a * a + b * b + c * c + d * d).sqrt());
        let off = 0.5 * (b + c);
        sym.push((a * a + 2.0 * off * off + d * d).sqrt());
    }
    Ok((full, sym))
}

/// Korn quotients `‖∇u_k‖_p / ‖ε(u_k)‖_p` of the rotation fields.
pub fn korn_blowup(cfg: &CounterexampleConfig, domain: &GridDomain) -> Result<BlowupReport> {
    let family = layout(cfg, domain)?;
    let p = family.exponent(domain)?;
    let flat = ExponentField::constant(domain, cfg.p0)?;
    let rows = (0..family.bumps.len())
        .into_par_iter()
        .map(|i| {
            let (full, sym) = korn_densities(domain, &family.korn_field(domain, i))?;
            let lhs = norm(domain, &full, p.values(), Region::All)?;
            let rhs = norm(domain, &sym, p.values(), Region::All)?;
            let flat_ratio = norm(domain, &full, flat.values(), Region::All)? / norm(domain, &sym, flat.values(), Region::All)?;
            Ok(row(&family.bumps[i], cfg.p0, lhs, rhs, flat_ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut notes = Vec::new();
    if cfg.placement != Placement::Interior {
        notes.push("Korn experiment expects interior placement".into());
    }
    notes.push(
        "growing Korn quotients imply that the divergence equation has no uniformly bounded solution operator for this exponent".into(),
    );
    Ok(BlowupReport {
        experiment: format!("Korn quotient, {:?} balls, p0 = {}", cfg.placement, cfg.p0),
        rows,
        band: QUOTIENT_BAND,
        warnings: family.warnings,
        notes,
    })
}
