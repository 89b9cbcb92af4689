//! Numerical checks of Poincaré and Sobolev type inequalities with measured
//! constants: on a single cube, on a tree node, on the whole domain, and for
//! compactly supported functions through an extension of the exponent.
//!
//! Constants are never certified. A report carries the per-function ratios,
//! their maximum, which set of hypotheses held, and optionally a refinement
//! table whose steps are the practical test for "a constant exists".

use std::fmt;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::counterexample::Family;
use crate::error::{Error, Result};
use crate::exponent::{admissible_alpha, check_boundary_lh, check_eps_continuity, extend_exponent, ExponentField, DIM};
use crate::geometry::{GridDomain, TreeCovering};
use crate::io::{num, Csv};
use crate::norm::{average, gradient, norm, smooth_random, GridFunction, Region};

/// One test function of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRow {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; 0 when both vanish, infinite when only `rhs` does.
    pub ratio: f64,
}

impl VerificationRow {
    pub fn new(id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        VerificationRow { id: id.into(), lhs, rhs, ratio }
    }
}

/// A named precondition and whether the measurement supports it.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub name: String,
    pub held: bool,
    /// The measured quantity behind the verdict.
    pub value: f64,
}

impl Hypothesis {
    fn new(name: &str, held: bool, value: f64) -> Self {
        Hypothesis { name: name.to_string(), held, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub inequality: String,
    pub family: String,
    pub rows: Vec<VerificationRow>,
    pub max_ratio: f64,
    pub argmax: String,
    pub hypotheses: Vec<Hypothesis>,
    /// Name of the hypothesis set that held, if any.
    pub certified_by: Option<String>,
    /// `(level, max ratio)` in increasing level.
    pub refinements: Vec<(u32, f64)>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn new(inequality: &str, family: &str, rows: Vec<VerificationRow>) -> Self {
        let mut rep = VerificationReport {
            inequality: inequality.to_string(),
            family: family.to_string(),
            rows,
            max_ratio: 0.0,
            argmax: String::new(),
            hypotheses: Vec::new(),
            certified_by: None,
            refinements: Vec::new(),
            notes: Vec::new(),
        };
        (rep.max_ratio, rep.argmax) = rep.recompute_max();
        rep
    }

    /// Maximum over the stored rows; ties go to the earlier row.
    pub fn recompute_max(&self) -> (f64, String) {
        let mut best = (0.0, String::new());
        for r in &self.rows {
            if r.ratio > best.0 || best.1.is_empty() {
                best = (r.ratio, r.id.clone());
            }
        }
        best
    }

    pub fn certified(&self) -> bool {
        self.certified_by.is_some()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    /// Largest factor between consecutive refinement levels, 1 when fewer
    /// than two levels were run.
    pub fn refinement_step(&self) -> f64 {
        self.refinements.windows(2).map(|w| step_factor(w[0].1, w[1].1)).fold(1.0, f64::max)
    }

    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["function_id", "lhs", "rhs", "ratio"]);
        for r in &self.rows {
            csv.row(&[r.id.clone(), num(r.lhs), num(r.rhs), num(r.ratio)]);
        }
        csv.row(&[format!("max:{}", self.argmax), String::new(), String::new(), num(self.max_ratio)]);
        csv
    }

    pub fn refinement_csv(&self) -> Csv {
        let mut csv = Csv::new(&["level", "max_ratio"]);
        for &(l, r) in &self.refinements {
            csv.row(&[l.to_string(), num(r)]);
        }
        csv
    }
}

fn step_factor(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else if a > 0.0 && b > 0.0 {
        (a / b).max(b / a)
    } else {
        f64::INFINITY
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} on {} ({} functions): max ratio {} at {}",
            self.inequality,
            self.family,
            self.rows.len(),
            num(self.max_ratio),
            self.argmax
        )?;
        for h in &self.hypotheses {
            writeln!(f, "  [{}] {} = {}", if h.held { "held" } else { "unmet" }, h.name, num(h.value))?;
        }
        match &self.certified_by {
            Some(b) => writeln!(f, "  certified by: {b}")?,
            None if !self.hypotheses.is_empty() => writeln!(f, "  hypotheses unmet; ratios are diagnostics")?,
            None => {}
        }
        for &(l, r) in &self.refinements {
            writeln!(f, "  L = {l:>2}: {}", num(r))?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

/// Run `run` at every level and return the finest report with the table of
/// maxima attached.
pub fn refinement_sweep(levels: &[u32], mut run: impl FnMut(u32) -> Result<VerificationReport>) -> Result<VerificationReport> {
    let mut last: Option<VerificationReport> = None;
    let mut table = Vec::with_capacity(levels.len());
    for &l in levels {
        let rep = run(l)?;
        table.push((l, rep.max_ratio));
        last = Some(rep);
    }
    let mut rep = last.ok_or_else(|| Error::Invalid("empty level list".into()))?;
    rep.refinements = table;
    Ok(rep)
}

/// Sobolev conjugate `np/(n-p)`, infinite for `p >= n`.
pub fn sobolev_conjugate(p: f64) -> f64 {
    if p < DIM {
        DIM * p / (DIM - p)
    } else {
        f64::INFINITY
    }
}

/// Smallest `σ` for which `1/p` is `σ/n`-continuous beyond one cell:
/// `n` times the largest jump of `1/p` between edge neighbours.
pub fn continuity_sigma(p: &ExponentField, domain: &GridDomain) -> f64 {
    let mut jump = 0.0f64;
    for k in 0..domain.len() {
        let [i, j] = domain.cell(k).map(|v| v as i64);
        for (a, b) in [(i + 1, j), (i, j + 1)] {
            if let Some(m) = domain.id_at(a, b) {
                jump = jump.max((1.0 / p.get(k) - 1.0 / p.get(m)).abs());
            }
        }
    }
    DIM * jump
}

/// The Sobolev–Poincaré branch a pair of exponent ranges falls into: 1 for
/// `p_- < n, p_- <= q_+ <= p_-*`, 2 for `p_- >= n, q_+ < ∞`.
pub fn sp_branch(p_minus: f64, q_plus: f64) -> Option<u8> {
    if p_minus < 1.0 {
        None
    } else if p_minus < DIM {
        // the conjugate bound is compared in reciprocal form
        (p_minus <= q_plus && 1.0 / p_minus - 1.0 / q_plus <= 1.0 / DIM + 1e-12).then_some(1)
    } else {
        q_plus.is_finite().then_some(2)
    }
}

fn gradient_magnitude(domain: &GridDomain, f: &[f64]) -> Result<Vec<f64>> {
    Ok(gradient(domain, f)?.magnitude())
}

fn oscillation(domain: &GridDomain, f: &[f64], q: &[f64], cells: Region) -> Result<f64> {
    let mean = average(f, cells)?;
    let g: Vec<f64> = f.iter().map(|v| v - mean).collect();
    norm(domain, &g, q, cells)
}

/// Check `‖f - f_Q‖_q <= C q |Q|^{1/n + 1/q - 1/p} ‖∇f‖_p` on the cells of a
/// cube for constant exponents; the ratio is the measured `C`.
pub fn classical_sp_verify(
    domain: &GridDomain,
    cube: &[u32],
    p: f64,
    q: f64,
    family: &[(String, GridFunction)],
) -> Result<VerificationReport> {
    if !(p >= 1.0) {
        return Err(Error::ExponentRange(format!("classical Sobolev-Poincare needs p >= 1, got p = {p}")));
    }
    if p < DIM {
        let star = sobolev_conjugate(p);
        if !(q >= p && q <= star * (1.0 + 1e-12)) {
            return Err(Error::ExponentRange(format!("branch p < n requires p <= q <= p* = {star}, got q = {q}")));
        }
    } else if !q.is_finite() || q < 1.0 {
        return Err(Error::ExponentRange(format!("branch p >= n requires 1 <= q < infinity, got q = {q}")));
    }
    if cube.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let measure = cube.len() as f64 * domain.cell_area();
    let scale = q * measure.powf(1.0 / DIM + 1.0 / q - 1.0 / p);
    let (pv, qv) = (vec![p; domain.len()], vec![q; domain.len()]);
    let region = Region::Cells(cube);
    let rows = family
        .par_iter()
        .map(|(id, f)| {
            let lhs = oscillation(domain, &f.values, &qv, region)?;
            let grad = norm(domain, &gradient_magnitude(domain, &f.values)?, &pv, region)?;
            Ok(VerificationRow::new(id.clone(), lhs, scale * grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = VerificationReport::new("classical-sp", &family_name(family), rows);
    rep.hypotheses.push(Hypothesis::new(&format!("p = {p}, q = {q} admissible"), true, q));
    rep.certified_by = Some(if p < DIM { "branch p < n" } else { "branch p >= n" }.into());
    Ok(rep)
}

/// Variable-exponent check on `U_t`:
/// `‖f - f_U‖_{q(·)} <= C (1 + |U|)^2 |U|^{1/n + 1/q_+ - 1/p_-} ‖∇f‖_{p(·)}`,
/// with the factor `q_+` included when `p_- < n`.
pub fn local_sp_verify(
    domain: &GridDomain,
    tree: &TreeCovering,
    t: usize,
    p: &ExponentField,
    q: &ExponentField,
    family: &[(String, GridFunction)],
) -> Result<VerificationReport> {
    let node = tree.nodes.get(t).ok_or_else(|| Error::Invalid(format!("no tree node {t}")))?;
    let u = &node.u_cells;
    let (p_minus, _) = p.range_over(u);
    let (_, q_plus) = q.range_over(u);
    let branch = sp_branch(p_minus, q_plus).ok_or(Error::OscillationHypothesis { node: t })?;
    let measure = u.len() as f64 * domain.cell_area();
    let mut scale = (1.0 + measure).powi(2) * measure.powf(1.0 / DIM + 1.0 / q_plus - 1.0 / p_minus);
    if branch == 1 {
        scale *= q_plus;
    }
    let region = Region::Cells(u);
    let rows = family
        .par_iter()
        .map(|(id, f)| {
            let lhs = oscillation(domain, &f.values, q.values(), region)?;
            let grad = norm(domain, &gradient_magnitude(domain, &f.values)?, p.values(), region)?;
            Ok(VerificationRow::new(id.clone(), lhs, scale * grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = VerificationReport::new(&format!("local-sp(node {t})"), &family_name(family), rows);
    rep.hypotheses.push(Hypothesis::new("p_-(U)", true, p_minus));
    rep.hypotheses.push(Hypothesis::new("q_+(U)", true, q_plus));
    rep.certified_by = Some(format!("branch {branch}"));
    Ok(rep)
}

/// One cube of an oscillation partition.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationPiece {
    pub cells: Vec<u32>,
    /// `[x0, y0, x1, y1]` of the tile in grid cells.
    pub rect: [i64; 4],
    pub p_minus: f64,
    pub p_plus: f64,
    /// `q_+ = (1/p_+ - α/n)^{-1}` over the piece.
    pub q_plus: f64,
    pub branch: Option<u8>,
    /// `q_+ <= n / (1 - σ - α)`.
    pub q_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationPartition {
    /// Continuity radius of `1/p` for `ε = σ/n`, as a length.
    pub delta: f64,
    /// Tile side in cells.
    pub tile: usize,
    pub pieces: Vec<OscillationPiece>,
    /// `|U| / δ^n`.
    pub count_bound: f64,
    pub sigma: f64,
    pub alpha: f64,
}

impl OscillationPartition {
    pub fn all_certified(&self) -> bool {
        self.pieces.iter().all(|g| g.branch.is_some() && g.q_bound_ok)
    }

    /// Continuum diameter of a full tile.
    pub fn tile_diameter(&self, h: f64) -> f64 {
        self.tile as f64 * std::f64::consts::SQRT_2 * h
    }
}

/// Split `U` into square tiles on which `1/p` oscillates by less than `σ/n`,
/// so that each tile satisfies a Sobolev–Poincaré branch with
/// `q = sobolev_target(p, α)`.
pub fn partition_for_oscillation(
    domain: &GridDomain,
    u: &[u32],
    p: &ExponentField,
    sigma: f64,
    alpha: f64,
) -> Result<OscillationPartition> {
    if alpha >= 1.0 {
        return Err(Error::AlphaOne);
    }
    if !(sigma > 0.0 && sigma < 1.0 - alpha) {
        return Err(Error::Invalid(format!("need 0 < sigma < 1 - alpha, got sigma = {sigma}, alpha = {alpha}")));
    }
    if u.is_empty() {
        return Err(Error::EmptyRegion);
    }
    // 1 + 1/p has the same oscillation as 1/p and is a valid exponent field
    let recip = p.map(|v| 1.0 + 1.0 / v)?;
    let rep = check_eps_continuity(&recip, domain, sigma / DIM)?;
    let delta_cells = rep.constant;
    let delta = delta_cells * domain.h();
    if !rep.pass {
        return Err(Error::RefineGrid { delta, h: domain.h() });
    }
    // any two centers of a tile are less than δ apart
    let tile = ((delta_cells / std::f64::consts::SQRT_2) - 1e-12).ceil().max(1.0) as usize;

    let (mut lo, mut hi) = ([u32::MAX; 2], [0u32; 2]);
    for &c in u {
        let xy = domain.cell(c as usize);
        for a in 0..2 {
            lo[a] = lo[a].min(xy[a]);
            hi[a] = hi[a].max(xy[a]);
        }
    }
    let nx = (hi[0] - lo[0]) as usize / tile + 1;
    let ny = (hi[1] - lo[1]) as usize / tile + 1;
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
    for &c in u {
        let [i, j] = domain.cell(c as usize);
        let (bi, bj) = ((i - lo[0]) as usize / tile, (j - lo[1]) as usize / tile);
        buckets[bj * nx + bi].push(c);
    }
    let q_cap = DIM / (1.0 - sigma - alpha);
    let mut pieces = Vec::new();
    for (b, mut cells) in buckets.into_iter().enumerate() {
        if cells.is_empty() {
            continue;
        }
        cells.sort_unstable();
        let (p_minus, p_plus) = p.range_over(&cells);
        let inv = 1.0 / p_plus - alpha / DIM;
        let q_plus = if inv > 0.0 { 1.0 / inv } else { f64::INFINITY };
        let (bi, bj) = ((b % nx) as i64, (b / nx) as i64);
        let (x0, y0) = (lo[0] as i64 + bi * tile as i64, lo[1] as i64 + bj * tile as i64);
        pieces.push(OscillationPiece {
            cells,
            rect: [x0, y0, x0 + tile as i64, y0 + tile as i64],
            p_minus,
            p_plus,
            q_plus,
            branch: sp_branch(p_minus, q_plus),
            q_bound_ok: p_minus >= DIM || q_plus <= q_cap * (1.0 + 1e-12),
        });
    }
    let measure = u.len() as f64 * domain.cell_area();
    Ok(OscillationPartition { delta, tile, pieces, count_bound: measure / delta.powf(DIM), sigma, alpha })
}

fn alpha_checks(p: &ExponentField, alpha: f64) -> Result<ExponentField> {
    if alpha == 1.0 {
        return Err(Error::AlphaOne);
    }
    admissible_alpha(p.p_plus(), alpha)?;
    p.sobolev_target(alpha)
}

/// `‖f - f_Ω‖_{q(·)} <= C ‖d^{1-α} ∇f‖_{p(·)}` over the whole domain with
/// `1/q = 1/p - α/n`. `tau` is the ball factor of the boundary condition,
/// normally the measured `τ_K` of the covering.
///
/// The hypotheses are measured and reported; the ratios are computed whether
/// or not they hold.
pub fn global_sp_verify(
    domain: &GridDomain,
    p: &ExponentField,
    alpha: f64,
    tau: f64,
    family: &[(String, GridFunction)],
) -> Result<VerificationReport> {
    let q = alpha_checks(p, alpha)?;
    let dist = domain.distances();
    let rows = family
        .par_iter()
        .map(|(id, f)| {
            let lhs = oscillation(domain, &f.values, q.values(), Region::All)?;
            let w: Vec<f64> = gradient_magnitude(domain, &f.values)?
                .into_iter()
                .zip(&dist)
                .map(|(g, d)| d.powf(1.0 - alpha) * g)
                .collect();
            let rhs = norm(domain, &w, p.values(), Region::All)?;
            Ok(VerificationRow::new(id.clone(), lhs, rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let name = if alpha == 0.0 { "improved-poincare" } else { "global-sp" };
    let mut rep = VerificationReport::new(name, &family_name(family), rows);

    let (p_minus, p_plus) = (p.p_minus(), p.p_plus());
    let sigma = continuity_sigma(p, domain);
    let blh = check_boundary_lh(p, domain, tau)?;
    let base = p_minus > 1.0 && blh.pass;
    rep.hypotheses = vec![
        Hypothesis::new("p_- > 1", p_minus > 1.0, p_minus),
        Hypothesis::new(&format!("boundary-LH(tau={tau})"), blh.pass, blh.constant),
        Hypothesis::new("sigma < 1 - alpha", sigma < 1.0 - alpha, sigma),
        Hypothesis::new("p_+ < n, sigma <= 1 - alpha", p_plus < DIM && sigma <= 1.0 - alpha, p_plus),
        Hypothesis::new("p_- >= n", p_minus >= DIM, p_minus),
    ];
    if base {
        let held = |i: usize| rep.hypotheses[i].held;
        rep.certified_by = if held(2) {
            Some("full hypotheses".into())
        } else if held(3) {
            Some("p_+ < n branch".into())
        } else if held(4) {
            Some("p_- >= n branch".into())
        } else {
            None
        };
    }
    Ok(rep)
}

/// `‖f‖_{q(·)} <= C ‖∇f‖_{p(·)}` for `f` compactly supported in `Ω`, measured
/// on `3B` after extending `p`, where `B` is the smallest disc about the
/// bounding-box center containing `Ω̄`.
pub fn sobolev_verify(
    domain: &GridDomain,
    p: &ExponentField,
    alpha: f64,
    family: &[(String, GridFunction)],
) -> Result<VerificationReport> {
    alpha_checks(p, alpha)?;
    for (_, f) in family {
        if let Some(cell) = (0..domain.len()).find(|&k| domain.is_boundary_cell(k) && f.values[k] != 0.0) {
            return Err(Error::NotCompact { cell });
        }
    }
    let [x0, y0, x1, y1] = bounding_box(domain);
    let center = [0.5 * (x0 + x1), 0.5 * (y0 + y1)];
    let radius = 0.5 * (x1 - x0).hypot(y1 - y0);
    let ext = extend_exponent(p, domain, center, radius)?;
    let q = alpha_checks(&ext.exponent, alpha)?;
    let rows = family
        .par_iter()
        .map(|(id, f)| {
            let g: Vec<f64> = ext.source.iter().map(|s| s.map_or(0.0, |k| f.values[k as usize])).collect();
            let lhs = norm(&ext.domain, &g, q.values(), Region::All)?;
            let rhs = norm(&ext.domain, &gradient_magnitude(&ext.domain, &g)?, ext.exponent.values(), Region::All)?;
            Ok(VerificationRow::new(id.clone(), lhs, rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = VerificationReport::new("sobolev", &family_name(family), rows);
    let sigma = continuity_sigma(&ext.exponent, &ext.domain);
    rep.hypotheses = vec![
        Hypothesis::new("p_- > 1", p.p_minus() > 1.0, p.p_minus()),
        Hypothesis::new("sigma < 1 - alpha on 3B", sigma < 1.0 - alpha, sigma),
    ];
    if rep.hypotheses.iter().all(|h| h.held) {
        rep.certified_by = Some("extension to 3B".into());
    }
    rep.notes.push(format!(
        "3B: center ({:.4}, {:.4}), radius {:.4}, {} cells",
        center[0],
        center[1],
        3.0 * radius,
        ext.domain.len()
    ));
    Ok(rep)
}

/// `[x0, y0, x1, y1]` of the bounding grid in length units.
pub fn bounding_box(domain: &GridDomain) -> [f64; 4] {
    let h = domain.h();
    let o = domain.origin();
    [
        o[0] as f64 * h,
        o[1] as f64 * h,
        (o[0] + domain.width() as i64) as f64 * h,
        (o[1] + domain.height() as i64) as f64 * h,
    ]
}

/// Distinct id prefixes in order of appearance, e.g. `poly+tent+smooth`.
fn family_name(family: &[(String, GridFunction)]) -> String {
    let mut kinds: Vec<&str> = Vec::new();
    for (id, _) in family {
        let kind = id.split(':').next().unwrap_or(id);
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    kinds.join("+")
}

/// The standard corpus: six polynomials of degree at most 2, four tents,
/// ten seeded smooth fields and, if given, the bump of every ball of a
/// counterexample family. Positions are relative to the bounding box.
pub fn lab_corpus(domain: &GridDomain, seed: u64, family: Option<&Family>) -> Vec<(String, GridFunction)> {
    let [x0, y0, x1, y1] = bounding_box(domain);
    let (w, h) = (x1 - x0, y1 - y0);
    let rel = move |x: [f64; 2]| [(x[0] - x0) / w, (x[1] - y0) / h];
    let mut out: Vec<(String, GridFunction)> = Vec::new();
    let polys: [(&str, fn([f64; 2]) -> f64); 6] = [
        ("poly:x", |x| x[0]),
        ("poly:y", |x| x[1]),
        ("poly:x+y", |x| x[0] + x[1]),
        ("poly:x^2", |x| x[0] * x[0]),
        ("poly:xy", |x| x[0] * x[1]),
        ("poly:x^2-y^2", |x| x[0] * x[0] - x[1] * x[1]),
    ];
    for (id, f) in polys {
        out.push((id.into(), GridFunction::from_fn(domain, |x| f(rel(x)))));
    }
    for (i, c) in [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.5, 0.5]].into_iter().enumerate() {
        let f = GridFunction::from_fn(domain, |x| {
            let r = rel(x);
            (1.0 - (r[0] - c[0]).abs() / 0.25).max(0.0) * (1.0 - (r[1] - c[1]).abs() / 0.25).max(0.0)
        });
        out.push((format!("tent:{i}"), f));
    }
    for i in 0..10 {
        out.push((format!("smooth:{i}"), smooth_random(domain, seed, i)));
    }
    if let Some(fam) = family {
        for (i, b) in fam.bumps.iter().enumerate() {
            out.push((format!("bump:k={}", b.k), fam.test_function(domain, i)));
        }
    }
    out
}

/// A smooth bump `(1 - |x - c|^2 / r^2)_+^2`, optionally modulated by
/// `1 + cos(π(a x + b y) + φ) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBump {
    pub center: [f64; 2],
    pub radius: f64,
    pub modulation: Option<[f64; 3]>,
}

impl CompactBump {
    pub fn at(&self, x: [f64; 2]) -> f64 {
        let s = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)) / (self.radius * self.radius);
        if s >= 1.0 {
            return 0.0;
        }
        let m = self.modulation.map_or(1.0, |[a, b, ph]| {
            1.0 + 0.5 * (std::f64::consts::PI * (a * x[0] + b * x[1]) + ph).cos()
        });
        (1.0 - s).powi(2) * m
    }

    pub fn eval(&self, domain: &GridDomain) -> GridFunction {
        GridFunction::from_fn(domain, |x| self.at(x))
    }
}

/// `count` seeded bumps whose supports keep two cells of `reference` away
/// from the boundary. Sampling on a fixed reference grid gives the same
/// continuum corpus at every level; every other member is modulated.
pub fn compact_corpus(reference: &GridDomain, seed: u64, count: usize) -> Vec<CompactBump> {
    let [x0, y0, x1, y1] = bounding_box(reference);
    let side = (x1 - x0).min(y1 - y0);
    let margin = 2.0 * reference.h();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 100_000 {
        attempts += 1;
        let c = [rng.gen_range(x0..x1), rng.gen_range(y0..y1)];
        let r = side * rng.gen_range(0.08..0.3);
        let Some(cell) = reference.locate(c) else { continue };
        if reference.dist(cell) < r + margin {
            continue;
        }
        let modulation = (out.len() % 2 == 1).then(|| {
            [rng.gen_range(0..3) as f64, rng.gen_range(0..3) as f64, rng.gen_range(0.0..std::f64::consts::TAU)]
        });
        out.push(CompactBump { center: c, radius: r, modulation });
    }
    out
}

/// Evaluate a compact corpus on a domain, ids `compact:i`.
pub fn eval_compact(domain: &GridDomain, bumps: &[CompactBump]) -> Vec<(String, GridFunction)> {
    bumps.iter().enumerate().map(|(i, b)| (format!("compact:{i}"), b.eval(domain))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::ExponentSpec;
    use crate::geometry::{build_covering, DomainSpec};
    use proptest::prelude::*;

    fn square(level: u32) -> GridDomain {
        GridDomain::build(&DomainSpec::UnitSquare, level).unwrap()
    }

    fn one(id: &str, f: GridFunction) -> Vec<(String, GridFunction)> {
        vec![(id.to_string(), f)]
    }

    fn all_cells(d: &GridDomain) -> Vec<u32> {
        (0..d.len() as u32).collect()
    }

    #[test]
    fn classical_linear_oracle() {
        let d = square(8);
        let fam = one("x", GridFunction::from_fn(&d, |x| x[0]));
        let rep = classical_sp_verify(&d, &all_cells(&d), 2.0, 2.0, &fam).unwrap();
        let row = &rep.rows[0];
        assert!((row.lhs - (1.0f64 / 12.0).sqrt()).abs() < 1e-3, "{}", row.lhs);
        assert!((row.rhs - 2.0).abs() < 1e-9);
        assert!(rep.max_ratio * 2.0 >= 0.2887 - 1e-3);
    }

    #[test]
    fn classical_branch_errors() {
        let d = square(3);
        let fam = one("x", GridFunction::from_fn(&d, |x| x[0]));
        let c = all_cells(&d);
        assert!(matches!(classical_sp_verify(&d, &c, 1.5, 7.0, &fam), Err(Error::ExponentRange(_))));
        assert!(matches!(classical_sp_verify(&d, &c, 1.5, 1.2, &fam), Err(Error::ExponentRange(_))));
        assert!(matches!(classical_sp_verify(&d, &c, 3.0, f64::INFINITY, &fam), Err(Error::ExponentRange(_))));
        assert!(classical_sp_verify(&d, &c, 1.5, 6.0, &fam).is_ok());
        assert!(classical_sp_verify(&d, &c, 3.0, 50.0, &fam).is_ok());
    }

    #[test]
    fn classical_q_sweep_is_finite() {
        let d = square(6);
        let fam = lab_corpus(&d, 1, None)[6..7].to_vec();
        let ratios: Vec<f64> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&q| classical_sp_verify(&d, &all_cells(&d), 1.5, q, &fam).unwrap().max_ratio)
            .collect();
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0), "{ratios:?}");
    }

    #[test]
    fn local_reduces_to_classical_for_constant_exponents() {
        let (d, _, tree) = build_covering(&DomainSpec::UnitSquare, 5).unwrap();
        let fam = lab_corpus(&d, 3, None);
        let p = ExponentField::constant(&d, 1.5).unwrap();
        let q = ExponentField::constant(&d, 3.0).unwrap();
        let t = 1;
        let local = local_sp_verify(&d, &tree, t, &p, &q, &fam).unwrap();
        let classical = classical_sp_verify(&d, &tree.nodes[t].u_cells, 1.5, 3.0, &fam).unwrap();
        let m = tree.nodes[t].u_cells.len() as f64 * d.cell_area();
        for (a, b) in local.rows.iter().zip(&classical.rows) {
            assert!((a.ratio * (1.0 + m).powi(2) - b.ratio).abs() <= 1e-12 * b.ratio.max(1.0));
        }
    }

    #[test]
    fn local_certification_follows_the_jump() {
        let (d, _, tree) = build_covering(&DomainSpec::UnitSquare, 4).unwrap();
        let fam = one("x", GridFunction::from_fn(&d, |x| x[0]));
        let t = 0;
        let alpha = 0.25;
        // jump in 1/p of 0.1 < (1 - α)/n
        let p = ExponentSpec::Step { low: 1.5, high: 1.5 / (1.0 - 0.15) }.build(&d).unwrap();
        let q = p.sobolev_target(alpha).unwrap();
        let rep = local_sp_verify(&d, &tree, t, &p, &q, &fam).unwrap();
        assert_eq!(rep.certified_by.as_deref(), Some("branch 1"));
        // jump of 0.6 in 1/p: q_+ exceeds p_-*
        let p = ExponentSpec::Step { low: 1.2, high: 1.2 / (1.0 - 0.6 * 1.2) }.build(&d).unwrap();
        let q = p.sobolev_target(alpha).unwrap();
        let t = (0..tree.len()).find(|&t| {
            let (a, b) = p.range_over(&tree.nodes[t].u_cells);
            a < b
        });
        let t = t.expect("a node straddles the jump");
        assert!(matches!(local_sp_verify(&d, &tree, t, &p, &q, &fam), Err(Error::OscillationHypothesis { .. })));
    }

    #[test]
    fn partition_single_piece_when_small() {
        let d = square(5);
        let p = ExponentField::constant(&d, 1.5).unwrap();
        let u: Vec<u32> = d.select(|x| x[0] < 0.2 && x[1] < 0.2);
        let part = partition_for_oscillation(&d, &u, &p, 0.5, 0.25).unwrap();
        assert_eq!(part.pieces.len(), 1);
        assert!(part.all_certified());
    }

    #[test]
    fn partition_of_a_four_delta_region() {
        let d = square(7);
        let p = ExponentSpec::Linear { low: 1.2, high: 1.9 }.build(&d).unwrap();
        let (sigma, alpha) = (0.4, 0.3);
        let part0 = partition_for_oscillation(&d, &[0], &p, sigma, alpha).unwrap();
        let side = 4.0 * part0.delta / std::f64::consts::SQRT_2;
        let u = d.select(|x| x[0] < side && x[1] < side);
        let part = partition_for_oscillation(&d, &u, &p, sigma, alpha).unwrap();
        assert!(part.pieces.len() > 1 && part.pieces.len() <= 64, "{}", part.pieces.len());
        assert!(part.all_certified());
        let cap = DIM / (1.0 - sigma - alpha);
        assert!(part.pieces.iter().all(|g| g.q_plus <= cap));
        let mut seen: Vec<u32> = part.pieces.iter().flat_map(|g| g.cells.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, u);
    }

    #[test]
    fn partition_refuses_unresolved_continuity() {
        let d = square(3);
        let p = ExponentSpec::Step { low: 1.2, high: 1.9 }.build(&d).unwrap();
        let u = all_cells(&d);
        assert!(matches!(partition_for_oscillation(&d, &u, &p, 0.2, 0.1), Err(Error::RefineGrid { .. })));
        assert!(matches!(partition_for_oscillation(&d, &u, &p, 0.9, 0.2), Err(Error::Invalid(_))));
    }

    #[test]
    fn global_linear_oracle_is_stable() {
        let ratios: Vec<f64> = (5..=7)
            .map(|l| {
                let d = square(l);
                let p = ExponentField::constant(&d, 2.0).unwrap();
                let f = GridFunction::from_fn(&d, |x| x[0] - 0.5);
                let rep = global_sp_verify(&d, &p, 0.0, 2.0, &one("x", f)).unwrap();
                assert_eq!(rep.inequality, "improved-poincare");
                assert!(rep.certified());
                rep.max_ratio
            })
            .collect();
        // ‖d‖_2 on the unit square is 1/sqrt(24)
        let exact = (1.0f64 / 12.0).sqrt() * 24f64.sqrt();
        for r in &ratios {
            assert!((r / exact - 1.0).abs() < 0.05, "{r} vs {exact}");
        }
    }

    #[test]
    fn global_hypotheses_and_alpha_one() {
        let d = square(5);
        let fam = lab_corpus(&d, 7, None);
        assert!(fam.len() >= 20);
        let p = ExponentSpec::RadialLh { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let rep = global_sp_verify(&d, &p, 0.25, 2.0, &fam).unwrap();
        assert_eq!(rep.certified_by.as_deref(), Some("full hypotheses"));
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
        assert!(matches!(global_sp_verify(&d, &p, 1.0, 2.0, &fam), Err(Error::AlphaOne)));
        let q = ExponentSpec::Step { low: 1.1, high: 1.9 }.build(&d).unwrap();
        let rep = global_sp_verify(&d, &q, 0.5, 2.0, &fam).unwrap();
        assert!(!rep.certified());
        assert!(rep.rows.iter().all(|r| r.ratio.is_finite()));
    }

    #[test]
    fn sobolev_needs_compact_support() {
        let d = square(4);
        let p = ExponentField::constant(&d, 2.0).unwrap();
        let fam = one("one", GridFunction::from_fn(&d, |_| 1.0));
        assert!(matches!(sobolev_verify(&d, &p, 0.5, &fam), Err(Error::NotCompact { .. })));
        let zero = one("zero", GridFunction::zeros(d.len()));
        let rep = sobolev_verify(&d, &p, 0.5, &zero).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
    }

    #[test]
    fn sobolev_bump_is_stable_on_square_and_l_shape() {
        let reference = square(4);
        let bumps = compact_corpus(&reference, 11, 4);
        assert_eq!(bumps.len(), 4);
        let mut prev = None;
        for l in 4..=6 {
            let d = square(l);
            let p = ExponentField::constant(&d, 2.0).unwrap();
            let rep = sobolev_verify(&d, &p, 0.5, &eval_compact(&d, &bumps)).unwrap();
            assert!(rep.certified());
            if let Some(a) = prev {
                assert!(step_factor(a, rep.max_ratio) < 1.5);
            }
            prev = Some(rep.max_ratio);
        }
        let reference = GridDomain::build(&DomainSpec::LShape, 4).unwrap();
        let bumps = compact_corpus(&reference, 5, 6);
        let d = GridDomain::build(&DomainSpec::LShape, 5).unwrap();
        let p = ExponentSpec::Step { low: 1.6, high: 1.9 }.build(&d).unwrap();
        let rep = sobolev_verify(&d, &p, 0.25, &eval_compact(&d, &bumps)).unwrap();
        assert!(rep.max_ratio.is_finite() && rep.max_ratio > 0.0);
    }

    #[test]
    fn sweep_records_levels() {
        let rep = refinement_sweep(&[4, 5], |l| {
            let d = square(l);
            let p = ExponentField::constant(&d, 2.0).unwrap();
            global_sp_verify(&d, &p, 0.0, 2.0, &lab_corpus(&d, 1, None))
        })
        .unwrap();
        assert_eq!(rep.refinements.len(), 2);
        assert!(rep.refinement_step() < 1.5);
        assert_eq!(rep.recompute_max(), (rep.max_ratio, rep.argmax.clone()));
        let csv = rep.to_csv();
        assert!(csv.as_str().starts_with("function_id,lhs,rhs,ratio\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn constants_give_zero(c in -5.0f64..5.0, alpha in 0.0f64..0.5) {
            let d = square(4);
            let p = ExponentSpec::RadialLh { low: 1.5, high: 2.5 }.build(&d).unwrap();
            let fam = one("c", GridFunction::from_fn(&d, |_| c));
            let g = global_sp_verify(&d, &p, alpha, 2.0, &fam).unwrap();
            prop_assert!(g.rows[0].lhs <= 1e-12 * (1.0 + c.abs()));
            let cl = classical_sp_verify(&d, &all_cells(&d), 1.5, 3.0, &fam).unwrap();
            prop_assert!(cl.rows[0].lhs <= 1e-12 * (1.0 + c.abs()));
        }

        #[test]
        fn ratios_are_scale_covariant(c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0], seed in 0u64..50) {
            let d = square(4);
            let p = ExponentSpec::RadialLh { low: 1.5, high: 2.5 }.build(&d).unwrap();
            let fam = lab_corpus(&d, seed, None);
            let scaled: Vec<_> = fam.iter().map(|(id, f)| (id.clone(), f.scaled(c))).collect();
            let a = global_sp_verify(&d, &p, 0.25, 2.0, &fam).unwrap();
            let b = global_sp_verify(&d, &p, 0.25, 2.0, &scaled).unwrap();
            for (x, y) in a.rows.iter().zip(&b.rows) {
                prop_assert!((x.ratio - y.ratio).abs() <= 1e-10 * x.ratio.max(1e-300));
            }
        }

        #[test]
        fn full_hypotheses_imply_the_subcritical_branch(low in 1.05f64..1.9, span in 0.0f64..0.9, alpha in 0.0f64..0.6) {
            let d = square(4);
            let high = (low + span).min(1.99);
            let p = ExponentSpec::Step { low, high }.build(&d).unwrap();
            let rep = global_sp_verify(&d, &p, alpha, 1.0, &one("x", GridFunction::from_fn(&d, |x| x[0]))).unwrap();
            if rep.hypotheses[2].held && rep.hypotheses[0].held && p.p_plus() < DIM {
                prop_assert!(rep.hypotheses[3].held);
            }
        }
    }
}
