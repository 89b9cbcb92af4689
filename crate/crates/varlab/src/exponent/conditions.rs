use rayon::prelude::*;

use super::pyramid::Pyramid;
use super::{ball_cells, ball_radius2, disc_cells, ConditionReport, ExponentField, Witness, DIM};
use crate::error::{Error, Result};
use crate::geometry::{GridDomain, TreeCovering};
use crate::norm::indicator_norm;

const CHUNK: usize = 2048;

fn cell_xy(domain: &GridDomain, x: usize) -> [i64; 2] {
    let [i, j] = domain.cell(x);
    [i as i64, j as i64]
}

/// `(p_+(B) - p_-(B)) · (-log(τ d(x)))` evaluated directly on the cell set of
/// `B_{x,τ}`.
pub fn boundary_lh_at(p: &ExponentField, domain: &GridDomain, tau: f64, x: usize) -> f64 {
    let (lo, hi) = p.range_over(&ball_cells(domain, x, tau));
    (hi - lo) * -(tau * domain.dist(x)).ln()
}

/// Best constant `C₀*` of the boundary log-Hölder condition, over the cells
/// with `τ d(x) ≤ 1/2`.
pub fn check_boundary_lh(p: &ExponentField, domain: &GridDomain, tau: f64) -> Result<ConditionReport> {
    check_boundary_lh_capped(p, domain, tau, 0.5)
}

/// As [`check_boundary_lh`] with the admission bound `τ d(x) ≤ cap`, `cap < 1`.
pub fn check_boundary_lh_capped(p: &ExponentField, domain: &GridDomain, tau: f64, cap: f64) -> Result<ConditionReport> {
    if !(tau >= 1.0) {
        return Err(Error::Invalid(format!("tau must be >= 1, got {tau}")));
    }
    if !(cap > 0.0 && cap < 1.0) {
        return Err(Error::Invalid(format!("admission bound must lie in (0, 1), got {cap}")));
    }
    let name = format!("boundary-LH(tau={tau})");
    let mut cand: Vec<(f64, usize)> = (0..domain.len())
        .filter_map(|x| {
            let r = tau * domain.dist(x);
            (r <= cap).then(|| (-r.ln(), x))
        })
        .collect();
    if cand.is_empty() {
        let mut rep = ConditionReport::new(&name, 0.0, None);
        rep.vacuous = true;
        rep.notes.push(format!("no cell satisfies tau d(x) <= {cap}"));
        return Ok(rep);
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let pyr = Pyramid::new(domain, p.values());
    let spread = p.p_plus() - p.p_minus();
    let mut best = (0.0f64, cand[0].1);
    let mut evaluated = 0usize;
    for chunk in cand.chunks(CHUNK) {
        if spread * chunk[0].0 < best.0 {
            break;
        }
        let local = chunk
            .par_iter()
            .map(|&(w, x)| {
                let e = pyr.disc_extrema(cell_xy(domain, x), ball_radius2(tau, domain.dist2_half_units(x)));
                ((e.max - e.min) * w, x)
            })
            .reduce(|| (f64::NEG_INFINITY, usize::MAX), better);
        best = better(best, local);
        evaluated += chunk.len();
    }
    let mut rep = ConditionReport::new(&name, best.0, Some(Witness::Ball { cell: best.1, tau }));
    rep.extra.push(("candidates".into(), cand.len() as f64));
    rep.extra.push(("evaluated".into(), evaluated as f64));
    Ok(rep)
}

/// Larger value wins; ties go to the smaller index.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Both forms of the equivalent oscillation condition.
#[derive(Debug, Clone)]
pub struct LhEquivReport {
    /// `sup_x |B_{x,τ}|^{-(p_+(B) - p_-(B))}`.
    pub ball: ConditionReport,
    /// `sup_t |W_t|^{-(p_+(W_t) - p_-(W_t))}`.
    pub shadow: ConditionReport,
}

/// Oscillation of `p` over every shadow, bottom up.
pub(crate) fn shadow_ranges(p: &ExponentField, tree: &TreeCovering) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&t| std::cmp::Reverse(tree.nodes[t].depth));
    let mut range: Vec<(f64, f64)> = tree.nodes.iter().map(|n| p.range_over(&n.u_cells)).collect();
    for t in order {
        if let Some(parent) = tree.nodes[t].parent {
            let (lo, hi) = range[t];
            let r = &mut range[parent];
            r.0 = r.0.min(lo);
            r.1 = r.1.max(hi);
        }
    }
    range
}

pub fn check_lh_equiv(p: &ExponentField, domain: &GridDomain, tree: &TreeCovering, tau: f64) -> Result<LhEquivReport> {
    if !(tau >= 1.0) {
        return Err(Error::Invalid(format!("tau must be >= 1, got {tau}")));
    }
    let pyr = Pyramid::new(domain, p.values());
    let area = domain.cell_area();
    let ball = (0..domain.len())
        .into_par_iter()
        .map(|x| {
            let r2 = ball_radius2(tau, domain.dist2_half_units(x));
            let e = pyr.disc_extrema(cell_xy(domain, x), r2);
            let osc = e.max - e.min;
            if osc == 0.0 {
                return (1.0, x);
            }
            let measure = disc_cells(domain, x, r2).len() as f64 * area;
            (measure.powf(-osc), x)
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better);
    let ranges = shadow_ranges(p, tree);
    let shadow = (0..tree.len())
        .map(|t| {
            let (lo, hi) = ranges[t];
            ((tree.nodes[t].shadow_cells as f64 * area).powf(-(hi - lo)), t)
        })
        .fold((f64::NEG_INFINITY, usize::MAX), better);
    Ok(LhEquivReport {
        ball: ConditionReport::new(&format!("ball-oscillation(tau={tau})"), ball.0, Some(Witness::Ball { cell: ball.1, tau })),
        shadow: ConditionReport::new("shadow-oscillation", shadow.0, Some(Witness::Node(shadow.1))),
    })
}

/// `|p(a) - p(b)|`.
pub fn eps_violation_at(p: &ExponentField, a: usize, b: usize) -> f64 {
    (p.get(a) - p.get(b)).abs()
}

/// Largest `δ*` (in cells) such that `|x - y| < δ* h` implies
/// `|p(x) - p(y)| < ε`, measured on the closed grid metric.
///
/// The constant is `δ*`; the witness is a closest violating pair. Fails when
/// adjacent cells already violate (`δ* = 1`).
pub fn check_eps_continuity(p: &ExponentField, domain: &GridDomain, eps: f64) -> Result<ConditionReport> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    let name = format!("eps-continuity(eps={eps})");
    let pyr = Pyramid::new(domain, p.values());
    let violates = |d2: u64| -> bool {
        (0..domain.len()).into_par_iter().any(|x| pyr.disc_deviates(cell_xy(domain, x), d2 as f64, p.get(x), eps))
    };
    let (w, h) = (domain.width() as u64, domain.height() as u64);
    let d_max = (w - 1) * (w - 1) + (h - 1) * (h - 1);
    if d_max == 0 || !violates(d_max) {
        let diam = ((w * w + h * h) as f64).sqrt();
        let mut rep = ConditionReport::new(&name, diam, None);
        rep.notes.push("no violating pair; delta* is the domain diameter".into());
        rep.extra.push(("delta_length".into(), diam * domain.h()));
        return Ok(rep);
    }
    // violates(lo) is false, violates(hi) is true
    let (mut lo, mut hi) = (0u64, d_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if violates(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = (0..domain.len())
        .into_par_iter()
        .find_first(|&x| pyr.disc_deviates(cell_xy(domain, x), hi as f64, p.get(x), eps))
        .expect("violation exists at the searched radius");
    let y = disc_cells(domain, x, hi as f64)
        .into_iter()
        .map(|c| c as usize)
        .find(|&y| eps_violation_at(p, x, y) >= eps)
        .expect("violating partner inside the disc");
    let delta = (hi as f64).sqrt();
    let mut rep = ConditionReport::new(&name, delta, Some(Witness::Pair(x, y)));
    rep.pass = hi > 1;
    rep.extra.push(("delta_length".into(), delta * domain.h()));
    rep.extra.push(("jump".into(), eps_violation_at(p, x, y)));
    if !rep.pass {
        rep.notes.push("adjacent cells violate; refine the grid or raise eps".into());
    }
    Ok(rep)
}

/// `β` used by the off-diagonal forms: `α` when `p_+ < n/α`, else `n/(2 p_+)`.
pub fn offdiag_beta(p_plus: f64, alpha: f64) -> f64 {
    if alpha == 0.0 || p_plus < DIM / alpha {
        alpha
    } else {
        DIM / (2.0 * p_plus)
    }
}

/// Averaging-type conditions on balls and on the sets `U_t`.
#[derive(Debug, Clone)]
pub struct K0Report {
    /// `sup_x |B|^{-1} ‖χ_B‖_p ‖χ_B‖_{p'}`.
    pub ball: ConditionReport,
    /// `sup_t |U_t|^{-1} ‖χ_{U_t}‖_p ‖χ_{U_t}‖_{p'}`.
    pub tree: ConditionReport,
    /// `sup_t |U_t|^{-1+α/n} ‖χ_{U_t}‖_q ‖χ_{U_t}‖_{p'}`, for `α > 0`.
    pub offdiag_q: Option<ConditionReport>,
    /// `sup_t |U_t|^{-1-β/n} ‖χ_{U_t}‖_{q'} ‖χ_{U_t}‖_p`, for `α > 0`.
    pub offdiag_p: Option<ConditionReport>,
    pub beta: f64,
}

fn sup_over(values: Vec<f64>) -> (f64, usize) {
    values.into_iter().enumerate().map(|(k, v)| (v, k)).fold((f64::NEG_INFINITY, usize::MAX), better)
}

pub fn check_k0(p: &ExponentField, domain: &GridDomain, tree: &TreeCovering, tau: f64, alpha: f64) -> Result<K0Report> {
    if !(tau >= 1.0) {
        return Err(Error::Invalid(format!("tau must be >= 1, got {tau}")));
    }
    let dual = p.dual()?;
    let area = domain.cell_area();
    let (pv, dv) = (p.values(), dual.values());
    let ball_vals: Vec<f64> = (0..domain.len())
        .into_par_iter()
        .map(|x| {
            let cells = ball_cells(domain, x, tau);
            let m = cells.len() as f64 * area;
            Ok(indicator_norm(domain, &cells, pv)? * indicator_norm(domain, &cells, dv)? / m)
        })
        .collect::<Result<_>>()?;
    let (bv, bx) = sup_over(ball_vals);
    let per_node = |f: &(dyn Fn(&[u32], f64) -> Result<f64> + Sync)| -> Result<(f64, usize)> {
        let vals: Vec<f64> = tree
            .nodes
            .par_iter()
            .map(|n| f(&n.u_cells, n.u_cells.len() as f64 * area))
            .collect::<Result<_>>()?;
        Ok(sup_over(vals))
    };
    let (tv, tt) = per_node(&|u, m| Ok(indicator_norm(domain, u, pv)? * indicator_norm(domain, u, dv)? / m))?;
    let beta = offdiag_beta(p.p_plus(), alpha);
    let (offdiag_q, offdiag_p) = if alpha > 0.0 {
        let q = p.map(|v| 1.0 / (1.0 / v - beta / DIM))?;
        let qd = q.dual()?;
        let (qv, qdv) = (q.values(), qd.values());
        let (a, at) = per_node(&|u, m| {
            Ok(m.powf(-1.0 + alpha / DIM) * indicator_norm(domain, u, qv)? * indicator_norm(domain, u, dv)?)
        })?;
        let (b, bt) = per_node(&|u, m| {
            Ok(m.powf(-1.0 - beta / DIM) * indicator_norm(domain, u, qdv)? * indicator_norm(domain, u, pv)?)
        })?;
        (
            Some(ConditionReport::new(&format!("offdiag-K0-q(alpha={alpha})"), a, Some(Witness::Node(at)))),
            Some(ConditionReport::new(&format!("offdiag-K0-p(beta={beta})"), b, Some(Witness::Node(bt)))),
        )
    } else {
        (None, None)
    };
    Ok(K0Report {
        ball: ConditionReport::new(&format!("K0-ball(tau={tau})"), bv, Some(Witness::Ball { cell: bx, tau })),
        tree: ConditionReport::new("K0-tree", tv, Some(Witness::Node(tt))),
        offdiag_q,
        offdiag_p,
        beta,
    })
}

/// `max_t ‖χ_{U_t}‖_p / |U_t|^{1/p_{U_t}}`; passes when the minimum ratio is
/// at least 1/2.
pub fn harmonic_mean_norm_check(p: &ExponentField, domain: &GridDomain, tree: &TreeCovering) -> Result<ConditionReport> {
    if !(p.p_minus() > 1.0) {
        return Err(Error::ExponentRange(format!("harmonic-mean check needs p_- > 1, got {}", p.p_minus())));
    }
    let area = domain.cell_area();
    let means = p.node_harmonic_means(tree);
    let ratios: Vec<f64> = tree
        .nodes
        .par_iter()
        .zip(means.par_iter())
        .map(|(n, &pm)| {
            let m = n.u_cells.len() as f64 * area;
            Ok(indicator_norm(domain, &n.u_cells, p.values())? / m.powf(1.0 / pm))
        })
        .collect::<Result<_>>()?;
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let (max, t) = sup_over(ratios);
    let mut rep = ConditionReport::new("harmonic-mean-norm", max, Some(Witness::Node(t)));
    rep.extra.push(("min_ratio".into(), min));
    rep.pass = min >= 0.5;
    let c0 = check_boundary_lh(p, domain, 1.0)?;
    rep.extra.push(("boundary_lh_c0".into(), c0.constant));
    Ok(rep)
}

/// `sup |p(x) - p(y)| · (-log |x - y|)` over cell pairs with `0 < |x - y| < 1/2`.
pub fn interior_lh_constant(p: &ExponentField, domain: &GridDomain) -> ConditionReport {
    let h = domain.h();
    // pairs strictly closer than 1/2 in cell units
    let reach = (0.5 / h).ceil() as i64;
    let lim2 = 0.25 / (h * h);
    let best = (0..domain.len())
        .into_par_iter()
        .map(|x| {
            let [ci, cj] = cell_xy(domain, x);
            let mut best = (0.0f64, usize::MAX, usize::MAX);
            for j in (cj - reach).max(0)..=(cj + reach).min(domain.height() as i64 - 1) {
                for i in (ci - reach).max(0)..=(ci + reach).min(domain.width() as i64 - 1) {
                    let d2 = ((i - ci) * (i - ci) + (j - cj) * (j - cj)) as f64;
                    if d2 == 0.0 || d2 >= lim2 {
                        continue;
                    }
                    let Some(y) = domain.id_at(i, j) else { continue };
                    let v = eps_violation_at(p, x, y) * -(d2.sqrt() * h).ln();
                    let (a, b) = (x.min(y), x.max(y));
                    if v > best.0 || (v == best.0 && (a, b) < (best.1, best.2)) {
                        best = (v, a, b);
                    }
                }
            }
            best
        })
        .reduce(
            || (0.0, usize::MAX, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a },
        );
    let witness = (best.1 != usize::MAX).then_some(Witness::Pair(best.1, best.2));
    ConditionReport::new("interior-LH", best.0, witness)
}
