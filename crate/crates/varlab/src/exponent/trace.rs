use rayon::prelude::*;

use super::{ConditionReport, ExponentField, Witness};
use crate::geometry::GridDomain;

/// Boundary values of an exponent and the log-Hölder constant on the boundary.
#[derive(Debug, Clone)]
pub struct TraceReport {
    /// `(boundary cell, traced value)` in increasing cell order.
    pub values: Vec<(u32, f64)>,
    /// Boundary cells whose chain never met the cone condition within two cells.
    pub untraced: Vec<u32>,
    /// Steepest-ascent chain of every traced cell, starting at the cell.
    pub chains: Vec<Vec<u32>>,
    /// `sup |p(x) - p(y)| (-log |x - y|)` over traced pairs with `|x - y| < 1/2`.
    pub report: ConditionReport,
}

/// Walk from `x` to the 8-neighbour of largest distance while it increases;
/// ties go to the smaller id.
pub(crate) fn ascent_chain(domain: &GridDomain, x: usize, max_len: usize) -> Vec<u32> {
    let mut chain = vec![x as u32];
    let mut cur = x;
    while chain.len() < max_len {
        let [i, j] = domain.cell(cur);
        let mut best = (domain.dist2_half_units(cur), usize::MAX);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if let Some(y) = domain.id_at(i as i64 + di, j as i64 + dj) {
                    let d = domain.dist2_half_units(y);
                    if d > best.0 || (d == best.0 && best.1 != usize::MAX && y < best.1) {
                        best = (d, y);
                    }
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        cur = best.1;
        chain.push(cur as u32);
    }
    chain
}

/// Trace of `p` on the boundary cells: the value at the first chain cell
/// `x_k` within two cells of `x` satisfying `|x_k - x| ≤ λ d(x_k)`.
///
/// `tau` and `lambda` are only compared: the report carries a note when
/// `tau ≤ 2 λ`.
pub fn boundary_trace(p: &ExponentField, domain: &GridDomain, tau: f64, lambda: f64) -> TraceReport {
    let h = domain.h();
    let boundary: Vec<usize> = (0..domain.len()).filter(|&k| domain.is_boundary_cell(k)).collect();
    let traced: Vec<(usize, Option<f64>, Vec<u32>)> = boundary
        .par_iter()
        .map(|&x| {
            let chain = ascent_chain(domain, x, 3);
            let cx = domain.center(x);
            let value = chain.iter().find_map(|&y| {
                let cy = domain.center(y as usize);
                let r = ((cx[0] - cy[0]).powi(2) + (cx[1] - cy[1]).powi(2)).sqrt();
                (r <= 2.0 * h && r <= lambda * domain.dist(y as usize)).then(|| p.get(y as usize))
            });
            (x, value, chain)
        })
        .collect();
    let mut values = Vec::new();
    let mut untraced = Vec::new();
    let mut chains = Vec::new();
    for (x, v, chain) in traced {
        match v {
            Some(v) => {
                values.push((x as u32, v));
                chains.push(chain);
            }
            None => untraced.push(x as u32),
        }
    }
    let best = (0..values.len())
        .into_par_iter()
        .map(|a| {
            let (xa, va) = values[a];
            let ca = domain.center(xa as usize);
            let mut best = (0.0f64, usize::MAX, usize::MAX);
            for &(xb, vb) in &values[a + 1..] {
                let cb = domain.center(xb as usize);
                let r = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
                if r < 0.5 {
                    let c = (va - vb).abs() * -r.ln();
                    if c > best.0 {
                        best = (c, xa as usize, xb as usize);
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
    let mut report = ConditionReport::new("boundary-trace-LH", best.0, witness);
    if !(tau > 2.0 * lambda) {
        report.notes.push(format!("tau = {tau} does not exceed 2 lambda = {}; trace precondition unverified", 2.0 * lambda));
    }
    report.extra.push(("traced".into(), values.len() as f64));
    report.extra.push(("untraced".into(), untraced.len() as f64));
    TraceReport { values, untraced, chains, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{interior_lh_constant, ExponentSpec};
    use crate::geometry::DomainSpec;

    #[test]
    fn constant_trace_is_flat() {
        let d = GridDomain::build(&DomainSpec::UnitSquare, 5).unwrap();
        let p = ExponentField::constant(&d, 2.2).unwrap();
        let t = boundary_trace(&p, &d, 3.0, 1.0);
        assert!(t.untraced.is_empty());
        assert_eq!(t.values.len(), 124);
        assert!(t.values.iter().all(|&(_, v)| v == 2.2));
        assert_eq!(t.report.constant, 0.0);
    }

    #[test]
    fn chains_climb() {
        let d = GridDomain::build(&DomainSpec::LShape, 5).unwrap();
        for x in (0..d.len()).filter(|&k| d.is_boundary_cell(k)) {
            let c = ascent_chain(&d, x, 6);
            for w in c.windows(2) {
                assert!(d.dist2_half_units(w[1] as usize) > d.dist2_half_units(w[0] as usize));
            }
        }
    }

    #[test]
    fn lipschitz_trace_below_interior_constant() {
        let d = GridDomain::build(&DomainSpec::UnitSquare, 5).unwrap();
        let p = ExponentSpec::Linear { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let t = boundary_trace(&p, &d, 3.0, 1.0);
        let interior = interior_lh_constant(&p, &d);
        assert!(t.report.constant > 0.0);
        assert!(t.report.constant <= 2.0 * interior.constant);
    }
}
