//! Decomposition of a mean-zero function into pieces subordinate to a tree
//! covering, and verification of the pieces.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponent::{check_boundary_lh, ConditionReport, ExponentField};
use crate::geometry::{GridDomain, TreeCovering};
use crate::io::{num, Csv};
use crate::norm::{compensated_sum, indicator_norm, luxemburg_values, norm, GridFunction, Region, DEFAULT_TOL};

/// Tent of `U_t` at a point in grid cell units: 1 on `Q_t`, linear down to 0
/// at the outer edge of the collar, separately along each axis.
pub fn tent_weight(tree: &TreeCovering, t: usize, x: [f64; 2]) -> f64 {
    let [x0, y0, x1, y1] = tree.q_rect(t).map(|v| v as f64);
    let w = tree.nodes[t].collar as f64;
    let axis = |v: f64, lo: f64, hi: f64| (1.0 - (lo - v).max(v - hi).max(0.0) / w).max(0.0);
    axis(x[0], x0, x1) * axis(x[1], y0, y1)
}

/// `φ_t = w_t / Σ_s w_s` on the covered cells.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// `φ_t` on `nodes[t].u_cells`, aligned with that list.
    pub weights: Vec<Vec<f64>>,
    /// Domain cells in no `U_t`, where the partition is undefined.
    pub uncovered: Vec<u32>,
}

fn cell_point(domain: &GridDomain, c: usize) -> [f64; 2] {
    let [i, j] = domain.cell(c);
    [i as f64 + 0.5, j as f64 + 0.5]
}

pub fn partition_of_unity(domain: &GridDomain, tree: &TreeCovering) -> PartitionOfUnity {
    let raw: Vec<Vec<f64>> = tree
        .nodes
        .par_iter()
        .enumerate()
        .map(|(t, n)| n.u_cells.iter().map(|&c| tent_weight(tree, t, cell_point(domain, c as usize))).collect())
        .collect();
    let mut total = vec![0.0f64; domain.len()];
    for (n, w) in tree.nodes.iter().zip(&raw) {
        for (&c, &v) in n.u_cells.iter().zip(w) {
            total[c as usize] += v;
        }
    }
    let weights = tree
        .nodes
        .iter()
        .zip(raw)
        .map(|(n, w)| n.u_cells.iter().zip(w).map(|(&c, v)| v / total[c as usize]).collect())
        .collect();
    PartitionOfUnity { weights, uncovered: tree.uncovered.clone() }
}

/// `φ_t` at an arbitrary point in grid cell units, over the nodes whose tent
/// is positive there.
pub fn partition_at(tree: &TreeCovering, x: [f64; 2]) -> Vec<(usize, f64)> {
    let w: Vec<(usize, f64)> =
        (0..tree.len()).map(|t| (t, tent_weight(tree, t, x))).filter(|&(_, v)| v > 0.0).collect();
    let total: f64 = w.iter().map(|v| v.1).sum();
    w.into_iter().map(|(t, v)| (t, v / total)).collect()
}

/// Pieces `g_t` with `Σ g_t = g`, `supp g_t ⊆ U_t` and `∫ g_t = 0`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// `g_t` as `(cell, value)` sorted by cell.
    pub parts: Vec<Vec<(u32, f64)>>,
    /// `∫_{W_s} Σ_{t ⪰ s} f_t`, the mass moved by `h_s`.
    pub shadow_integrals: Vec<f64>,
    /// Nodes `s` whose `h_s` was added to `g_t` (the children of `t`).
    pub h_sources: Vec<Vec<usize>>,
}

impl Decomposition {
    /// `g_t` as a full grid function.
    pub fn part(&self, t: usize, len: usize) -> GridFunction {
        let mut out = vec![0.0; len];
        for &(c, v) in &self.parts[t] {
            out[c as usize] = v;
        }
        GridFunction::new(out)
    }
}

/// `f_t = g φ_t`, `h_s = χ_{B_s} |B_s|^{-1} ∫_{W_s} Σ_{t⪰s} f_t`,
/// `g_t = f_t + Σ_{s_p = t} h_s - h_t` (no `h` term at the root).
pub fn decompose(domain: &GridDomain, g: &[f64], tree: &TreeCovering, pou: &PartitionOfUnity) -> Result<Decomposition> {
    if g.len() != domain.len() {
        return Err(Error::Length { expected: domain.len(), got: g.len() });
    }
    let l1 = domain.cell_area() * compensated_sum(g.iter().map(|v| v.abs()));
    let mean = domain.cell_area() * compensated_sum(g.iter().copied());
    if mean.abs() > 1e-10 * l1 {
        return Err(Error::NonzeroMean { integral: mean.abs(), bound: 1e-10 * l1 });
    }
    let outside: Vec<usize> = pou.uncovered.iter().map(|&c| c as usize).filter(|&c| g[c] != 0.0).collect();
    if !outside.is_empty() {
        return Err(Error::Uncovered { cells: outside });
    }
    let area = domain.cell_area();
    let f: Vec<Vec<f64>> = tree
        .nodes
        .iter()
        .zip(&pou.weights)
        .map(|(n, w)| n.u_cells.iter().zip(w).map(|(&c, &phi)| g[c as usize] * phi).collect())
        .collect();
    let own: Vec<f64> = f.iter().map(|v| area * compensated_sum(v.iter().copied())).collect();

    // bottom-up: each accumulator is the node's own integral plus its children's
    let mut order: Vec<usize> = (0..tree.len()).collect();
    order.sort_by_key(|&t| std::cmp::Reverse(tree.nodes[t].depth));
    let mut acc = own.clone();
    for &t in &order {
        if let Some(p) = tree.nodes[t].parent {
            acc[p] += acc[t];
        }
    }
    let h_value = |s: usize| acc[s] / (tree.nodes[s].b_cells.len() as f64 * area);

    let parts = (0..tree.len())
        .into_par_iter()
        .map(|t| {
            let node = &tree.nodes[t];
            let mut part: Vec<(u32, f64)> = node.u_cells.iter().copied().zip(f[t].iter().copied()).collect();
            let mut extra: Vec<(u32, f64)> = Vec::new();
            let mut add = |c: u32, v: f64| match part.binary_search_by_key(&c, |e| e.0) {
                Ok(k) => part[k].1 += v,
                Err(_) => extra.push((c, v)),
            };
            for &s in &node.children {
                let v = h_value(s);
                for &c in &tree.nodes[s].b_cells {
                    add(c, v);
                }
            }
            if node.parent.is_some() {
                let v = h_value(t);
                for &c in &node.b_cells {
                    add(c, -v);
                }
            }
            part.extend(extra);
            part.sort_by_key(|e| e.0);
            part
        })
        .collect();
    let h_sources = tree.nodes.iter().map(|n| n.children.clone()).collect();
    Ok(Decomposition { parts, shadow_integrals: acc, h_sources })
}

/// Residuals of the three defining properties and the measured constant of
/// `‖Σ_t χ_{U_t} ‖χ_{U_t} g_t‖_q / ‖χ_{U_t}‖_q‖_q ≤ C ‖g‖_q`.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    /// `max |Σ_t g_t - g| / max |g|`.
    pub sum_residual: f64,
    /// `max_t |∫ g_t| / (‖g_t‖_1 + 1e-4)`; the tolerance check uses the exact form.
    pub mean_residual: f64,
    pub means_ok: bool,
    /// Every `g_t` vanishes outside `U_t`.
    pub support_ok: bool,
    /// `None` when `g = 0`.
    pub constant: Option<f64>,
    /// Per node: `(∫ g_t, ‖g_t‖_q, supp g_t ⊆ U_t)`.
    pub nodes: Vec<(f64, f64, bool)>,
    pub boundary_lh: ConditionReport,
    pub warnings: Vec<String>,
}

impl DecompositionReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["node_id", "integral_residual", "norm_q", "support_ok"]);
        for (t, &(i, n, ok)) in self.nodes.iter().enumerate() {
            csv.row(&[t.to_string(), num(i), num(n), ok.to_string()]);
        }
        csv
    }

    pub fn constant_label(&self) -> String {
        self.constant.map(num).unwrap_or_else(|| "undefined".into())
    }
}

pub fn verify_decomposition(
    domain: &GridDomain,
    dec: &Decomposition,
    g: &[f64],
    tree: &TreeCovering,
    q: &ExponentField,
) -> Result<DecompositionReport> {
    if !(q.p_minus() > 1.0) {
        return Err(Error::ExponentRange(format!("q_- must exceed 1, got {}", q.p_minus())));
    }
    let area = domain.cell_area();
    let mut sum = vec![0.0f64; domain.len()];
    for part in &dec.parts {
        for &(c, v) in part {
            sum[c as usize] += v;
        }
    }
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = sum.iter().zip(g).fold(0.0f64, |m, (s, v)| m.max((s - v).abs()));
    let sum_residual = if gmax > 0.0 { dev / gmax } else { dev };

    let nodes: Vec<(f64, f64, bool, f64)> = dec
        .parts
        .par_iter()
        .enumerate()
        .map(|(t, part)| {
            let u = &tree.nodes[t].u_cells;
            let support = part.iter().all(|(c, _)| u.binary_search(c).is_ok());
            let integral = area * compensated_sum(part.iter().map(|e| e.1));
            let l1 = area * compensated_sum(part.iter().map(|e| e.1.abs()));
            let vals: Vec<f64> = part.iter().map(|e| e.1).collect();
            let qs: Vec<f64> = part.iter().map(|e| q.get(e.0 as usize)).collect();
            let nq = luxemburg_values(&vals, &qs, area, DEFAULT_TOL)?.value;
            Ok((integral, nq, support, l1))
        })
        .collect::<Result<_>>()?;
    let means_ok = nodes.iter().all(|&(i, _, _, l1)| i.abs() <= 1e-10 * l1 + 1e-14);
    let mean_residual = nodes.iter().map(|&(i, _, _, l1)| i.abs() / (l1 + 1e-4)).fold(0.0, f64::max);
    let support_ok = nodes.iter().all(|n| n.2);

    let gq = norm(domain, g, q.values(), Region::All)?;
    let constant = if gq > 0.0 {
        let weights: Vec<f64> = tree
            .nodes
            .par_iter()
            .zip(&nodes)
            .map(|(n, &(_, nq, _, _))| Ok(if nq > 0.0 { nq / indicator_norm(domain, &n.u_cells, q.values())? } else { 0.0 }))
            .collect::<Result<_>>()?;
        let mut lhs = vec![0.0; domain.len()];
        for (n, w) in tree.nodes.iter().zip(weights) {
            for &c in &n.u_cells {
                lhs[c as usize] += w;
            }
        }
        Some(norm(domain, &lhs, q.values(), Region::All)? / gq)
    } else {
        None
    };
    let boundary_lh = check_boundary_lh(q, domain, 1.0)?;
    let mut warnings = Vec::new();
    if !support_ok {
        warnings.push("some g_t leave U_t: an overlap region lies outside its parent".into());
    }
    Ok(DecompositionReport {
        sum_residual,
        mean_residual,
        means_ok,
        support_ok,
        constant,
        nodes: nodes.into_iter().map(|(i, n, s, _)| (i, n, s)).collect(),
        boundary_lh,
        warnings,
    })
}

/// Seeded smooth field restricted to the covered cells, minus its mean there.
pub fn mean_zero_field(domain: &GridDomain, tree: &TreeCovering, seed: u64, index: u64) -> GridFunction {
    let covered = tree.covered_cells();
    let f = crate::norm::smooth_random(domain, seed, index).restricted(&covered);
    let m = compensated_sum(covered.iter().map(|&c| f.values[c as usize])) / covered.len() as f64;
    let mut out = vec![0.0; domain.len()];
    for &c in &covered {
        out[c as usize] = f.values[c as usize] - m;
    }
    GridFunction::new(out)
}
