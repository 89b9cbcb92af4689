use rayon::prelude::*;

use super::ExponentField;
use crate::error::{Error, Result};
use crate::geometry::{squared_edt, whitney_core, GridDomain};

/// An exponent extended from `Ω` to the disc `3B`.
#[derive(Debug, Clone)]
pub struct Extension {
    /// Cells of `3B` at the resolution of `Ω`.
    pub domain: GridDomain,
    pub exponent: ExponentField,
    /// For every cell of `3B`, the cell of `Ω` it coincides with.
    pub source: Vec<Option<u32>>,
    /// Whitney squares of the complement used by the exterior stage.
    pub exterior_cubes: usize,
    /// Exterior cells outside every expanded square, filled with the nearest
    /// boundary value.
    pub fallback_cells: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

/// Tent of the 9/8-expanded square: `Π max(0, 1 - |x_i - c_i| / (9s/16))`.
fn tent(x: [f64; 2], c: [f64; 2], s: f64) -> f64 {
    let half = 9.0 * s / 16.0;
    (1.0 - (x[0] - c[0]).abs() / half).max(0.0) * (1.0 - (x[1] - c[1]).abs() / half).max(0.0)
}

/// Extend `p` from `Ω` to `3B`, `B = B(center, radius) ⊇ Ω̄`.
///
/// Boundary values are those of the boundary cells; the complement is filled
/// by a partition of unity over its Whitney squares, each square carrying the
/// value at its nearest boundary cell; the result is `(p̃ - p_-) ψ + p_-` with
/// `ψ = 1` on `2B` and `ψ = 0` off `3B`.
pub fn extend_exponent(p: &ExponentField, domain: &GridDomain, center: [f64; 2], radius: f64) -> Result<Extension> {
    if p.len() != domain.len() {
        return Err(Error::Length { expected: domain.len(), got: p.len() });
    }
    let h = domain.h();
    let o = domain.origin();
    for &[i, j] in domain.cells() {
        for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let x = (o[0] + i as i64 + a) as f64 * h - center[0];
            let y = (o[1] + j as i64 + b) as f64 * h - center[1];
            if x * x + y * y > radius * radius {
                return Err(Error::NotInBall);
            }
        }
    }
    let ext = GridDomain::disc(center, 3.0 * radius, domain.level())?;
    let (w, hh) = (ext.width(), ext.height());
    let eo = ext.origin();
    let shift = [o[0] - eo[0], o[1] - eo[1]];

    // cells of Ω in the grid of 3B
    let mut omega = vec![false; w * hh];
    let mut grid_source = vec![None; w * hh];
    for (k, &[i, j]) in domain.cells().iter().enumerate() {
        let (gi, gj) = ((i as i64 + shift[0]) as usize, (j as i64 + shift[1]) as usize);
        omega[gj * w + gi] = true;
        grid_source[gj * w + gi] = Some(k as u32);
    }
    let boundary: Vec<(usize, [i64; 2])> = (0..domain.len())
        .filter(|&k| domain.is_boundary_cell(k))
        .map(|k| {
            let [i, j] = domain.cell(k);
            (k, [i as i64 + shift[0], j as i64 + shift[1]])
        })
        .collect();
    // nearest boundary cell to a point in grid cell units (ties: smaller id)
    let nearest = |x: [f64; 2]| -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for &(k, [i, j]) in &boundary {
            let d = (i as f64 + 0.5 - x[0]).powi(2) + (j as f64 + 0.5 - x[1]).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    };

    // distance to Ω̄ at the lattice vertices of the 3B grid
    let (vw, vh) = (w + 1, hh + 1);
    let mut seed = vec![false; vw * vh];
    for (gj, row) in omega.chunks(w).enumerate() {
        for (gi, &inside) in row.iter().enumerate() {
            if inside {
                for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    seed[(gj + b) * vw + gi + a] = true;
                }
            }
        }
    }
    let vdist = squared_edt(&seed, vw, vh);
    let region: Vec<bool> = omega.iter().map(|&v| !v).collect();
    let (cubes, _) = whitney_core(domain.level(), w, hh, &region, |vx, vy| vdist[vy * vw + vx] as u64);

    let mut num = vec![0.0f64; w * hh];
    let mut den = vec![0.0f64; w * hh];
    let values: Vec<(f64, [f64; 2], f64)> = cubes
        .par_iter()
        .map(|q| {
            let [x0, y0, x1, _] = q.cell_rect(domain.level());
            let s = (x1 - x0) as f64;
            let c = [x0 as f64 + 0.5 * s, y0 as f64 + 0.5 * s];
            (p.get(nearest(c)), c, s)
        })
        .collect();
    for &(v, c, s) in &values {
        let reach = 9.0 * s / 16.0;
        let lo = |t: f64| ((t - reach).floor().max(0.0)) as usize;
        for gj in lo(c[1])..((c[1] + reach).ceil() as usize).min(hh) {
            for gi in lo(c[0])..((c[0] + reach).ceil() as usize).min(w) {
                if omega[gj * w + gi] {
                    continue;
                }
                let t = tent([gi as f64 + 0.5, gj as f64 + 0.5], c, s);
                if t > 0.0 {
                    num[gj * w + gi] += t * v;
                    den[gj * w + gi] += t;
                }
            }
        }
    }

    let (lo, hi) = (p.p_minus(), p.p_plus());
    let mut fallback = 0usize;
    let mut out = Vec::with_capacity(ext.len());
    let mut source = Vec::with_capacity(ext.len());
    for k in 0..ext.len() {
        let [i, j] = ext.cell(k);
        let g = j as usize * w + i as usize;
        source.push(grid_source[g]);
        if let Some(s) = grid_source[g] {
            out.push(p.get(s as usize));
            continue;
        }
        let v = if den[g] > 0.0 {
            num[g] / den[g]
        } else {
            fallback += 1;
            p.get(nearest([i as f64 + 0.5, j as f64 + 0.5]))
        };
        let x = ext.center(k);
        let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
        let psi = (3.0 - r / radius).clamp(0.0, 1.0);
        // rounding guard: convex combinations stay in [p_-, p_+]
        out.push(((v - lo) * psi + lo).clamp(lo, hi));
    }
    Ok(Extension {
        domain: ext,
        exponent: ExponentField::new(out)?,
        source,
        exterior_cubes: cubes.len(),
        fallback_cells: fallback,
        center,
        radius,
    })
}
