//! Exact squared Euclidean distance transform (Felzenszwalb–Huttenlocher).
//!
//! Inputs and outputs are squared distances in lattice units. All lattice
//! values stay far below 2^53, so the float arithmetic here is exact.

pub(crate) const FAR: f64 = f64::INFINITY;

/// One-dimensional lower envelope pass. Entries of `f` equal to `FAR` are
/// not seeds; if no entry is finite the output is all `FAR`.
fn pass_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.push(f64::NEG_INFINITY);
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            let k = v.len() - 1;
            let r = v[k];
            let s = (fq - (f[r] + (r * r) as f64)) / (2.0 * (q as f64 - r as f64));
            if s <= z[k] {
                v.pop();
                z.pop();
                if v.is_empty() {
                    break;
                }
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            v.push(q);
            z.push(f64::NEG_INFINITY);
        }
    }
    if v.is_empty() {
        out.fill(FAR);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let r = v[k];
        let dq = q as f64 - r as f64;
        *o = dq * dq + f[r];
    }
}

/// Squared distance from every lattice point of a `w`×`h` row-major lattice
/// to the nearest seed (`seed[i] == true`).
pub(crate) fn squared_edt(seed: &[bool], w: usize, h: usize) -> Vec<f64> {
    debug_assert_eq!(seed.len(), w * h);
    let mut grid: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let mut v = Vec::new();
    let mut z = Vec::new();
    let mut col = vec![0.0; h];
    let mut out = vec![0.0; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        pass_1d(&col, &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    let mut row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&grid[y * w..(y + 1) * w]);
        pass_1d(&row, &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}
