use std::cell::Cell;

use crate::geometry::GridDomain;

/// Min/max quadtree over the bounding grid of a domain, answering range
/// queries over discs of cell centers.
#[derive(Debug, Clone)]
pub(crate) struct Pyramid {
    size: usize,
    /// `levels[0]` is the cell level; each entry stores `(min, max)`.
    levels: Vec<Vec<(f64, f64)>>,
}

const EMPTY: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);

/// A disc query result: extrema over the cells of the domain inside the disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Extrema {
    pub min: f64,
    pub max: f64,
}

impl Pyramid {
    pub fn new(domain: &GridDomain, values: &[f64]) -> Self {
        let size = domain.width().max(domain.height()).next_power_of_two();
        let mut base = vec![EMPTY; size * size];
        for (k, &[i, j]) in domain.cells().iter().enumerate() {
            base[j as usize * size + i as usize] = (values[k], values[k]);
        }
        let mut levels = vec![base];
        let mut s = size;
        while s > 1 {
            let prev = levels.last().unwrap();
            let half = s / 2;
            let mut next = vec![EMPTY; half * half];
            for y in 0..half {
                for x in 0..half {
                    let mut e = EMPTY;
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        let v = prev[(2 * y + dy) * s + 2 * x + dx];
                        e.0 = e.0.min(v.0);
                        e.1 = e.1.max(v.1);
                    }
                    next[y * half + x] = e;
                }
            }
            levels.push(next);
            s = half;
        }
        Pyramid { size, levels }
    }

    /// Squared cell-unit distance range from `c` to the cell centers of a block.
    fn block_range(c: [i64; 2], x0: i64, y0: i64, side: i64) -> (i64, i64) {
        let axis = |c: i64, lo: i64| -> (i64, i64) {
            let hi = lo + side - 1;
            let near = if c < lo { lo - c } else if c > hi { c - hi } else { 0 };
            let far = (c - lo).abs().max((hi - c).abs());
            (near, far)
        };
        let (nx, fx) = axis(c[0], x0);
        let (ny, fy) = axis(c[1], y0);
        (nx * nx + ny * ny, fx * fx + fy * fy)
    }

    /// Walk the blocks meeting the disc `|y - c|² ≤ r2` (cell units), calling
    /// `visit` on every block fully inside. `prune` may skip a block given its
    /// extrema; `visit` returns `true` to stop the walk.
    fn walk(
        &self,
        c: [i64; 2],
        r2: f64,
        mut prune: impl FnMut((f64, f64)) -> bool,
        mut visit: impl FnMut((f64, f64)) -> bool,
    ) {
        let top = self.levels.len() - 1;
        let mut stack = vec![(top, 0i64, 0i64)];
        while let Some((lv, bx, by)) = stack.pop() {
            let side = 1i64 << lv;
            let width = (self.size >> lv) as i64;
            let e = self.levels[lv][(by * width + bx) as usize];
            if e.0 > e.1 || prune(e) {
                continue;
            }
            let (near, far) = Self::block_range(c, bx * side, by * side, side);
            if near as f64 > r2 {
                continue;
            }
            if far as f64 <= r2 {
                if visit(e) {
                    return;
                }
                continue;
            }
            for (dx, dy) in [(1, 1), (0, 1), (1, 0), (0, 0)] {
                stack.push((lv - 1, 2 * bx + dx, 2 * by + dy));
            }
        }
    }

    /// Extrema over the domain cells whose centers satisfy `|y - c|² ≤ r2`.
    pub fn disc_extrema(&self, c: [i64; 2], r2: f64) -> Extrema {
        let cur = Cell::new(EMPTY);
        self.walk(
            c,
            r2,
            |e| e.0 >= cur.get().0 && e.1 <= cur.get().1,
            |e| {
                let v = cur.get();
                cur.set((v.0.min(e.0), v.1.max(e.1)));
                false
            },
        );
        let (min, max) = cur.get();
        Extrema { min, max }
    }

    /// Whether some cell in the disc has `|p(y) - v| ≥ eps`.
    pub fn disc_deviates(&self, c: [i64; 2], r2: f64, v: f64, eps: f64) -> bool {
        let far = |e: (f64, f64)| e.1 - v >= eps || v - e.0 >= eps;
        let mut found = false;
        self.walk(c, r2, |e| !far(e), |_| {
            found = true;
            true
        });
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use proptest::prelude::*;

    fn brute(domain: &GridDomain, v: &[f64], c: [i64; 2], r2: f64) -> Extrema {
        let mut e = Extrema { min: f64::INFINITY, max: f64::NEG_INFINITY };
        for (k, &[i, j]) in domain.cells().iter().enumerate() {
            let (dx, dy) = (i as i64 - c[0], j as i64 - c[1]);
            if ((dx * dx + dy * dy) as f64) <= r2 {
                e.min = e.min.min(v[k]);
                e.max = e.max.max(v[k]);
            }
        }
        e
    }

    proptest! {
        #[test]
        fn disc_queries_match_brute_force(seed in 0u64..1000, cx in 0i64..16, cy in 0i64..16, r2 in 0.0f64..300.0) {
            let d = GridDomain::build(&DomainSpec::LShape, 4).unwrap();
            let v: Vec<f64> = (0..d.len()).map(|k| ((k as u64 * 2654435761 + seed) % 97) as f64).collect();
            let pyr = Pyramid::new(&d, &v);
            let got = pyr.disc_extrema([cx, cy], r2);
            prop_assert_eq!(got, brute(&d, &v, [cx, cy], r2));
            let mid = 0.5 * (got.min + got.max);
            let eps = 0.5 * (got.max - got.min);
            if got.min <= got.max {
                prop_assert!(pyr.disc_deviates([cx, cy], r2, mid, eps));
                prop_assert!(!pyr.disc_deviates([cx, cy], r2, mid, eps + 0.25));
            }
        }
    }
}
