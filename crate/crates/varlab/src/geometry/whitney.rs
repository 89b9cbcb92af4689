use super::domain::GridDomain;

/// Closed dyadic square `[a·2^-level, (a+1)·2^-level]` per axis, anchored in
/// the grid frame of the domain it was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub level: u32,
    pub anchor: [i64; 2],
}

impl DyadicCube {
    pub fn new(level: u32, anchor: [i64; 2]) -> Self {
        DyadicCube { level, anchor }
    }

    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn diam(&self) -> f64 {
        self.side() * std::f64::consts::SQRT_2
    }

    /// Side in cells of a level-`grid_level` grid.
    pub fn cells_per_side(&self, grid_level: u32) -> i64 {
        debug_assert!(grid_level >= self.level);
        1i64 << (grid_level - self.level)
    }

    /// `[x0, y0, x1, y1)` in grid cells.
    pub fn cell_rect(&self, grid_level: u32) -> [i64; 4] {
        let m = self.cells_per_side(grid_level);
        [self.anchor[0] * m, self.anchor[1] * m, (self.anchor[0] + 1) * m, (self.anchor[1] + 1) * m]
    }

    pub fn children(&self) -> [DyadicCube; 4] {
        let [a, b] = self.anchor;
        let l = self.level + 1;
        [
            DyadicCube::new(l, [2 * a, 2 * b]),
            DyadicCube::new(l, [2 * a + 1, 2 * b]),
            DyadicCube::new(l, [2 * a, 2 * b + 1]),
            DyadicCube::new(l, [2 * a + 1, 2 * b + 1]),
        ]
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube::new(self.level - 1, [self.anchor[0].div_euclid(2), self.anchor[1].div_euclid(2)]))
    }

    /// Rectangle at the finer of the two levels, for exact comparisons.
    fn rect_at(&self, level: u32) -> [i64; 4] {
        self.cell_rect(level)
    }

    pub fn contains(&self, other: &DyadicCube) -> bool {
        if other.level < self.level {
            return false;
        }
        let s = self.rect_at(other.level);
        let o = other.rect_at(other.level);
        s[0] <= o[0] && s[1] <= o[1] && o[2] <= s[2] && o[3] <= s[3]
    }

    /// Whether the interiors are disjoint.
    pub fn interiors_disjoint(&self, other: &DyadicCube) -> bool {
        let l = self.level.max(other.level);
        let a = self.rect_at(l);
        let b = other.rect_at(l);
        a[2] <= b[0] || b[2] <= a[0] || a[3] <= b[1] || b[3] <= a[1]
    }

    /// Whether the two squares share an edge segment of positive length.
    pub fn face_adjacent(&self, other: &DyadicCube) -> bool {
        let l = self.level.max(other.level);
        let a = self.rect_at(l);
        let b = other.rect_at(l);
        let x_touch = a[2] == b[0] || b[2] == a[0];
        let y_touch = a[3] == b[1] || b[3] == a[1];
        let x_overlap = a[0].max(b[0]) < a[2].min(b[2]);
        let y_overlap = a[1].max(b[1]) < a[3].min(b[3]);
        (x_touch && y_overlap) || (y_touch && x_overlap)
    }
}

/// Output of [`whitney_decompose`].
#[derive(Debug, Clone)]
pub struct Whitney {
    /// Grid level the cubes were cut from.
    pub level: u32,
    pub cubes: Vec<DyadicCube>,
    /// Domain cells left uncovered by the truncation at cube side `h`.
    pub uncovered: Vec<u32>,
}

impl Whitney {
    pub fn truncated(&self) -> bool {
        !self.uncovered.is_empty()
    }
}

/// Squared distance (cell units) from a cube to the zero set of `vdist2`,
/// i.e. the minimum over lattice points on the cube's perimeter.
pub(crate) fn perimeter_dist2(rect: [i64; 4], vdist2: &impl Fn(usize, usize) -> u64) -> u64 {
    let [x0, y0, x1, y1] = rect.map(|v| v as usize);
    let mut best = u64::MAX;
    for x in x0..=x1 {
        best = best.min(vdist2(x, y0)).min(vdist2(x, y1));
    }
    for y in y0..=y1 {
        best = best.min(vdist2(x0, y)).min(vdist2(x1, y));
    }
    best
}

/// `diam(Q) <= dist(Q, target) <= 4 diam(Q)` in exact integers, where the
/// cube has side `m` cells and `dist2` is in cell units.
pub fn whitney_bounds_hold(m: i64, dist2: u64) -> bool {
    let m2 = (m * m) as u64;
    2 * m2 <= dist2 && dist2 <= 32 * m2
}

/// Maximal dyadic squares inside `region` satisfying the Whitney bounds with
/// respect to the set where `vdist2` vanishes.
pub(crate) fn whitney_core(
    level: u32,
    width: usize,
    height: usize,
    region: &[bool],
    vdist2: impl Fn(usize, usize) -> u64,
) -> (Vec<DyadicCube>, Vec<bool>) {
    let w1 = width + 1;
    let mut prefix = vec![0u32; w1 * (height + 1)];
    for j in 0..height {
        for i in 0..width {
            prefix[(j + 1) * w1 + i + 1] =
                prefix[j * w1 + i + 1] + prefix[(j + 1) * w1 + i] - prefix[j * w1 + i] + region[j * width + i] as u32;
        }
    }
    let count = |r: [i64; 4]| -> u32 {
        let x0 = r[0].clamp(0, width as i64) as usize;
        let y0 = r[1].clamp(0, height as i64) as usize;
        let x1 = r[2].clamp(0, width as i64) as usize;
        let y1 = r[3].clamp(0, height as i64) as usize;
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        prefix[y1 * w1 + x1] + prefix[y0 * w1 + x0] - prefix[y0 * w1 + x1] - prefix[y1 * w1 + x0]
    };

    let top = 1i64 << level;
    let mut stack = Vec::new();
    for b in (0..(height as i64 + top - 1) / top).rev() {
        for a in (0..(width as i64 + top - 1) / top).rev() {
            stack.push(DyadicCube::new(0, [a, b]));
        }
    }
    let mut cubes = Vec::new();
    let mut covered = vec![false; width * height];
    while let Some(q) = stack.pop() {
        let r = q.cell_rect(level);
        if count(r) == 0 {
            continue;
        }
        let m = r[2] - r[0];
        let in_grid = r[2] <= width as i64 && r[3] <= height as i64;
        if in_grid && count(r) as i64 == m * m && whitney_bounds_hold(m, perimeter_dist2(r, &vdist2)) {
            for y in r[1]..r[3] {
                for x in r[0]..r[2] {
                    covered[y as usize * width + x as usize] = true;
                }
            }
            cubes.push(q);
        } else if q.level < level {
            for c in q.children().into_iter().rev() {
                stack.push(c);
            }
        }
    }
    cubes.sort();
    (cubes, covered)
}

/// Whitney decomposition of the domain, truncated at cubes of one cell.
pub fn whitney_decompose(domain: &GridDomain) -> Whitney {
    let mask = domain.mask();
    let (cubes, covered) =
        whitney_core(domain.level(), domain.width(), domain.height(), &mask, |x, y| domain.vertex_dist2(x, y));
    let uncovered = domain
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, &[i, j])| !covered[j as usize * domain.width() + i as usize])
        .map(|(k, _)| k as u32)
        .collect();
    Whitney { level: domain.level(), cubes, uncovered }
}

/// Exact squared distance (cell units) from a cube to the domain boundary.
pub fn cube_boundary_dist2(domain: &GridDomain, cube: &DyadicCube) -> u64 {
    perimeter_dist2(cube.cell_rect(domain.level()), &|x, y| domain.vertex_dist2(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    #[test]
    fn adjacency_is_exact() {
        let a = DyadicCube::new(2, [1, 1]);
        assert!(a.face_adjacent(&DyadicCube::new(2, [2, 1])));
        assert!(!a.face_adjacent(&DyadicCube::new(2, [2, 2])));
        assert!(a.face_adjacent(&DyadicCube::new(3, [4, 3])));
        assert!(!a.face_adjacent(&DyadicCube::new(3, [4, 4])));
        assert!(a.contains(&DyadicCube::new(4, [4, 7])));
        assert!(a.interiors_disjoint(&DyadicCube::new(3, [4, 3])));
    }

    #[test]
    fn square_starts_at_eighths() {
        let d = GridDomain::build(&DomainSpec::UnitSquare, 5).unwrap();
        let w = whitney_decompose(&d);
        let min_level = w.cubes.iter().map(|c| c.level).min().unwrap();
        assert_eq!(min_level, 3);
        assert_eq!(w.cubes.iter().filter(|c| c.level == 3).count(), 16);
        // the four central quarter squares fail the lower bound
        let central = DyadicCube::new(2, [1, 1]);
        let m = central.cells_per_side(5);
        assert!(!whitney_bounds_hold(m, cube_boundary_dist2(&d, &central)));
    }

    #[test]
    fn single_cell_domain_is_fully_truncated() {
        let d = GridDomain::from_mask(3, 1, 1, [0, 0], vec![true]).unwrap();
        let w = whitney_decompose(&d);
        assert!(w.cubes.is_empty());
        assert_eq!(w.uncovered, vec![0]);
    }
}
