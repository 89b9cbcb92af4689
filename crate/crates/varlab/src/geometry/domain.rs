use std::collections::VecDeque;

use super::edt::squared_edt;
use crate::error::{Error, Result};

pub(crate) const NONE: u32 = u32::MAX;

/// Named domain shapes understood by [`GridDomain::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    UnitSquare,
    /// Unit square minus its top-right quadrant.
    LShape,
    /// `[0, width] × [0, height]` for integer sides.
    Rectangle { width: usize, height: usize },
    /// Arbitrary cell mask, row 0 at the bottom.
    Mask { width: usize, height: usize, inside: Vec<bool> },
}

/// A discrete domain: a connected set of grid cells of side `h = 2^-level`
/// together with exact distances to the complement.
///
/// Cell `(i, j)` of the bounding grid occupies
/// `[(o_x + i) h, (o_x + i + 1) h] × [(o_y + j) h, (o_y + j + 1) h]` where
/// `(o_x, o_y)` is the grid origin in cell units.
#[derive(Debug, Clone)]
pub struct GridDomain {
    level: u32,
    width: usize,
    height: usize,
    origin: [i64; 2],
    index: Vec<u32>,
    cells: Vec<[u32; 2]>,
    /// Squared center distance in half-cell units: `d = sqrt(D) / 2 · h`.
    center_d2: Vec<u64>,
    /// Squared vertex distance in cell units, `(width + 1) × (height + 1)`.
    vertex_d2: Vec<u64>,
    boundary: Vec<bool>,
}

impl GridDomain {
    pub fn build(spec: &DomainSpec, level: u32) -> Result<Self> {
        let n = 1usize << level;
        match spec {
            DomainSpec::UnitSquare => Self::from_mask(level, n, n, [0, 0], vec![true; n * n]),
            DomainSpec::Rectangle { width, height } => {
                if *width == 0 || *height == 0 {
                    return Err(Error::EmptyDomain);
                }
                Self::from_mask(level, width * n, height * n, [0, 0], vec![true; width * height * n * n])
            }
            DomainSpec::LShape => {
                if level == 0 {
                    return Err(Error::Invalid("L-shape needs level >= 1".into()));
                }
                let half = n / 2;
                let inside = (0..n * n).map(|k| !(k % n >= half && k / n >= half)).collect();
                Self::from_mask(level, n, n, [0, 0], inside)
            }
            DomainSpec::Mask { width, height, inside } => {
                if inside.len() != width * height {
                    return Err(Error::Length { expected: width * height, got: inside.len() });
                }
                Self::from_mask(level, *width, *height, [0, 0], inside.clone())
            }
        }
    }

    /// Cells whose centers lie in the closed disc `|x - center| <= radius`.
    pub fn disc(center: [f64; 2], radius: f64, level: u32) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::EmptyDomain);
        }
        let h = 0.5f64.powi(level as i32);
        let ox = ((center[0] - radius) / h).floor() as i64 - 1;
        let oy = ((center[1] - radius) / h).floor() as i64 - 1;
        let w = ((center[0] + radius) / h).ceil() as i64 + 1 - ox;
        let hh = ((center[1] + radius) / h).ceil() as i64 + 1 - oy;
        let (w, hh) = (w as usize, hh as usize);
        let mut inside = vec![false; w * hh];
        for j in 0..hh {
            for i in 0..w {
                let x = (ox + i as i64) as f64 * h + 0.5 * h - center[0];
                let y = (oy + j as i64) as f64 * h + 0.5 * h - center[1];
                inside[j * w + i] = x * x + y * y <= radius * radius;
            }
        }
        Self::from_mask(level, w, hh, [ox, oy], inside)
    }

    pub fn from_mask(level: u32, width: usize, height: usize, origin: [i64; 2], inside: Vec<bool>) -> Result<Self> {
        if inside.len() != width * height {
            return Err(Error::Length { expected: width * height, got: inside.len() });
        }
        let mut index = vec![NONE; width * height];
        let mut cells = Vec::new();
        for j in 0..height {
            for i in 0..width {
                if inside[j * width + i] {
                    index[j * width + i] = cells.len() as u32;
                    cells.push([i as u32, j as u32]);
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let components = count_components(&index, &cells, width, height);
        if components > 1 {
            return Err(Error::DomainNotConnected { components });
        }

        let (lw, lh) = (2 * width + 1, 2 * height + 1);
        let is_in = |i: i64, j: i64| -> bool {
            i >= 0 && j >= 0 && (i as usize) < width && (j as usize) < height && inside[j as usize * width + i as usize]
        };
        let mut seed = vec![false; lw * lh];
        for y in 0..lh {
            let ys: &[i64] = &if y % 2 == 0 { [y as i64 / 2 - 1, y as i64 / 2] } else { [(y as i64 - 1) / 2; 2] };
            for x in 0..lw {
                let xs: &[i64] = &if x % 2 == 0 { [x as i64 / 2 - 1, x as i64 / 2] } else { [(x as i64 - 1) / 2; 2] };
                seed[y * lw + x] = ys.iter().any(|&cj| xs.iter().any(|&ci| !is_in(ci, cj)));
            }
        }
        let dist = squared_edt(&seed, lw, lh);
        drop(seed);
        let center_d2 = cells
            .iter()
            .map(|&[i, j]| dist[(2 * j as usize + 1) * lw + 2 * i as usize + 1] as u64)
            .collect();
        let mut vertex_d2 = Vec::with_capacity((width + 1) * (height + 1));
        for vy in 0..=height {
            for vx in 0..=width {
                let d = dist[2 * vy * lw + 2 * vx] as u64;
                debug_assert_eq!(d % 4, 0);
                vertex_d2.push(d / 4);
            }
        }
        let boundary = cells
            .iter()
            .map(|&[i, j]| {
                let (i, j) = (i as i64, j as i64);
                !(is_in(i - 1, j) && is_in(i + 1, j) && is_in(i, j - 1) && is_in(i, j + 1))
            })
            .collect();
        Ok(GridDomain { level, width, height, origin, index, cells, center_d2, vertex_d2, boundary })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cell side `2^-level`.
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Quadrature weight of one cell.
    pub fn cell_area(&self) -> f64 {
        self.h() * self.h()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> [i64; 2] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.cell_area()
    }

    /// Grid position of a cell.
    pub fn cell(&self, id: usize) -> [u32; 2] {
        self.cells[id]
    }

    pub fn cells(&self) -> &[[u32; 2]] {
        &self.cells
    }

    /// Cell id at grid position, if the position is inside the domain.
    pub fn id_at(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return None;
        }
        let k = self.index[j as usize * self.width + i as usize];
        (k != NONE).then_some(k as usize)
    }

    pub fn center(&self, id: usize) -> [f64; 2] {
        let [i, j] = self.cells[id];
        let h = self.h();
        [
            (self.origin[0] + i as i64) as f64 * h + 0.5 * h,
            (self.origin[1] + j as i64) as f64 * h + 0.5 * h,
        ]
    }

    /// Distance from the cell center to the boundary.
    pub fn dist(&self, id: usize) -> f64 {
        (self.center_d2[id] as f64).sqrt() * 0.5 * self.h()
    }

    /// Squared center distance in half-cell units (exact integer).
    pub fn dist2_half_units(&self, id: usize) -> u64 {
        self.center_d2[id]
    }

    /// Squared distance from grid vertex `(vx, vy)` to the complement, in cell units.
    pub fn vertex_dist2(&self, vx: usize, vy: usize) -> u64 {
        self.vertex_d2[vy * (self.width + 1) + vx]
    }

    pub fn distances(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.dist(k)).collect()
    }

    /// Cells with at least one edge on the boundary.
    pub fn is_boundary_cell(&self, id: usize) -> bool {
        self.boundary[id]
    }

    /// Grid position of the cell containing the point, if inside the domain.
    pub fn locate(&self, x: [f64; 2]) -> Option<usize> {
        let h = self.h();
        let i = (x[0] / h).floor() as i64 - self.origin[0];
        let j = (x[1] / h).floor() as i64 - self.origin[1];
        self.id_at(i, j)
    }

    /// Inside mask over the bounding grid, row 0 at the bottom.
    pub fn mask(&self) -> Vec<bool> {
        self.index.iter().map(|&k| k != NONE).collect()
    }

    /// Sorted ids of cells whose center satisfies `pred`.
    pub fn select(&self, pred: impl Fn([f64; 2]) -> bool) -> Vec<u32> {
        (0..self.len()).filter(|&k| pred(self.center(k))).map(|k| k as u32).collect()
    }
}

fn count_components(index: &[u32], cells: &[[u32; 2]], w: usize, h: usize) -> usize {
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..cells.len() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            let [i, j] = cells[c];
            let (i, j) = (i as i64, j as i64);
            for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                if a < 0 || b < 0 || a as usize >= w || b as usize >= h {
                    continue;
                }
                let k = index[b as usize * w + a as usize];
                if k != NONE && !seen[k as usize] {
                    seen[k as usize] = true;
                    queue.push_back(k as usize);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let d = GridDomain::build(&DomainSpec::UnitSquare, 4).unwrap();
        assert_eq!(d.len(), 256);
        let c = d.id_at(8, 8).unwrap();
        assert_eq!(d.dist(c), 0.5 - d.h() / 2.0);
        assert_eq!(d.dist(d.id_at(0, 5).unwrap()), d.h() / 2.0);
    }

    #[test]
    fn rectangle_and_l_shape_counts() {
        assert_eq!(GridDomain::build(&DomainSpec::Rectangle { width: 2, height: 1 }, 4).unwrap().len(), 512);
        assert_eq!(GridDomain::build(&DomainSpec::LShape, 6).unwrap().len(), 3072);
    }

    #[test]
    fn l_shape_reentrant_corner_distance() {
        let d = GridDomain::build(&DomainSpec::LShape, 3).unwrap();
        // cell (4,3) lies directly below the removed quadrant
        let c = d.id_at(4, 3).unwrap();
        assert_eq!(d.dist2_half_units(c), 1);
        // diagonal neighbour of the re-entrant corner
        let c = d.id_at(3, 3).unwrap();
        assert_eq!(d.dist2_half_units(c), 2);
        assert_eq!(d.vertex_dist2(4, 4), 0);
        assert_eq!(d.vertex_dist2(3, 3), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            GridDomain::from_mask(2, 3, 1, [0, 0], vec![true, false, true]),
            Err(Error::DomainNotConnected { components: 2 })
        ));
        assert!(matches!(GridDomain::from_mask(2, 2, 1, [0, 0], vec![false, false]), Err(Error::EmptyDomain)));
    }

    #[test]
    fn disc_is_symmetric() {
        let d = GridDomain::disc([0.0, 0.0], 0.5, 4).unwrap();
        let n = d.len();
        let mirrored = (0..n).filter(|&k| {
            let [x, y] = d.center(k);
            d.locate([-x, y]).is_some() && d.locate([x, -y]).is_some()
        });
        assert_eq!(mirrored.count(), n);
    }
}
