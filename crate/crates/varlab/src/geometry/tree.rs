use std::collections::VecDeque;

use rayon::prelude::*;

use super::domain::{GridDomain, NONE};
use super::whitney::DyadicCube;
use crate::error::{Error, Result};

/// One node of a tree covering.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub cube: DyadicCube,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Width in cells of the collar added to `Q_t` to form `U_t`.
    pub collar: i64,
    /// Sorted cell ids of `U_t`.
    pub u_cells: Vec<u32>,
    /// Sorted cell ids of `B_t` (empty for the root).
    pub b_cells: Vec<u32>,
    /// Number of distinct cells in the shadow `W_t`.
    pub shadow_cells: usize,
}

/// Rooted tree of expanded Whitney squares with overlap regions and shadows.
#[derive(Debug, Clone)]
pub struct TreeCovering {
    level: u32,
    pub nodes: Vec<TreeNode>,
    /// Maximal number of `U_t` containing a domain cell.
    pub c1: usize,
    /// Maximal `|U_t| / |B_t|` over non-root nodes.
    pub c2: f64,
    /// Domain cells contained in no `U_t`.
    pub uncovered: Vec<u32>,
    tin: Vec<usize>,
    tout: Vec<usize>,
    cover_start: Vec<u32>,
    cover_nodes: Vec<u32>,
    center_dist: Vec<f64>,
}

fn collar_width(m: i64) -> i64 {
    // layers of cells whose centers lie within m/32 of the square
    ((m + 15) / 32).max(1)
}

impl TreeCovering {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    /// `[x0, y0, x1, y1)` of `Q_t` in grid cells.
    pub fn q_rect(&self, t: usize) -> [i64; 4] {
        self.nodes[t].cube.cell_rect(self.level)
    }

    /// Whether grid cell `(x, y)` lies in the cross-shaped hull of `U_t`;
    /// the actual cell set is `nodes[t].u_cells`.
    pub fn u_contains(&self, t: usize, x: i64, y: i64) -> bool {
        let [x0, y0, x1, y1] = self.q_rect(t);
        let w = self.nodes[t].collar;
        (x0 - w <= x && x < x1 + w && y0 <= y && y < y1) || (x0 <= x && x < x1 && y0 - w <= y && y < y1 + w)
    }

    pub fn q_contains(&self, t: usize, x: i64, y: i64) -> bool {
        let [x0, y0, x1, y1] = self.q_rect(t);
        x0 <= x && x < x1 && y0 <= y && y < y1
    }

    /// Nodes whose `U_t` contains the cell, in increasing order.
    pub fn covering(&self, cell: usize) -> &[u32] {
        &self.cover_nodes[self.cover_start[cell] as usize..self.cover_start[cell + 1] as usize]
    }

    pub fn is_covered(&self, cell: usize) -> bool {
        self.cover_start[cell] < self.cover_start[cell + 1]
    }

    /// `s ⪰ t`: the path from `s` to the root passes through `t`.
    pub fn descends_from(&self, s: usize, t: usize) -> bool {
        self.tin[t] <= self.tin[s] && self.tin[s] < self.tout[t]
    }

    /// Node ids of the shadow `W_t`, i.e. all `s ⪰ t`.
    pub fn shadow_nodes(&self, t: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![t];
        while let Some(s) = stack.pop() {
            out.push(s);
            stack.extend(self.nodes[s].children.iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Distance from the center of `Q_t` to the boundary.
    pub fn center_dist(&self, t: usize) -> f64 {
        self.center_dist[t]
    }

    /// Center of `Q_t` in the grid frame scaled to length units.
    pub fn cube_center(&self, t: usize, domain: &GridDomain) -> [f64; 2] {
        let c = &self.nodes[t].cube;
        let s = c.side();
        let h = domain.h();
        let o = domain.origin();
        [o[0] as f64 * h + (c.anchor[0] as f64 + 0.5) * s, o[1] as f64 * h + (c.anchor[1] as f64 + 0.5) * s]
    }

    /// Measure of `U_t`.
    pub fn u_measure(&self, t: usize, domain: &GridDomain) -> f64 {
        self.nodes[t].u_cells.len() as f64 * domain.cell_area()
    }

    /// All covered cells in increasing order.
    pub fn covered_cells(&self) -> Vec<u32> {
        (0..self.cover_start.len() - 1).filter(|&c| self.is_covered(c)).map(|c| c as u32).collect()
    }

    /// For every node `t`, the sum of `values` over the distinct cells of `W_t`.
    pub fn shadow_sums(&self, values: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        let cells = values.len();
        let chunks = 64.min(cells.max(1));
        let size = cells.div_ceil(chunks);
        let partial: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|k| {
                let mut acc = vec![0.0; n];
                let mut stamp = vec![usize::MAX; n];
                for c in k * size..((k + 1) * size).min(cells) {
                    let v = values[c];
                    if v == 0.0 {
                        continue;
                    }
                    for &s in self.covering(c) {
                        let mut t = s as usize;
                        loop {
                            if stamp[t] == c {
                                break;
                            }
                            stamp[t] = c;
                            acc[t] += v;
                            match self.nodes[t].parent {
                                Some(p) => t = p,
                                None => break,
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; n];
        for part in &partial {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }
}

/// Organize Whitney squares into a tree covering rooted at the deepest square.
pub fn build_tree_covering(cubes: &[DyadicCube], domain: &GridDomain) -> Result<TreeCovering> {
    if cubes.is_empty() {
        return Err(Error::NoCubes);
    }
    let level = domain.level();
    let (gw, gh) = (domain.width() as i64, domain.height() as i64);
    let mut owner = vec![NONE; domain.width() * domain.height()];
    for (k, c) in cubes.iter().enumerate() {
        let [x0, y0, x1, y1] = c.cell_rect(level);
        for y in y0..y1 {
            for x in x0..x1 {
                owner[(y * gw + x) as usize] = k as u32;
            }
        }
    }
    let owner_at = |x: i64, y: i64| -> u32 {
        if x < 0 || y < 0 || x >= gw || y >= gh {
            NONE
        } else {
            owner[(y * gw + x) as usize]
        }
    };

    let adjacency: Vec<Vec<usize>> = cubes
        .iter()
        .map(|c| {
            let [x0, y0, x1, y1] = c.cell_rect(level);
            let mut nb = Vec::new();
            for x in x0..x1 {
                nb.push(owner_at(x, y0 - 1));
                nb.push(owner_at(x, y1));
            }
            for y in y0..y1 {
                nb.push(owner_at(x0 - 1, y));
                nb.push(owner_at(x1, y));
            }
            let mut nb: Vec<usize> = nb.into_iter().filter(|&o| o != NONE).map(|o| o as usize).collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect();

    // deepest square, ties broken by the lexicographically smallest corner
    let center_d2_half = |c: &DyadicCube| -> u64 {
        let [x0, y0, x1, _] = c.cell_rect(level);
        let m = x1 - x0;
        if m == 1 {
            domain.dist2_half_units(domain.id_at(x0, y0).expect("cube cell inside"))
        } else {
            4 * domain.vertex_dist2((x0 + m / 2) as usize, (y0 + m / 2) as usize)
        }
    };
    let d2: Vec<u64> = cubes.iter().map(center_d2_half).collect();
    let root = (0..cubes.len())
        .max_by(|&a, &b| {
            let ca = cubes[a].cell_rect(level);
            let cb = cubes[b].cell_rect(level);
            d2[a].cmp(&d2[b]).then_with(|| (cb[0], cb[1], cubes[b].level).cmp(&(ca[0], ca[1], cubes[a].level)))
        })
        .unwrap();

    let mut bfs_id = vec![usize::MAX; cubes.len()];
    let mut order = Vec::with_capacity(cubes.len());
    let mut parent_cube = vec![usize::MAX; cubes.len()];
    let mut bfs_depth = vec![0usize; cubes.len()];
    let mut queue = VecDeque::from([root]);
    bfs_id[root] = 0;
    order.push(root);
    while let Some(c) = queue.pop_front() {
        for &nb in &adjacency[c] {
            if bfs_id[nb] == usize::MAX {
                bfs_id[nb] = order.len();
                order.push(nb);
                parent_cube[nb] = c;
                bfs_depth[nb] = bfs_depth[c] + 1;
                queue.push_back(nb);
            }
        }
    }
    if order.len() < cubes.len() {
        let orphan = (0..cubes.len()).find(|&c| bfs_id[c] == usize::MAX).unwrap();
        let mut seen = vec![false; cubes.len()];
        let mut q = VecDeque::from([orphan]);
        seen[orphan] = true;
        let mut size = 0;
        while let Some(c) = q.pop_front() {
            size += 1;
            for &nb in &adjacency[c] {
                if !seen[nb] {
                    seen[nb] = true;
                    q.push_back(nb);
                }
            }
        }
        let c = cubes[orphan];
        return Err(Error::TreeDisconnected { size, level: c.level, ax: c.anchor[0], ay: c.anchor[1] });
    }

    // among the neighbours one step closer to the root, the largest square
    // (then the earliest discovered) becomes the parent
    for &c in order.iter().skip(1) {
        let best = adjacency[c]
            .iter()
            .copied()
            .filter(|&nb| bfs_depth[nb] + 1 == bfs_depth[c])
            .min_by_key(|&nb| (cubes[nb].level, bfs_id[nb]))
            .unwrap();
        parent_cube[c] = best;
    }

    let mut nodes: Vec<TreeNode> = order
        .iter()
        .map(|&c| {
            let m = cubes[c].cells_per_side(level);
            TreeNode {
                cube: cubes[c],
                parent: (parent_cube[c] != usize::MAX).then(|| bfs_id[parent_cube[c]]),
                children: Vec::new(),
                depth: 0,
                collar: collar_width(m),
                u_cells: Vec::new(),
                b_cells: Vec::new(),
                shadow_cells: 0,
            }
        })
        .collect();
    for t in 1..nodes.len() {
        let p = nodes[t].parent.unwrap();
        nodes[t].depth = nodes[p].depth + 1;
        nodes[p].children.push(t);
    }
    let center_dist: Vec<f64> = order.iter().map(|&c| (d2[c] as f64).sqrt() * 0.5 * domain.h()).collect();

    let mut tree = TreeCovering {
        level,
        nodes,
        c1: 0,
        c2: 0.0,
        uncovered: Vec::new(),
        tin: Vec::new(),
        tout: Vec::new(),
        cover_start: Vec::new(),
        cover_nodes: Vec::new(),
        center_dist,
    };

    // The collar of U_t only enters truncated cells, strictly larger squares
    // and the squares of its children; this keeps the overlap count at most 4
    // when the collar is a whole cell wide.
    let mut node_of_cube = vec![0usize; cubes.len()];
    for (t, &c) in order.iter().enumerate() {
        node_of_cube[c] = t;
    }
    for t in 0..tree.nodes.len() {
        let [x0, y0, x1, y1] = tree.q_rect(t);
        let m = x1 - x0;
        let w = tree.nodes[t].collar;
        let mut cells = Vec::new();
        for y in y0 - w..y1 + w {
            for x in x0 - w..x1 + w {
                if !tree.u_contains(t, x, y) {
                    continue;
                }
                let Some(id) = domain.id_at(x, y) else { continue };
                let o = owner_at(x, y);
                let enters = o == NONE || {
                    let s = node_of_cube[o as usize];
                    s == t || tree.nodes[s].parent == Some(t) || tree.nodes[s].cube.cells_per_side(level) > m
                };
                if enters {
                    cells.push(id as u32);
                }
            }
        }
        cells.sort_unstable();
        tree.nodes[t].u_cells = cells;
    }

    let ncell = domain.len();
    let mut counts = vec![0u32; ncell + 1];
    for node in &tree.nodes {
        for &c in &node.u_cells {
            counts[c as usize + 1] += 1;
        }
    }
    for k in 0..ncell {
        counts[k + 1] += counts[k];
    }
    let mut fill = counts.clone();
    let mut cover_nodes = vec![0u32; counts[ncell] as usize];
    for (t, node) in tree.nodes.iter().enumerate() {
        for &c in &node.u_cells {
            cover_nodes[fill[c as usize] as usize] = t as u32;
            fill[c as usize] += 1;
        }
    }
    tree.cover_start = counts;
    tree.cover_nodes = cover_nodes;
    tree.c1 = (0..ncell).map(|c| tree.covering(c).len()).max().unwrap_or(0);
    tree.uncovered = (0..ncell).filter(|&c| !tree.is_covered(c)).map(|c| c as u32).collect();

    let mut assigned = vec![false; ncell];
    for t in 1..tree.nodes.len() {
        let p = tree.nodes[t].parent.unwrap();
        let mut b = Vec::new();
        for &c in &tree.nodes[t].u_cells {
            if assigned[c as usize] {
                continue;
            }
            let [x, y] = domain.cell(c as usize).map(|v| v as i64);
            if tree.covering(c as usize).binary_search(&(p as u32)).is_ok()
                && (tree.q_contains(t, x, y) || tree.q_contains(p, x, y))
            {
                assigned[c as usize] = true;
                b.push(c);
            }
        }
        if b.is_empty() {
            return Err(Error::Invalid(format!("empty overlap region for node {t}")));
        }
        let ratio = tree.nodes[t].u_cells.len() as f64 / b.len() as f64;
        tree.c2 = tree.c2.max(ratio);
        tree.nodes[t].b_cells = b;
    }

    let n = tree.nodes.len();
    let mut tin = vec![0; n];
    let mut tout = vec![0; n];
    let mut clock = 0;
    let mut stack = vec![(0usize, false)];
    while let Some((t, done)) = stack.pop() {
        if done {
            tout[t] = clock;
            continue;
        }
        tin[t] = clock;
        clock += 1;
        stack.push((t, true));
        for &c in tree.nodes[t].children.iter().rev() {
            stack.push((c, false));
        }
    }
    tree.tin = tin;
    tree.tout = tout;

    let ones = vec![1.0; ncell];
    let sizes = tree.shadow_sums(&ones);
    for (node, s) in tree.nodes.iter_mut().zip(sizes) {
        node.shadow_cells = s as usize;
    }
    Ok(tree)
}
