use super::domain::GridDomain;
use super::tree::TreeCovering;

/// Expansion factor of `U_t` relative to `Q_t`.
pub const EXPANSION: f64 = 17.0 / 16.0;

/// Measured John constants of a tree covering.
#[derive(Debug, Clone)]
pub struct JohnReport {
    /// Smallest `K` with `U_s ⊆ K·Q_t` for all `s ⪰ t`.
    pub k: f64,
    /// Smallest `τ ≥ 1` with `U_s ⊆ B(x_t, τ d(x_t))` for all `s ⪰ t`.
    pub tau_k: f64,
    pub k_per_node: Vec<f64>,
    pub tau_per_node: Vec<f64>,
    /// Nodes sorted by decreasing `K_t` (first entries only).
    pub worst_k: Vec<(usize, f64)>,
    pub worst_tau: Vec<(usize, f64)>,
}

impl JohnReport {
    /// Recheck containment of every shadow with the stored constants.
    pub fn verify(&self, tree: &TreeCovering, domain: &GridDomain) -> bool {
        let (k, tau) = john_per_node(tree, domain);
        k.iter().all(|&v| v <= self.k) && tau.iter().all(|&v| v <= self.tau_k)
    }
}

fn john_per_node(tree: &TreeCovering, domain: &GridDomain) -> (Vec<f64>, Vec<f64>) {
    let n = tree.len();
    let centers: Vec<[f64; 2]> = (0..n).map(|t| tree.cube_center(t, domain)).collect();
    let mut k = vec![1.0f64; n];
    let mut far = vec![0.0f64; n];
    for s in 0..n {
        let half = 0.5 * EXPANSION * tree.nodes[s].cube.side();
        let mut t = s;
        loop {
            let side = tree.nodes[t].cube.side();
            let dx = (centers[s][0] - centers[t][0]).abs() + half;
            let dy = (centers[s][1] - centers[t][1]).abs() + half;
            k[t] = k[t].max(2.0 * dx.max(dy) / side);
            far[t] = far[t].max(dx.hypot(dy));
            match tree.nodes[t].parent {
                Some(p) => t = p,
                None => break,
            }
        }
    }
    let tau = (0..n).map(|t| (far[t] / tree.center_dist(t)).max(1.0)).collect();
    (k, tau)
}

/// Measure `K` and `τ_K` over the whole tree.
pub fn estimate_john_constants(tree: &TreeCovering, domain: &GridDomain) -> JohnReport {
    let (k_per_node, tau_per_node) = john_per_node(tree, domain);
    let top = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        idx.into_iter().take(8).map(|i| (i, v[i])).collect::<Vec<_>>()
    };
    JohnReport {
        k: k_per_node.iter().copied().fold(1.0, f64::max),
        tau_k: tau_per_node.iter().copied().fold(1.0, f64::max),
        worst_k: top(&k_per_node),
        worst_tau: top(&tau_per_node),
        k_per_node,
        tau_per_node,
    }
}
