//! Grid domains, Whitney squares, tree coverings and John constants.

mod domain;
mod edt;
mod john;
mod tree;
mod whitney;

pub use domain::{DomainSpec, GridDomain};
pub use john::{estimate_john_constants, JohnReport, EXPANSION};
pub use tree::{build_tree_covering, TreeCovering, TreeNode};
pub use whitney::{cube_boundary_dist2, whitney_bounds_hold, whitney_decompose, DyadicCube, Whitney};

pub(crate) use edt::squared_edt;
pub(crate) use whitney::whitney_core;

use crate::error::Result;

/// Domain, Whitney squares and tree covering in one go.
pub fn build_covering(spec: &DomainSpec, level: u32) -> Result<(GridDomain, Whitney, TreeCovering)> {
    let domain = GridDomain::build(spec, level)?;
    let whitney = whitney_decompose(&domain);
    let tree = build_tree_covering(&whitney.cubes, &domain)?;
    Ok((domain, whitney, tree))
}
