//! Averaging and Hardy-type operators over a tree covering, and seeded
//! empirical estimates of their norms.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counterexample::Family;
use crate::error::{Error, Result};
use crate::exponent::{ExponentField, DIM};
use crate::geometry::{GridDomain, TreeCovering};
use crate::io::{num, Csv};
use crate::norm::{average, indicator_norm, norm, GridFunction, Region};

/// `A_B f = χ_B · mean_B f`.
pub fn averaging(f: &[f64], cells: &[u32]) -> Result<GridFunction> {
    let m = average(f, Region::Cells(cells))?;
    let mut out = vec![0.0; f.len()];
    for &c in cells {
        out[c as usize] = m;
    }
    Ok(GridFunction::new(out))
}

/// `A_Γ f = Σ_{t ≠ root} χ_{B_t} |W_t|^{-1} ∫_{W_t} |f|`, shadows taken as
/// cell sets.
pub fn hardy_shadow(f: &[f64], tree: &TreeCovering) -> GridFunction {
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let sums = tree.shadow_sums(&abs);
    let mut out = vec![0.0; f.len()];
    for (t, node) in tree.nodes.iter().enumerate() {
        if node.parent.is_none() || node.shadow_cells == 0 {
            continue;
        }
        let mean = sums[t] / node.shadow_cells as f64;
        for &c in &node.b_cells {
            out[c as usize] += mean;
        }
    }
    GridFunction::new(out)
}

/// `‖f χ_{U_t}‖_p / ‖χ_{U_t}‖_p` for every node.
fn node_ratios(domain: &GridDomain, f: &[f64], tree: &TreeCovering, p: &ExponentField) -> Result<Vec<f64>> {
    tree.nodes
        .par_iter()
        .map(|n| {
            let num = norm(domain, f, p.values(), Region::Cells(&n.u_cells))?;
            Ok(num / indicator_norm(domain, &n.u_cells, p.values())?)
        })
        .collect()
}

fn spread(len: usize, tree: &TreeCovering, weights: &[f64]) -> GridFunction {
    let mut out = vec![0.0; len];
    for (node, &w) in tree.nodes.iter().zip(weights) {
        if w != 0.0 {
            for &c in &node.u_cells {
                out[c as usize] += w;
            }
        }
    }
    GridFunction::new(out)
}

/// `T_p f = Σ_t χ_{U_t} ‖f χ_{U_t}‖_p / ‖χ_{U_t}‖_p`.
pub fn tree_average_tp(domain: &GridDomain, f: &[f64], tree: &TreeCovering, p: &ExponentField) -> Result<GridFunction> {
    check_len(domain, f, p)?;
    let w = node_ratios(domain, f, tree, p)?;
    Ok(spread(f.len(), tree, &w))
}

/// The constant `β` with `β/n = 1/p(x) - 1/q(x)` at every cell, required to
/// lie in `[0, α]`.
pub fn offdiag_relation(p: &ExponentField, q: &ExponentField, alpha: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Length { expected: p.len(), got: q.len() });
    }
    let beta_at = |k: usize| DIM * (1.0 / p.get(k) - 1.0 / q.get(k));
    let beta = beta_at(0);
    for k in 0..p.len() {
        let b = beta_at(k);
        if (b - beta).abs() > 1e-12 {
            return Err(Error::OffDiagonal {
                cell: k,
                detail: format!("n(1/p - 1/q) = {b} differs from {beta} at cell 0"),
            });
        }
        if b < -1e-12 || b > alpha + 1e-12 {
            return Err(Error::OffDiagonal { cell: k, detail: format!("beta = {b} outside [0, {alpha}]") });
        }
    }
    Ok(beta.max(0.0))
}

/// `T^α_p f = Σ_t |U_t|^{α/n} χ_{U_t} ‖f χ_{U_t}‖_p / ‖χ_{U_t}‖_p`; the
/// pair `(p, q)` must satisfy [`offdiag_relation`].
pub fn tree_average_talpha(
    domain: &GridDomain,
    f: &[f64],
    tree: &TreeCovering,
    p: &ExponentField,
    q: &ExponentField,
    alpha: f64,
) -> Result<GridFunction> {
    check_len(domain, f, p)?;
    offdiag_relation(p, q, alpha)?;
    let mut w = node_ratios(domain, f, tree, p)?;
    for (t, v) in w.iter_mut().enumerate() {
        *v *= tree.u_measure(t, domain).powf(alpha / DIM);
    }
    Ok(spread(f.len(), tree, &w))
}

fn check_len(domain: &GridDomain, f: &[f64], p: &ExponentField) -> Result<()> {
    if f.len() != domain.len() {
        return Err(Error::Length { expected: domain.len(), got: f.len() });
    }
    if p.len() != domain.len() {
        return Err(Error::Length { expected: domain.len(), got: p.len() });
    }
    Ok(())
}

/// Measured constants of `Σ_t ‖χ_{U_t} f‖_p ‖χ_{U_t} g‖_{r'} ≤ C ‖f‖_p ‖g‖_{r'}`
/// with `r = p` (diagonal) and `r = q` (off-diagonal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderSumReport {
    pub diagonal: f64,
    pub offdiag: Option<f64>,
}

pub fn holder_sum_check(
    domain: &GridDomain,
    f: &[f64],
    g: &[f64],
    tree: &TreeCovering,
    p: &ExponentField,
    q: Option<&ExponentField>,
) -> Result<HolderSumReport> {
    let pd = p.dual()?;
    let measure = |r: &ExponentField, dual: &ExponentField| -> Result<f64> {
        let terms: Vec<f64> = tree
            .nodes
            .par_iter()
            .map(|n| {
                let a = norm(domain, f, r.values(), Region::Cells(&n.u_cells))?;
                let b = norm(domain, g, dual.values(), Region::Cells(&n.u_cells))?;
                Ok(a * b)
            })
            .collect::<Result<_>>()?;
        let rhs = norm(domain, f, r.values(), Region::All)? * norm(domain, g, dual.values(), Region::All)?;
        Ok(if rhs > 0.0 { crate::norm::compensated_sum(terms) / rhs } else { 0.0 })
    };
    let diagonal = measure(p, &pd)?;
    let offdiag = match q {
        Some(q) => Some(measure(p, &q.dual()?)?),
        None => None,
    };
    Ok(HolderSumReport { diagonal, offdiag })
}

/// An operator whose norm can be estimated.
#[derive(Debug, Clone, Copy)]
pub enum Operator<'a> {
    Identity,
    Averaging(&'a [u32]),
    Hardy(&'a TreeCovering),
    Tp(&'a TreeCovering),
    Talpha(&'a TreeCovering, f64),
}

impl Operator<'_> {
    pub fn name(&self) -> String {
        match self {
            Operator::Identity => "identity".into(),
            Operator::Averaging(_) => "averaging".into(),
            Operator::Hardy(_) => "hardy-shadow".into(),
            Operator::Tp(_) => "tree-average".into(),
            Operator::Talpha(_, a) => format!("tree-average-alpha({a})"),
        }
    }

    /// `Tf`; tree averages use the source exponent and `T^α` checks the pair.
    pub fn apply(&self, domain: &GridDomain, f: &[f64], p: &ExponentField, q: &ExponentField) -> Result<GridFunction> {
        match *self {
            Operator::Identity => Ok(GridFunction::new(f.to_vec())),
            Operator::Averaging(cells) => averaging(f, cells),
            Operator::Hardy(tree) => Ok(hardy_shadow(f, tree)),
            Operator::Tp(tree) => tree_average_tp(domain, f, tree, p),
            Operator::Talpha(tree, alpha) => tree_average_talpha(domain, f, tree, p, q, alpha),
        }
    }
}

/// A test function of the corpus, reproducible from its id and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusId {
    /// Uniform random values in `[-1, 1]`.
    Uniform(u64),
    /// Radial tent with random center and width.
    Tent(u64),
    /// Indicator of a random disc.
    Indicator(u64),
    /// Tent centered on a random boundary cell with a random small width.
    NearBoundary(u64),
    /// `|f_k|` of the `i`-th ball of a counterexample family.
    Bump(usize),
    /// Indicator of the two outer annuli of the `i`-th ball.
    Shell(usize),
    /// Indicator of the part of a shadow `W_t` where `p = p_0`, for the node
    /// `t` whose `B_t` meets the core of the `i`-th ball in the most cells.
    Shadow(usize),
}

impl fmt::Display for CorpusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusId::Uniform(i) => write!(f, "uniform-{i}"),
            CorpusId::Tent(i) => write!(f, "tent-{i}"),
            CorpusId::Indicator(i) => write!(f, "indicator-{i}"),
            CorpusId::NearBoundary(i) => write!(f, "near-boundary-{i}"),
            CorpusId::Bump(i) => write!(f, "bump-{i}"),
            CorpusId::Shell(i) => write!(f, "shell-{i}"),
            CorpusId::Shadow(i) => write!(f, "shadow-{i}"),
        }
    }
}

impl CorpusId {
    /// Trial `i` of the random part: the kinds cycle in declaration order.
    pub fn random(i: u64) -> Self {
        match i % 4 {
            0 => CorpusId::Uniform(i),
            1 => CorpusId::Tent(i),
            2 => CorpusId::Indicator(i),
            _ => CorpusId::NearBoundary(i),
        }
    }

    pub fn build(&self, domain: &GridDomain, corpus: &Corpus) -> Result<GridFunction> {
        let rng = |i: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(corpus.seed);
            r.set_stream(i);
            r
        };
        let dist = |x: [f64; 2], c: [f64; 2]| (x[0] - c[0]).hypot(x[1] - c[1]);
        let n = domain.len();
        Ok(match *self {
            CorpusId::Uniform(i) => {
                let mut r = rng(i);
                GridFunction::new((0..n).map(|_| r.gen_range(-1.0..=1.0)).collect())
            }
            CorpusId::Tent(i) => {
                let mut r = rng(i);
                let c = domain.center(r.gen_range(0..n));
                let w = r.gen_range(0.05..0.5);
                GridFunction::from_fn(domain, |x| (1.0 - dist(x, c) / w).max(0.0))
            }
            CorpusId::Indicator(i) => {
                let mut r = rng(i);
                let c = domain.center(r.gen_range(0..n));
                let w = r.gen_range(0.02..0.4f64).max(domain.h());
                GridFunction::from_fn(domain, |x| if dist(x, c) <= w { 1.0 } else { 0.0 })
            }
            CorpusId::NearBoundary(i) => {
                let mut r = rng(i);
                let boundary: Vec<usize> = (0..n).filter(|&k| domain.is_boundary_cell(k)).collect();
                let c = domain.center(boundary[r.gen_range(0..boundary.len())]);
                let lo = (2.0 * domain.h()).ln();
                let w = r.gen_range(lo..=0.25f64.ln().max(lo)).exp();
                GridFunction::from_fn(domain, |x| (1.0 - dist(x, c) / w).max(0.0))
            }
            CorpusId::Bump(i) | CorpusId::Shell(i) | CorpusId::Shadow(i) => {
                let family =
                    corpus.family.ok_or_else(|| Error::Invalid(format!("{self} needs a counterexample family")))?;
                let b = family
                    .bumps
                    .get(i)
                    .ok_or_else(|| Error::Invalid(format!("family has {} balls", family.bumps.len())))?;
                if matches!(self, CorpusId::Bump(_)) {
                    GridFunction::from_fn(domain, |x| b.test_function_at(x).abs())
                } else if matches!(self, CorpusId::Shadow(_)) {
                    let tree = corpus.tree.ok_or_else(|| Error::Invalid(format!("{self} needs a tree covering")))?;
                    let core = |s: usize| tree.nodes[s].b_cells.iter().filter(|&&c| b.in_core(domain.center(c as usize))).count();
                    let best = (1..tree.len()).map(|s| (core(s), std::cmp::Reverse(s))).max();
                    let mut out = vec![0.0; domain.len()];
                    if let Some((_, std::cmp::Reverse(t))) = best.filter(|&(n, _)| n > 0) {
                        for s in tree.shadow_nodes(t) {
                            for &c in &tree.nodes[s].u_cells {
                                if family.bumps.iter().all(|b| b.exponent_at(domain.center(c as usize), family.p0).is_none()) {
                                    out[c as usize] = 1.0;
                                }
                            }
                        }
                    }
                    GridFunction::new(out)
                } else {
                    GridFunction::from_fn(domain, |x| {
                        let (da, db) = (dist(x, b.a), dist(x, b.b));
                        let shell = |d: f64| d > 2.0 * b.r && d <= 3.0 * b.r;
                        if shell(da) || shell(db) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                }
            }
        })
    }
}

/// Seeded test functions: `trials` random ones followed, when a family is
/// given, by its bumps and shells, and by its shadows when a tree is given too.
#[derive(Debug, Clone, Copy)]
pub struct Corpus<'a> {
    pub trials: usize,
    pub seed: u64,
    pub family: Option<&'a Family>,
    pub tree: Option<&'a TreeCovering>,
}

impl<'a> Corpus<'a> {
    pub fn random(trials: usize, seed: u64) -> Self {
        Corpus { trials, seed, family: None, tree: None }
    }

    pub fn with_family(self, family: &'a Family, tree: Option<&'a TreeCovering>) -> Self {
        Corpus { family: Some(family), tree, ..self }
    }

    pub fn ids(&self) -> Vec<CorpusId> {
        let mut ids: Vec<CorpusId> = (0..self.trials as u64).map(CorpusId::random).collect();
        if let Some(f) = self.family {
            for i in 0..f.bumps.len() {
                ids.push(CorpusId::Bump(i));
                ids.push(CorpusId::Shell(i));
                if self.tree.is_some() {
                    ids.push(CorpusId::Shadow(i));
                }
            }
        }
        ids
    }
}

/// Measured sup of `‖Tf‖_q / ‖f‖_p` over a seeded corpus.
#[derive(Debug, Clone)]
pub struct OperatorNormEstimate {
    pub operator: String,
    pub source: String,
    pub target: String,
    pub seed: u64,
    pub trials: usize,
    pub sup: f64,
    pub argmax: CorpusId,
    /// `(id, ratio)` for every corpus entry with a nonzero source norm.
    pub ratios: Vec<(CorpusId, f64)>,
    /// `(level, sup)` when the estimate was repeated over refinements.
    pub refinements: Vec<(u32, f64)>,
}

impl OperatorNormEstimate {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["trial_id", "ratio"]);
        for (id, r) in &self.ratios {
            csv.row(&[id.to_string(), num(*r)]);
        }
        csv.row(&[format!("sup:{}:seed={}", self.argmax, self.seed), num(self.sup)]);
        csv
    }
}

impl fmt::Display for OperatorNormEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} -> {}, {} functions, seed {}: sup = {} at {}",
            self.operator,
            self.source,
            self.target,
            self.ratios.len(),
            self.seed,
            num(self.sup),
            self.argmax
        )?;
        for (level, sup) in &self.refinements {
            writeln!(f, "  L = {level}: {}", num(*sup))?;
        }
        Ok(())
    }
}

/// Ratio `‖Tf‖_q / ‖f‖_p` of one function, `None` when `f` vanishes.
pub fn operator_ratio(
    domain: &GridDomain,
    op: Operator,
    f: &[f64],
    p: &ExponentField,
    q: &ExponentField,
) -> Result<Option<f64>> {
    let den = norm(domain, f, p.values(), Region::All)?;
    if den == 0.0 {
        return Ok(None);
    }
    let tf = op.apply(domain, f, p, q)?;
    Ok(Some(norm(domain, &tf.values, q.values(), Region::All)? / den))
}

/// Sup of `‖Tf‖_q / ‖f‖_p` over the corpus. Ties go to the earlier entry.
pub fn estimate_operator_norm(
    domain: &GridDomain,
    op: Operator,
    p: &ExponentField,
    q: &ExponentField,
    corpus: &Corpus,
) -> Result<OperatorNormEstimate> {
    if corpus.trials == 0 && corpus.family.is_none() {
        return Err(Error::Invalid("at least one trial is required".into()));
    }
    let ids = corpus.ids();
    let ratios: Vec<Option<(CorpusId, f64)>> = ids
        .par_iter()
        .map(|id| {
            let f = id.build(domain, corpus)?;
            Ok(operator_ratio(domain, op, &f.values, p, q)?.map(|r| (*id, r)))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<(CorpusId, f64)> = ratios.into_iter().flatten().collect();
    let (argmax, sup) = ratios
        .iter()
        .copied()
        .fold(None, |best: Option<(CorpusId, f64)>, (id, r)| match best {
            Some((_, b)) if b >= r => best,
            _ => Some((id, r)),
        })
        .ok_or(Error::DegenerateCorpus)?;
    Ok(OperatorNormEstimate {
        operator: op.name(),
        source: "p".into(),
        target: "q".into(),
        seed: corpus.seed,
        trials: ids.len(),
        sup,
        argmax,
        ratios,
        refinements: Vec::new(),
    })
}

/// Run `estimate` at every level and keep the last estimate with the table of
/// sups.
pub fn refinement_sweep(
    levels: &[u32],
    mut estimate: impl FnMut(u32) -> Result<OperatorNormEstimate>,
) -> Result<OperatorNormEstimate> {
    let mut table = Vec::new();
    let mut last = None;
    for &level in levels {
        let e = estimate(level)?;
        table.push((level, e.sup));
        last = Some(e);
    }
    let mut last = last.ok_or_else(|| Error::Invalid("no refinement levels".into()))?;
    last.refinements = table;
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::ExponentSpec;
    use crate::geometry::{build_covering, build_tree_covering, DomainSpec, DyadicCube};
    use proptest::prelude::*;

    fn square(level: u32) -> (GridDomain, TreeCovering) {
        let (d, _, t) = build_covering(&DomainSpec::UnitSquare, level).unwrap();
        (d, t)
    }

    fn single_node(level: u32) -> (GridDomain, TreeCovering) {
        let d = GridDomain::build(&DomainSpec::UnitSquare, level).unwrap();
        let t = build_tree_covering(&[DyadicCube::new(0, [0, 0])], &d).unwrap();
        (d, t)
    }

    #[test]
    fn averaging_fixes_constants_and_kills_mean_zero() {
        let (d, _) = square(4);
        let cells = d.select(|x| x[0] < 0.5);
        let a = averaging(&vec![3.0; d.len()], &cells).unwrap();
        for k in 0..d.len() {
            assert_eq!(a.values[k], if d.center(k)[0] < 0.5 { 3.0 } else { 0.0 });
        }
        let f: Vec<f64> = (0..d.len()).map(|k| d.center(k)[1] - 0.5).collect();
        assert!(averaging(&f, &cells).unwrap().values.iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(averaging(&f, &[]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn hardy_of_one_is_the_b_indicator() {
        let (d, t) = square(5);
        let a = hardy_shadow(&vec![1.0; d.len()], &t);
        let mut expect = vec![0.0; d.len()];
        for n in t.nodes.iter().skip(1) {
            for &c in &n.b_cells {
                expect[c as usize] += 1.0;
            }
        }
        for k in 0..d.len() {
            assert!((a.values[k] - expect[k]).abs() < 1e-14);
            assert!(a.values[k] <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn hardy_vanishes_off_the_shadows() {
        let (d, t) = square(5);
        let leaf = (1..t.len()).rev().find(|&s| t.nodes[s].children.is_empty()).unwrap();
        let mut f = vec![0.0; d.len()];
        for &c in &t.nodes[leaf].u_cells {
            f[c as usize] = 1.0;
        }
        let a = hardy_shadow(&f, &t);
        let reaches = |s: usize| t.shadow_nodes(s).iter().any(|&r| t.nodes[r].u_cells.iter().any(|&c| f[c as usize] != 0.0));
        let mut zeros = 0;
        for c in 0..d.len() {
            let owners: Vec<usize> =
                (1..t.len()).filter(|&s| t.nodes[s].b_cells.binary_search(&(c as u32)).is_ok()).collect();
            if owners.iter().all(|&s| !reaches(s)) {
                assert_eq!(a.values[c], 0.0);
                zeros += 1;
            }
        }
        assert!(zeros > d.len() / 2);
    }

    #[test]
    fn tp_of_constant_and_indicator() {
        let (d, t) = square(4);
        let p = ExponentSpec::Linear { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let tf = tree_average_tp(&d, &vec![2.0; d.len()], &t, &p).unwrap();
        for k in 0..d.len() {
            let cover = t.covering(k).len() as f64;
            assert!((tf.values[k] - 2.0 * cover).abs() < 1e-8);
        }
        let t0 = t.len() / 2;
        let u0 = &t.nodes[t0].u_cells;
        let f: Vec<f64> = (0..d.len()).map(|k| if u0.binary_search(&(k as u32)).is_ok() { 1.0 } else { 0.0 }).collect();
        let tf = tree_average_tp(&d, &f, &t, &p).unwrap();
        let mut expect = vec![0.0; d.len()];
        for n in &t.nodes {
            let common: Vec<u32> = n.u_cells.iter().copied().filter(|c| u0.binary_search(c).is_ok()).collect();
            if common.is_empty() {
                continue;
            }
            let v = indicator_norm(&d, &common, p.values()).unwrap() / indicator_norm(&d, &n.u_cells, p.values()).unwrap();
            for &c in &n.u_cells {
                expect[c as usize] += v;
            }
        }
        for k in 0..d.len() {
            assert!((tf.values[k] - expect[k]).abs() < 1e-8 * (1.0 + expect[k]));
        }
    }

    #[test]
    fn talpha_single_node_and_relation() {
        let (d, t) = single_node(4);
        let p = ExponentField::constant(&d, 2.0).unwrap();
        let q = ExponentField::constant(&d, 10.0 / 3.0).unwrap();
        let tf = tree_average_talpha(&d, &vec![1.0; d.len()], &t, &p, &q, 0.5).unwrap();
        assert!(tf.values.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        // n = 2, p = 2: q = 10/3 gives beta = 0.4 and q = 4 gives beta = 0.5
        assert!((offdiag_relation(&p, &q, 0.5).unwrap() - 0.4).abs() < 1e-12);
        let q4 = ExponentField::constant(&d, 4.0).unwrap();
        assert!((offdiag_relation(&p, &q4, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(tree_average_talpha(&d, &vec![1.0; d.len()], &t, &p, &q4, 0.4), Err(Error::OffDiagonal { .. })));
        let bad = ExponentField::from_fn(&d, |k| if k == 7 { 3.0 } else { 10.0 / 3.0 }).unwrap();
        assert!(matches!(offdiag_relation(&p, &bad, 0.5), Err(Error::OffDiagonal { cell: 7, .. })));
    }

    #[test]
    fn holder_sum_single_node_is_one() {
        let (d, t) = single_node(4);
        let p = ExponentSpec::Linear { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let f = CorpusId::Tent(1).build(&d, &Corpus::random(0, 3)).unwrap();
        let g = CorpusId::Uniform(0).build(&d, &Corpus::random(0, 3)).unwrap();
        let r = holder_sum_check(&d, &f.values, &g.values, &t, &p, None).unwrap();
        assert!((r.diagonal - 1.0).abs() < 1e-9);
    }

    #[test]
    fn holder_sum_of_ones_is_the_overlap_mass() {
        let (d, t) = square(5);
        let p = ExponentField::constant(&d, 2.0).unwrap();
        let one = vec![1.0; d.len()];
        let r = holder_sum_check(&d, &one, &one, &t, &p, None).unwrap();
        let mass: f64 = (0..t.len()).map(|s| t.u_measure(s, &d)).sum();
        assert!((r.diagonal - mass).abs() < 1e-8);
        assert!(r.diagonal <= t.c1 as f64);
    }

    #[test]
    fn identity_estimate_is_one() {
        let (d, _) = square(4);
        let p = ExponentSpec::Step { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let e = estimate_operator_norm(&d, Operator::Identity, &p, &p, &Corpus::random(12, 9)).unwrap();
        assert!((e.sup - 1.0).abs() < 1e-10);
    }

    #[test]
    fn averaging_over_omega_is_a_contraction() {
        let (d, _) = square(4);
        let p = ExponentField::constant(&d, 2.5).unwrap();
        let all: Vec<u32> = (0..d.len() as u32).collect();
        let e = estimate_operator_norm(&d, Operator::Averaging(&all), &p, &p, &Corpus::random(40, 5)).unwrap();
        assert!(e.sup <= 1.0 + 1e-8);
    }

    #[test]
    fn argmax_reproduces_and_runs_are_deterministic() {
        let (d, t) = square(5);
        let p = ExponentSpec::RadialLh { low: 1.5, high: 2.5 }.build(&d).unwrap();
        let a = estimate_operator_norm(&d, Operator::Hardy(&t), &p, &p, &Corpus::random(16, 42)).unwrap();
        let b = estimate_operator_norm(&d, Operator::Hardy(&t), &p, &p, &Corpus::random(16, 42)).unwrap();
        assert_eq!(a.ratios, b.ratios);
        let f = a.argmax.build(&d, &Corpus::random(0, 42)).unwrap();
        let r = operator_ratio(&d, Operator::Hardy(&t), &f.values, &p, &p).unwrap().unwrap();
        assert!((r - a.sup).abs() <= 1e-8 * a.sup);
        assert!(a.to_csv().as_str().lines().count() == a.ratios.len() + 2);
    }

    #[test]
    fn degenerate_corpus() {
        let (d, _) = square(3);
        let p = ExponentField::constant(&d, 2.0).unwrap();
        let fam = Family { bumps: Vec::new(), p0: 2.0, warnings: Vec::new() };
        assert!(matches!(
            estimate_operator_norm(&d, Operator::Identity, &p, &p, &Corpus::random(0, 1).with_family(&fam, None)),
            Err(Error::DegenerateCorpus)
        ));
    }

    #[test]
    fn talpha_zero_is_tp() {
        let (d, t) = square(5);
        let p = ExponentSpec::RadialLh { low: 1.4, high: 2.2 }.build(&d).unwrap();
        let f = CorpusId::NearBoundary(3).build(&d, &Corpus::random(0, 8)).unwrap();
        let a = tree_average_tp(&d, &f.values, &t, &p).unwrap();
        let b = tree_average_talpha(&d, &f.values, &t, &p, &p, 0.0).unwrap();
        for k in 0..d.len() {
            assert!((a.values[k] - b.values[k]).abs() <= 1e-12 * a.values[k].abs().max(1.0));
        }
    }

    #[test]
    fn shadow_corpus_grows_with_the_family() {
        use crate::counterexample::{layout, CounterexampleConfig, Placement};
        let spec = CounterexampleConfig::new(2.0, 4, Placement::Boundary).domain_spec();
        let (d, _, t) = build_covering(&spec, 8).unwrap();
        let mut sups = Vec::new();
        for kmax in 2..=4 {
            let fam = layout(&CounterexampleConfig::new(2.0, kmax, Placement::Boundary), &d).unwrap();
            let p = fam.exponent(&d).unwrap();
            let c = Corpus::random(0, 1).with_family(&fam, Some(&t));
            let e = estimate_operator_norm(&d, Operator::Hardy(&t), &p, &p, &c).unwrap();
            assert!(matches!(e.argmax, CorpusId::Shadow(_)));
            sups.push(e.sup);
        }
        assert!(sups.windows(2).all(|w| w[1] > w[0]), "{sups:?}");
        assert!(sups[2] >= 2.0 * sups[0], "{sups:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn positive_homogeneity(seed in 0u64..1000, scale in 0.01f64..100.0, kind in 0u64..4) {
            let (d, t) = square(4);
            let p = ExponentSpec::Linear { low: 1.3, high: 2.7 }.build(&d).unwrap();
            let q = p.sobolev_target(0.3).unwrap();
            let f = CorpusId::random(kind).build(&d, &Corpus::random(0, seed)).unwrap();
            let fs = f.scaled(scale);
            let all: Vec<u32> = (0..d.len() as u32).collect();
            let abs: Vec<f64> = f.values.iter().map(|v| v.abs()).collect();
            for op in [Operator::Averaging(&all), Operator::Hardy(&t), Operator::Tp(&t), Operator::Talpha(&t, 0.3)] {
                // averaging is linear, the others see |f|
                let base = if matches!(op, Operator::Averaging(_)) { &f.values } else { &abs };
                let a = op.apply(&d, base, &p, &q).unwrap();
                let b = op.apply(&d, &fs.values, &p, &q).unwrap();
                let b_abs = op.apply(&d, &fs.values.iter().map(|v| v.abs()).collect::<Vec<_>>(), &p, &q).unwrap();
                for k in 0..d.len() {
                    let tol = 1e-8 * (scale * a.values[k].abs()).max(1e-300);
                    prop_assert!((b.values[k] - scale * a.values[k]).abs() <= tol.max(1e-12));
                    prop_assert!((b_abs.values[k] - b.values[k]).abs() <= tol.max(1e-12) || matches!(op, Operator::Averaging(_)));
                }
            }
        }

        #[test]
        fn supports(seed in 0u64..1000, kind in 0u64..4) {
            let (d, t) = square(5);
            let p = ExponentField::constant(&d, 1.8).unwrap();
            let f = CorpusId::random(kind).build(&d, &Corpus::random(0, seed)).unwrap();
            let mut in_b = vec![false; d.len()];
            let mut in_u = vec![false; d.len()];
            for n in &t.nodes {
                n.b_cells.iter().for_each(|&c| in_b[c as usize] = true);
                n.u_cells.iter().for_each(|&c| in_u[c as usize] = true);
            }
            let a = hardy_shadow(&f.values, &t);
            let tp = tree_average_tp(&d, &f.values, &t, &p).unwrap();
            for k in 0..d.len() {
                prop_assert!(in_b[k] || a.values[k] == 0.0);
                prop_assert!(in_u[k] || tp.values[k] == 0.0);
            }
        }
    }
}
