//! Subcommand drivers. Each writes its reports into the output directory and
//! records the pass/fail checks that decide the exit code.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use varlab::counterexample::{blowup_sp, korn_blowup, layout, CounterexampleConfig, Placement};
use varlab::decomposition::{decompose, mean_zero_field, partition_of_unity, verify_decomposition};
use varlab::exponent::{
    boundary_trace, check_boundary_lh, check_k0, check_lh_equiv, harmonic_mean_norm_check, interior_lh_constant,
    ConditionReport, ExponentSpec, Witness,
};
use varlab::geometry::{
    build_covering, cube_boundary_dist2, estimate_john_constants, whitney_bounds_hold, DomainSpec, GridDomain,
    TreeCovering,
};
use varlab::inequality_lab::{
    compact_corpus, continuity_sigma, eval_compact, global_sp_verify, lab_corpus, refinement_sweep, sobolev_verify,
    VerificationReport,
};
use varlab::io::{num, svg_loglog, Csv};
use varlab::operators::{estimate_operator_norm, Corpus, Operator, OperatorNormEstimate};

use crate::config::{parse_domain, Command, ConfigError, RunConfig};

/// Step bound for "stable under refinement".
const STABLE: f64 = 1.5;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lab(#[from] varlab::Error),
    #[error("{0}")]
    Input(String),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

type Result<T> = std::result::Result<T, RunError>;

/// Files and checks of one run.
pub struct Output {
    dir: PathBuf,
    hash: String,
    timestamp: Option<u64>,
    pub files: Vec<String>,
    pub checks: Vec<(String, bool)>,
    pub lines: Vec<String>,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).map_err(|source| RunError::Write { path: cfg.out.clone(), source })?;
        let timestamp = (!cfg.no_timestamp)
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Ok(Output { dir: cfg.out.clone(), hash: cfg.hash(), timestamp, files: Vec::new(), checks: Vec::new(), lines: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|source| RunError::Write { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        let mut text = format!("# config_sha256={}\n", self.hash);
        if let Some(t) = self.timestamp {
            text.push_str(&format!("# generated_unix={t}\n"));
        }
        text.push_str(csv.as_str());
        self.write(name, &text)
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    fn manifest(&mut self, cfg: &RunConfig) -> Result<()> {
        let mut m = String::from("# varlab run manifest\n");
        if let Some(t) = self.timestamp {
            m.push_str(&format!("# generated_unix={t}\n"));
        }
        m.push_str(&cfg.to_string());
        m.push_str(&format!("config_sha256 = {}\n", self.hash));
        m.push_str(&format!("varlab = {}\nvarlab-cli = {}\n", varlab::VERSION, env!("CARGO_PKG_VERSION")));
        for f in &self.files {
            m.push_str(&format!("file = {f}\n"));
        }
        for (name, ok) in &self.checks {
            m.push_str(&format!("check = {} {name}\n", if *ok { "pass" } else { "FAIL" }));
        }
        self.write("manifest.txt", &m)
    }
}

fn domain_spec(cfg: &RunConfig) -> Result<DomainSpec> {
    parse_domain(&cfg.domain).map_err(RunError::Input)
}

fn exponent_spec(cfg: &RunConfig) -> Result<ExponentSpec> {
    Ok(cfg.exponent.parse()?)
}

fn step_factor(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else if a > 0.0 && b > 0.0 {
        (a / b).max(b / a)
    } else {
        f64::INFINITY
    }
}

fn max_step(values: &[f64]) -> f64 {
    values.windows(2).map(|w| step_factor(w[0], w[1])).fold(1.0, f64::max)
}

/// `prefix:N` with a default count.
fn corpus_count(corpus: &str, prefix: &str) -> Result<usize> {
    match corpus.split_once(':') {
        Some((p, n)) if p == prefix => n.parse().map_err(|_| RunError::Input(format!("bad corpus size in {corpus:?}"))),
        _ => Err(RunError::Input(format!("corpus must be {prefix}:N, got {corpus:?}"))),
    }
}

/// Run one configuration; the caller maps the outcome to an exit code.
pub fn run(cfg: &RunConfig) -> Result<Output> {
    let mut out = Output::new(cfg)?;
    match cfg.command {
        Command::Whitney => whitney(cfg, &mut out)?,
        Command::CheckExponent => check_exponent(cfg, &mut out)?,
        Command::VerifySp => verify_sp(cfg, &mut out)?,
        Command::VerifySobolev => verify_sobolev(cfg, &mut out)?,
        Command::Decompose => decompose_cmd(cfg, &mut out)?,
        Command::Operators => operators(cfg, &mut out)?,
        Command::Counterexample => counterexample(cfg, &mut out)?,
    }
    out.manifest(cfg)?;
    Ok(out)
}

fn whitney(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let mut summary = Csv::new(&[
        "level", "cells", "cubes", "whitney_uncovered", "nodes", "c1", "c2", "tree_uncovered", "john_k", "tau_k",
    ]);
    let mut c2 = Vec::new();
    for &l in &cfg.levels {
        let (d, w, t) = build_covering(&spec, l)?;
        let mut cubes = Csv::new(&["cube", "level", "anchor_x", "anchor_y", "side_cells", "dist2_cells"]);
        let mut bounds = true;
        for (i, q) in w.cubes.iter().enumerate() {
            let m = q.cells_per_side(l);
            let d2 = cube_boundary_dist2(&d, q);
            bounds &= whitney_bounds_hold(m, d2);
            cubes.row(&[
                i.to_string(),
                q.level.to_string(),
                q.anchor[0].to_string(),
                q.anchor[1].to_string(),
                m.to_string(),
                d2.to_string(),
            ]);
        }
        out.csv(&format!("whitney_L{l}.csv"), &cubes)?;
        out.csv(&format!("tree_L{l}.csv"), &tree_csv(&t))?;
        let mut claimed = vec![false; d.len()];
        let disjoint = t.nodes.iter().flat_map(|n| &n.b_cells).all(|&c| !std::mem::replace(&mut claimed[c as usize], true));
        let john = estimate_john_constants(&t, &d);
        summary.row(&[
            l.to_string(),
            d.len().to_string(),
            w.cubes.len().to_string(),
            w.uncovered.len().to_string(),
            t.len().to_string(),
            t.c1.to_string(),
            num(t.c2),
            t.uncovered.len().to_string(),
            num(john.k),
            num(john.tau_k),
        ]);
        out.check(format!("L={l}: Whitney bounds hold for every square"), bounds);
        out.check(format!("L={l}: C1 = {} <= 4", t.c1), t.c1 <= 4);
        out.check(format!("L={l}: overlap regions disjoint"), disjoint);
        out.say(format!("L={l}: {} squares, {} nodes, C1 = {}, C2 = {}", w.cubes.len(), t.len(), t.c1, t.c2));
        c2.push(t.c2);
    }
    for (w, l) in c2.windows(2).zip(&cfg.levels) {
        out.check(format!("C2 L={l} -> {}: factor {:.3} <= 2", l + 1, w[1] / w[0]), step_factor(w[0], w[1]) <= 2.0);
    }
    out.csv("whitney_summary.csv", &summary)
}

fn tree_csv(t: &TreeCovering) -> Csv {
    let mut csv = Csv::new(&["node", "parent", "depth", "side_cells", "collar", "u_cells", "b_cells", "shadow_cells", "center_dist"]);
    for (k, n) in t.nodes.iter().enumerate() {
        csv.row(&[
            k.to_string(),
            n.parent.map_or("-".into(), |p| p.to_string()),
            n.depth.to_string(),
            n.cube.cells_per_side(t.level()).to_string(),
            n.collar.to_string(),
            n.u_cells.len().to_string(),
            n.b_cells.len().to_string(),
            n.shadow_cells.to_string(),
            num(t.center_dist(k)),
        ]);
    }
    csv
}

fn condition_row(csv: &mut Csv, r: &ConditionReport) {
    let witness = match r.witness {
        Some(Witness::Ball { cell, tau }) => format!("ball {cell} tau {tau}"),
        Some(Witness::Pair(a, b)) => format!("pair {a} {b}"),
        Some(Witness::Node(t)) => format!("node {t}"),
        None => "-".into(),
    };
    let verdict = if r.vacuous { "vacuous" } else if r.pass { "pass" } else { "fail" };
    csv.row(&[r.name.clone(), num(r.constant), verdict.into(), witness, r.threshold.map_or("-".into(), num)]);
}

fn tau_for(cfg: &RunConfig, tree: &TreeCovering, domain: &GridDomain) -> f64 {
    cfg.tau.unwrap_or_else(|| estimate_john_constants(tree, domain).tau_k)
}

fn check_exponent(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let pspec = exponent_spec(cfg)?;
    for &l in &cfg.levels {
        let (d, _, t) = build_covering(&spec, l)?;
        let p = pspec.build(&d)?;
        let tau = tau_for(cfg, &t, &d);
        let mut csv = Csv::new(&["condition", "constant", "verdict", "witness", "threshold"]);
        let blh = check_boundary_lh(&p, &d, tau)?;
        condition_row(&mut csv, &blh);
        let lh = check_lh_equiv(&p, &d, &t, tau)?;
        condition_row(&mut csv, &lh.ball);
        condition_row(&mut csv, &lh.shadow);
        let k0 = check_k0(&p, &d, &t, tau, cfg.alpha)?;
        for r in [Some(&k0.ball), Some(&k0.tree), k0.offdiag_q.as_ref(), k0.offdiag_p.as_ref()].into_iter().flatten() {
            condition_row(&mut csv, r);
        }
        condition_row(&mut csv, &harmonic_mean_norm_check(&p, &d, &t)?);
        condition_row(&mut csv, &interior_lh_constant(&p, &d));
        let trace = boundary_trace(&p, &d, tau, 0.5);
        condition_row(&mut csv, &trace.report);
        let sigma = continuity_sigma(&p, &d);
        csv.row(&["continuity-sigma".into(), num(sigma), "-".into(), "-".into(), "-".into()]);
        out.csv(&format!("conditions_L{l}.csv"), &csv)?;
        out.check(format!("L={l}: boundary-LH(tau={tau:.4}) constant finite"), blh.constant.is_finite());
        out.say(format!("L={l}: p in [{}, {}], boundary-LH {}, trace {}", p.p_minus(), p.p_plus(), num(blh.constant), num(trace.report.constant)));
    }
    Ok(())
}

fn ratio_plot(title: &str, rep: &VerificationReport) -> String {
    let pts: Vec<(f64, f64)> = rep.refinements.iter().map(|&(l, r)| (2f64.powi(l as i32), r)).collect();
    svg_loglog(title, "1/h", "max ratio", &[("max ratio", pts)])
}

fn finish_report(out: &mut Output, stem: &str, rep: &VerificationReport, min_rows: usize) -> Result<()> {
    out.csv(&format!("{stem}.csv"), &rep.to_csv())?;
    out.csv(&format!("{stem}_refinement.csv"), &rep.refinement_csv())?;
    out.write(&format!("{stem}_refinement.svg"), &ratio_plot(&rep.inequality, rep))?;
    out.check(format!("{} functions >= {min_rows}", rep.rows.len()), rep.rows.len() >= min_rows);
    out.check(
        format!("hypotheses certified ({})", rep.certified_by.as_deref().unwrap_or("none")),
        rep.certified(),
    );
    let step = rep.refinement_step();
    out.check(format!("refinement step {step:.4} < {STABLE}"), step < STABLE);
    out.say(rep.to_string().trim_end().to_string());
    Ok(())
}

fn verify_sp(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let pspec = exponent_spec(cfg)?;
    let with_family = match cfg.corpus.as_str() {
        "standard" => false,
        "standard+family" => true,
        other => return Err(RunError::Input(format!("verify-sp corpus is standard or standard+family, got {other:?}"))),
    };
    let family_cfg = match (&pspec, with_family) {
        (ExponentSpec::Counterexample(c), true) => Some(c.clone()),
        (_, true) => return Err(RunError::Input("standard+family needs a counterexample exponent".into())),
        _ => None,
    };
    // τ_K varies with the resolution; the largest value is used throughout
    let mut taus = Vec::new();
    for &l in &cfg.levels {
        let (d, _, t) = build_covering(&spec, l)?;
        taus.push(tau_for(cfg, &t, &d));
    }
    let tau = taus.iter().copied().fold(1.0, f64::max);
    let mut rep = refinement_sweep(&cfg.levels, |l| {
        let d = GridDomain::build(&spec, l)?;
        let p = pspec.build(&d)?;
        let fam = family_cfg.as_ref().map(|c| layout(c, &d)).transpose()?;
        global_sp_verify(&d, &p, cfg.alpha, tau, &lab_corpus(&d, cfg.seed, fam.as_ref()))
    })?;
    if cfg.tau.is_none() && taus.iter().any(|&t| t != tau) {
        let list: Vec<String> = taus.iter().map(|t| format!("{t:.4}")).collect();
        rep.notes.push(format!("tau_K differs across levels ({}); using the max {tau:.4}", list.join(", ")));
    }
    finish_report(out, "verify_sp", &rep, 20)
}

fn verify_sobolev(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let pspec = exponent_spec(cfg)?;
    let count = corpus_count(&cfg.corpus, "compact")?;
    // supports are drawn on the coarsest grid so every level sees the same corpus
    let reference = GridDomain::build(&spec, cfg.levels[0])?;
    let bumps = compact_corpus(&reference, cfg.seed, count);
    if bumps.is_empty() {
        return Err(RunError::Input("domain too small for a compactly supported corpus at this level".into()));
    }
    let rep = refinement_sweep(&cfg.levels, |l| {
        let d = GridDomain::build(&spec, l)?;
        let p = pspec.build(&d)?;
        sobolev_verify(&d, &p, cfg.alpha, &eval_compact(&d, &bumps))
    })?;
    finish_report(out, "verify_sobolev", &rep, count)
}

fn decompose_cmd(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let pspec = exponent_spec(cfg)?;
    let fields = corpus_count(&cfg.corpus, "fields")?;
    let mut summary = Csv::new(&[
        "level", "fields", "max_sum_residual", "max_mean_residual", "means_ok", "support_ok", "max_constant",
    ]);
    let mut constants = Vec::new();
    for &l in &cfg.levels {
        let (d, _, t) = build_covering(&spec, l)?;
        let q = pspec.build(&d)?;
        let pou = partition_of_unity(&d, &t);
        let (mut sum_res, mut mean_res, mut means_ok, mut support_ok, mut constant) = (0.0f64, 0.0f64, true, true, 0.0f64);
        for i in 0..fields as u64 {
            let g = mean_zero_field(&d, &t, cfg.seed, i);
            let dec = decompose(&d, &g.values, &t, &pou)?;
            let rep = verify_decomposition(&d, &dec, &g.values, &t, &q)?;
            if i == 0 && l == *cfg.levels.last().unwrap_or(&l) {
                out.csv(&format!("decompose_nodes_L{l}.csv"), &rep.to_csv())?;
            }
            sum_res = sum_res.max(rep.sum_residual);
            mean_res = mean_res.max(rep.mean_residual);
            means_ok &= rep.means_ok;
            support_ok &= rep.support_ok;
            constant = constant.max(rep.constant.unwrap_or(0.0));
        }
        summary.row(&[
            l.to_string(),
            fields.to_string(),
            num(sum_res),
            num(mean_res),
            means_ok.to_string(),
            support_ok.to_string(),
            num(constant),
        ]);
        out.check(format!("L={l}: sum residual {sum_res:.3e} <= 1e-10"), sum_res <= 1e-10);
        out.check(format!("L={l}: every part has zero mean"), means_ok);
        out.check(format!("L={l}: every part supported in its U_t"), support_ok);
        out.say(format!("L={l}: {fields} fields, decomposition constant {}", num(constant)));
        constants.push(constant);
    }
    for (w, l) in constants.windows(2).zip(&cfg.levels) {
        let s = step_factor(w[0], w[1]);
        out.check(format!("constant L={l} -> {}: factor {s:.3} < {STABLE}", l + 1), s < STABLE);
    }
    out.csv("decompose_summary.csv", &summary)
}

fn operator_row(csv: &mut Csv, label: &str, e: &OperatorNormEstimate) {
    for &(l, s) in &e.refinements {
        csv.row(&[label.to_string(), l.to_string(), num(s), e.argmax.to_string()]);
    }
}

fn operators(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let spec = domain_spec(cfg)?;
    let pspec = exponent_spec(cfg)?;
    if cfg.corpus == "family" {
        return operators_family(cfg, out, &spec, &pspec);
    }
    let trials = corpus_count(&cfg.corpus, "random")?;
    let mut table = Csv::new(&["operator", "level", "sup", "argmax"]);
    let kinds: &[&str] = if cfg.alpha > 0.0 { &["hardy", "tp", "talpha"] } else { &["hardy", "tp"] };
    for &kind in kinds {
        let est = varlab::operators::refinement_sweep(&cfg.levels, |l| {
            let (d, _, t) = build_covering(&spec, l)?;
            let p = pspec.build(&d)?;
            let corpus = Corpus::random(trials, cfg.seed);
            match kind {
                "hardy" => estimate_operator_norm(&d, Operator::Hardy(&t), &p, &p, &corpus),
                "tp" => estimate_operator_norm(&d, Operator::Tp(&t), &p, &p, &corpus),
                _ => {
                    let q = p.sobolev_target(cfg.alpha)?;
                    estimate_operator_norm(&d, Operator::Talpha(&t, cfg.alpha), &p, &q, &corpus)
                }
            }
        })?;
        operator_row(&mut table, &est.operator, &est);
        out.csv(&format!("operator_{kind}.csv"), &est.to_csv())?;
        let sups: Vec<f64> = est.refinements.iter().map(|r| r.1).collect();
        let s = max_step(&sups);
        out.check(format!("{}: refinement step {s:.4} < {STABLE}", est.operator), s < STABLE);
        out.say(est.to_string().trim_end().to_string());
    }
    out.csv("operators.csv", &table)
}

/// Hardy operator on a counterexample family for `k_max = 2..kmax` at the
/// finest level: the sup should grow.
fn operators_family(cfg: &RunConfig, out: &mut Output, spec: &DomainSpec, pspec: &ExponentSpec) -> Result<()> {
    let ExponentSpec::Counterexample(base) = pspec else {
        return Err(RunError::Input("corpus family needs a counterexample exponent".into()));
    };
    let l = *cfg.levels.last().expect("levels are non-empty");
    let (d, _, t) = build_covering(spec, l)?;
    let mut table = Csv::new(&["kmax", "sup", "argmax"]);
    let mut sups = Vec::new();
    for kmax in base.k_min..=cfg.kmax {
        let c = CounterexampleConfig { k_max: kmax, ..base.clone() };
        let fam = layout(&c, &d)?;
        let p = fam.exponent(&d)?;
        let corpus = Corpus::random(0, cfg.seed).with_family(&fam, Some(&t));
        let e = estimate_operator_norm(&d, Operator::Hardy(&t), &p, &p, &corpus)?;
        table.row(&[kmax.to_string(), num(e.sup), e.argmax.to_string()]);
        out.say(format!("kmax = {kmax}: sup {} at {}", num(e.sup), e.argmax));
        sups.push(e.sup);
    }
    let monotone = sups.windows(2).all(|w| w[1] > w[0]);
    let growth = match (sups.first(), sups.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => 1.0,
    };
    out.check("hardy sup strictly increasing in kmax", monotone);
    out.check(format!("hardy growth {growth:.3} >= 2"), growth >= 2.0);
    out.csv("operators_family.csv", &table)
}

fn counterexample(cfg: &RunConfig, out: &mut Output) -> Result<()> {
    let placement = if cfg.mode == "interior" { Placement::Interior } else { Placement::Boundary };
    let p0 = cfg.p0.unwrap_or(if cfg.mode == "interior" { 1.2 } else { 2.0 });
    let ce = CounterexampleConfig::new(p0, cfg.kmax, placement);
    let l = *cfg.levels.last().expect("levels are non-empty");
    let d = GridDomain::build(&ce.domain_spec(), l)?;
    let rep = if cfg.mode == "korn" { korn_blowup(&ce, &d)? } else { blowup_sp(&ce, &d, cfg.alpha)? };
    out.csv(&format!("counterexample_{}.csv", cfg.mode), &rep.to_csv())?;
    let ratio: Vec<(f64, f64)> = rep.rows.iter().map(|r| (1.0 / r.r, r.ratio)).collect();
    let predicted: Vec<(f64, f64)> = rep.rows.iter().map(|r| (1.0 / r.r, r.predicted)).collect();
    out.write(
        &format!("counterexample_{}.svg", cfg.mode),
        &svg_loglog(&rep.experiment, "1/r_k", "ratio", &[("measured", ratio), ("predicted", predicted)]),
    )?;
    for w in &rep.warnings {
        out.say(format!("warning: {w}"));
    }
    for r in &rep.rows {
        out.say(format!("k = {}: ratio {} quotient {}", r.k, num(r.ratio), num(r.quotient)));
    }
    out.check("ratio strictly increasing in k", rep.monotone());
    out.check(format!("quotients within [{}, {}]", rep.band.0, rep.band.1), rep.quotients_in_band());
    Ok(())
}
