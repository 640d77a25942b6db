//! Subcommand dispatch. Each command is a thin wrapper over library calls
//! that writes its artifacts into the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use qconserve::conservation::{conservation_check, conservation_check_block, finite_composition, kolmogorov_consistency};
use qconserve::instrument::{compose_povm, n_fold};
use qconserve::io::{
    fmt_f64, instrument_from_json, instrument_to_json, kernel_to_json, povm_from_json, povm_to_json, to_json,
    CertificateFile, ConservationFile,
};
use qconserve::models::{number_povm, photon_counting_instrument, quantum_counter_instrument, x_povm};
use qconserve::povm::{find_post_processing, DEFAULT_TOL};
use qconserve::simulate::{count_of, histogram, map_ensemble, ConvergenceStats, Statistic};
use qconserve::{minimality_witness, Instrument, Povm};

use crate::config::{Command, InitialState, ModelConfig, RunConfig, StatisticKind};
use crate::error::CliError;

/// Tolerance of the LP-based commands when none is configured.
pub const DEFAULT_LP_TOL: f64 = 1e-8;
pub const DEFAULT_OUT: &str = "qconserve-out";

/// What a successful run produced.
#[derive(Debug)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub message: String,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = to_json(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.out.join(name);
        let csv_err = |source| CliError::Csv { path: path.clone(), source };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn tol(&self, default: f64) -> f64 {
        self.cfg.tol.unwrap_or(default)
    }

    fn model(&self) -> &ModelConfig {
        self.cfg.model.as_ref().expect("finalized config has a model")
    }

    /// The model's instrument; custom instruments are checked at `tol`.
    fn instrument(&self, tol: f64) -> Result<Instrument, CliError> {
        Ok(match self.model() {
            ModelConfig::PhotonCounting { lambda_t, cutoff } => photon_counting_instrument(*lambda_t, *cutoff)?,
            ModelConfig::QuantumCounter(p) => quantum_counter_instrument(p.lambda_t, p.cutoff, p.m_max)?,
            ModelConfig::Custom { instrument, .. } => load_instrument(instrument, tol)?,
        })
    }

    /// The configured POVM, else the model's natural one together with the
    /// number of low levels on which it is exact.
    fn povm(&self, ins: &Instrument) -> Result<(Povm, Option<usize>), CliError> {
        if let Some(path) = &self.cfg.povm {
            return Ok((load_povm(path, DEFAULT_TOL)?, None));
        }
        match self.model() {
            ModelConfig::PhotonCounting { cutoff, .. } => Ok((number_povm(*cutoff), None)),
            ModelConfig::QuantumCounter(p) => {
                let ex = x_povm(ins.dim() - 1, &p.grid.realize()?)?;
                Ok((ex, Some(p.cutoff + 1)))
            }
            ModelConfig::Custom { .. } => unreachable!("finalize requires a POVM for custom models"),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load_povm(path: &Path, tol: f64) -> Result<Povm, CliError> {
    Ok(povm_from_json(&read(path)?, tol)?)
}

fn load_instrument(path: &Path, tol: f64) -> Result<Instrument, CliError> {
    Ok(instrument_from_json(&read(path)?, tol)?)
}

/// Runs a finalized configuration.
pub fn run(cfg: &RunConfig) -> Result<Summary, CliError> {
    let command = cfg.command.expect("finalized config has a command");
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    let mut ctx = Ctx { cfg, out, files: Vec::new() };
    let message = match command {
        Command::Validate => validate(&mut ctx),
        Command::Compose => compose(&mut ctx),
        Command::PovmOrder => povm_order(&mut ctx),
        Command::Conserve => conserve(&mut ctx),
        Command::InfiniteApprox => infinite_approx(&mut ctx),
        Command::Witness => witness(&mut ctx),
        Command::Simulate => simulate(&mut ctx),
    }?;
    Ok(Summary { files: ctx.files, message })
}

fn validate(ctx: &mut Ctx) -> Result<String, CliError> {
    let tol = ctx.tol(DEFAULT_TOL);
    let ins = ctx.instrument(f64::INFINITY)?;
    let defect = ins.normalization_defect();
    let mut valid = defect <= tol;
    let mut report = json!({
        "instrument": {"dim": ins.dim(), "outcomes": ins.len(), "normalization_defect": defect},
    });
    if let Some(path) = &ctx.cfg.povm {
        let e = load_povm(path, f64::INFINITY)?;
        let violations: Vec<String> = e.validate(tol).iter().map(|v| format!("{v:?}")).collect();
        valid &= violations.is_empty();
        report["povm"] = json!({"dim": e.dim(), "outcomes": e.len(), "violations": violations});
    }
    report["valid"] = json!(valid);
    report["tol"] = json!(tol);
    ctx.write_json("report.json", &report)?;
    ctx.write("instrument.json", &(instrument_to_json(&ins)? + "\n"))?;
    if valid {
        Ok(format!("valid at tol {tol:e}: {} outcomes on {} levels", ins.len(), ins.dim()))
    } else {
        Err(CliError::Verdict(format!("invalid at tol {tol:e} (normalization defect {defect:e})")))
    }
}

fn compose(ctx: &mut Ctx) -> Result<String, CliError> {
    let n = ctx.cfg.n.unwrap_or(2);
    let ins = ctx.instrument(DEFAULT_TOL)?;
    let composed = n_fold(&ins, n)?;
    let mut report = json!({
        "n": n,
        "outcomes": composed.len(),
        "dim": composed.dim(),
        "normalization_defect": composed.normalization_defect(),
    });
    ctx.write(&format!("instrument_{n}.json"), &(instrument_to_json(&composed)? + "\n"))?;
    if let Some(path) = &ctx.cfg.povm {
        let e = load_povm(path, DEFAULT_TOL)?;
        let joint = compose_povm(&composed, &e)?;
        report["composed_povm_outcomes"] = json!(joint.len());
        ctx.write("composed_povm.json", &(povm_to_json(&joint)? + "\n"))?;
    }
    ctx.write_json("report.json", &report)?;
    Ok(format!("{n}-fold composition: {} outcomes", composed.len()))
}

fn povm_order(ctx: &mut Ctx) -> Result<String, CliError> {
    let tol = ctx.tol(DEFAULT_LP_TOL);
    let (pa, pb) = ctx.cfg.povms.clone().expect("finalized config has two POVMs");
    let a = load_povm(&pa, DEFAULT_TOL)?;
    let b = load_povm(&pb, DEFAULT_TOL)?;
    let ab = find_post_processing(&a, &b, tol)?;
    let ba = find_post_processing(&b, &a, tol)?;
    let report = json!({
        "first_fuzzier": serde_json::to_value(CertificateFile::from_certificate(&ab, tol)).expect("serializable"),
        "second_fuzzier": serde_json::to_value(CertificateFile::from_certificate(&ba, tol)).expect("serializable"),
        "equivalent": ab.feasible && ba.feasible,
    });
    ctx.write_json("report.json", &report)?;
    let relation = match (ab.feasible, ba.feasible) {
        (true, true) => "equivalent",
        (true, false) => "first is strictly fuzzier",
        (false, true) => "second is strictly fuzzier",
        (false, false) => "incomparable",
    };
    Ok(format!("{relation} (residuals {:e}, {:e})", ab.residual, ba.residual))
}

fn conserve(ctx: &mut Ctx) -> Result<String, CliError> {
    let tol = ctx.tol(DEFAULT_LP_TOL);
    let ins = ctx.instrument(DEFAULT_TOL)?;
    let (e, keep) = ctx.povm(&ins)?;
    let rep = match keep {
        Some(keep) => conservation_check_block(&ins, &e, keep, tol)?,
        None => conservation_check(&ins, &e, tol)?,
    };
    let mut report = serde_json::to_value(ConservationFile::from_report(&rep, tol)).expect("serializable");
    report["compared_levels"] = json!(keep.unwrap_or(ins.dim()));
    ctx.write_json("report.json", &report)?;
    let msg = format!(
        "{} at tol {tol:e} (residuals {:e}, {:e})",
        if rep.conserved { "conserved" } else { "not conserved" },
        rep.cert_forward.residual,
        rep.cert_backward.residual
    );
    if ctx.cfg.expect_conserved && !rep.conserved {
        Err(CliError::Verdict(msg))
    } else {
        Ok(msg)
    }
}

fn infinite_approx(ctx: &mut Ctx) -> Result<String, CliError> {
    let n = ctx.cfg.n.unwrap_or(3);
    let ins = ctx.instrument(DEFAULT_TOL)?;
    let mut approximants = Vec::with_capacity(n);
    approximants.push(finite_composition(&ins, 1)?);
    for _ in 1..n {
        let next = compose_povm(&ins, approximants.last().expect("nonempty"))?;
        approximants.push(next);
    }
    let mut residuals = Vec::with_capacity(n.saturating_sub(1));
    for (i, e) in approximants.iter().enumerate() {
        ctx.write(&format!("E_{}.json", i + 1), &(povm_to_json(e)? + "\n"))?;
        if let Some(next) = approximants.get(i + 1) {
            residuals.push(kolmogorov_consistency(e, next)?);
        }
    }
    let rows = residuals.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), fmt_f64(*r)]);
    ctx.write_csv("consistency.csv", &["n", "residual"], rows)?;
    let max = residuals.iter().copied().fold(0.0, f64::max);
    ctx.write_json(
        "report.json",
        &json!({
            "n": n,
            "outcomes": approximants.iter().map(Povm::len).collect::<Vec<_>>(),
            "residuals": residuals,
            "max_residual": max,
        }),
    )?;
    Ok(format!("E_1..E_{n} written; max consistency residual {max:e}"))
}

fn witness(ctx: &mut Ctx) -> Result<String, CliError> {
    let tol = ctx.tol(DEFAULT_LP_TOL);
    let n = ctx.cfg.n.unwrap_or(2);
    let ins = ctx.instrument(DEFAULT_TOL)?;
    let (f, _) = ctx.povm(&ins)?;
    let chain = minimality_witness(&ins, &f, n, tol)?;
    for (k, (kernel, marginal)) in chain.kernels.iter().zip(&chain.marginals).enumerate() {
        ctx.write(&format!("kernel_{}.json", k + 1), &(kernel_to_json(kernel)? + "\n"))?;
        ctx.write(&format!("marginal_{}.json", k + 1), &(kernel_to_json(marginal)? + "\n"))?;
    }
    let verified = chain.verified();
    ctx.write_json(
        "report.json",
        &json!({
            "depth": chain.depth,
            "verified": verified,
            "residuals": chain.residuals,
            "marginal_residuals": chain.marginal_residuals,
            "tolerances": chain.tolerances,
        }),
    )?;
    let msg = format!("witness chain to depth {n} {}", if verified { "verified" } else { "NOT verified" });
    if verified {
        Ok(msg)
    } else {
        Err(CliError::Verdict(msg))
    }
}

fn simulate(ctx: &mut Ctx) -> Result<String, CliError> {
    let cfg = ctx.cfg;
    let (k, n_traj, seed) = (cfg.k.expect("k"), cfg.n_traj.expect("n_traj"), cfg.seed.expect("seed"));
    let ins = ctx.instrument(DEFAULT_TOL)?;
    let rho0 = cfg.initial_state.clone().unwrap_or(InitialState::Fock(0)).realize(ins.dim())?;
    let statistic = match cfg.statistic.unwrap_or(StatisticKind::Mk) {
        StatisticKind::Mk => Statistic::Mk,
        StatisticKind::Xk => Statistic::Xk { lambda_t: ctx.model().lambda_t().expect("finalize checked lambda_t") },
    };
    let runs = map_ensemble(&ins, &rho0, k, n_traj, seed, |t| {
        let m = t.outcomes.iter().map(count_of).sum::<qconserve::Result<u64>>()?;
        Ok((m, t.outcomes, t.probs))
    })?;

    let rows = runs.iter().enumerate().flat_map(|(i, (_, outcomes, probs))| {
        outcomes
            .iter()
            .zip(probs)
            .enumerate()
            .map(move |(step, (l, p))| vec![i.to_string(), (step + 1).to_string(), l.to_string(), fmt_f64(*p)])
    });
    ctx.write_csv("trajectories.csv", &["index", "step", "outcome", "prob"], rows)?;

    let counts = runs.iter().map(|r| r.0).collect();
    let stats = ConvergenceStats::from_counts(counts, k, statistic, cfg.reference.as_deref());
    let law = |l: &[(u64, f64)]| l.iter().map(|&(m, p)| json!([m, p])).collect::<Vec<_>>();
    ctx.write_json(
        "stats.json",
        &json!({
            "statistic": match statistic { Statistic::Mk => "M_k", Statistic::Xk { .. } => "X_k" },
            "k": k,
            "n_traj": n_traj,
            "seed": seed,
            "mean": stats.mean,
            "var": stats.variance,
            "tv": stats.tv_distance,
            "empirical": law(&stats.empirical),
            "reference": stats.reference.as_deref().map(law),
        }),
    )?;
    ctx.write("histogram.dat", &histogram_dat(&stats, cfg.bins.unwrap_or(40)))?;
    let tv = stats.tv_distance.map(|t| format!(", TV {t:.4}")).unwrap_or_default();
    Ok(format!("{n_traj} trajectories of {k} steps: mean {:.6}, var {:.6}{tv}", stats.mean, stats.variance))
}

/// Gnuplot-ready columns: `m frequency reference` for counts, bin edges with
/// counts and densities for `X_k`.
fn histogram_dat(stats: &ConvergenceStats, bins: usize) -> String {
    let mut out = Vec::new();
    match stats.statistic {
        Statistic::Mk => {
            writeln!(out, "# m frequency reference").unwrap();
            let max = stats.empirical.last().map_or(0, |e| e.0);
            let max = stats.reference.iter().flatten().map(|r| r.0).fold(max, u64::max);
            let lookup = |law: &[(u64, f64)], m| law.iter().find(|e| e.0 == m).map_or(0.0, |e| e.1);
            for m in 0..=max {
                let reference = stats.reference.as_deref().map_or(f64::NAN, |r| lookup(r, m));
                writeln!(out, "{m} {} {}", fmt_f64(lookup(&stats.empirical, m)), fmt_f64(reference)).unwrap();
            }
        }
        Statistic::Xk { .. } => {
            writeln!(out, "# lo hi center count density").unwrap();
            let top = stats.values.iter().copied().fold(0.0, f64::max);
            let hi = if top > 0.0 { top * (1.0 + 1e-12) } else { 1.0 };
            for b in histogram(&stats.values, bins, 0.0, hi) {
                let center = 0.5 * (b.lo + b.hi);
                writeln!(out, "{} {} {} {} {}", fmt_f64(b.lo), fmt_f64(b.hi), fmt_f64(center), b.count, fmt_f64(b.density))
                    .unwrap();
            }
        }
    }
    String::from_utf8(out).expect("ASCII output")
}
