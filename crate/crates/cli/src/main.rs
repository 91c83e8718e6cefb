//! `coherence`: command-line front end for the closed-coherence toolkit.

mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use closed_coherence::density::{coherence, metrics_report, von_neumann_entropy};
use closed_coherence::fit::{crude_decay_scale, estimate_floor, fit_decay, FloorWindow};
use closed_coherence::io::{self as cio, fmt_f64};
use closed_coherence::recurrence::{
    default_t_unit, log10_factorial, pair_list, poincare_log_bound, recurrence_law, DEFAULT_MAX_DENOMINATOR,
};
use closed_coherence::spin::{linear_grid, reduce_state_vector, sample_ensemble, ModelParams, SpinEnsemble, TimeGrid, ORACLE_CAP};
use closed_coherence::sweep::{run_cell, CellStats, PipelineConfig, SweepCell};
use closed_coherence::units::{UnitConvention, ETA_ELECTROMAGNETIC, ETA_SPIN_LI6};
use closed_coherence::{CoherenceTrace, Error};

use output::{emit, ensure_dir, exit, open_input, write_atomic, CliResult, Provenance};

#[derive(Parser, Debug)]
#[command(name = "coherence", version, about = "Coherence, decoherence and recurrence in closed spin ensembles")]
struct Cli {
    /// Seed for every random choice (ensemble geometry, sweep base seed).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Time-unit convention: `text` (T = η n^{ε/D} t) or `figure` (density doubled).
    #[arg(long, global = true, default_value_t = UnitConvention::Text)]
    unit_convention: UnitConvention,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output file (directory for `sweep`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coherence and entropy of a density matrix file.
    Metrics(MetricsArgs),
    /// Sample an ensemble and write its Ξ_re(t) trace.
    Simulate(SimulateArgs),
    /// Fit the stretched-exponential decay profile to a trace CSV.
    Fit(FitArgs),
    /// Run Monte Carlo cells over (N, D, ε).
    Sweep(SweepArgs),
    /// Poincaré recurrence bound, procedural or from the fitted law.
    Recurrence(RecurrenceArgs),
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Density matrix file (`dim N` then `i j re im` lines).
    input: PathBuf,
    /// Subsystem dimensions, e.g. `2,2`, for realistic quantities.
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Number of particles.
    #[arg(short = 'n', long = "particles", default_value_t = 20)]
    n: usize,
    /// Spatial dimension.
    #[arg(short = 'd', long = "dim", default_value_t = 1)]
    dim: usize,
    /// Interaction exponent ε.
    #[arg(short = 'e', long, default_value_t = 1.0)]
    epsilon: f64,
    /// Coupling strength η: a number, `em` or `li6`.
    #[arg(long, default_value = "1", value_parser = parse_eta)]
    eta: f64,
    /// Particle density n_ρ (before the unit-convention factor).
    #[arg(long, default_value_t = 1.0)]
    density: f64,
}

impl ModelArgs {
    fn params(&self, convention: UnitConvention) -> ModelParams {
        ModelParams::full_superposition(self.n, self.dim, self.epsilon)
            .with_eta(self.eta)
            .with_density(convention.effective_density(self.density))
    }

    fn record(&self, p: &mut Provenance, convention: UnitConvention) {
        p.push("N", self.n);
        p.push("D", self.dim);
        p.push("epsilon", fmt_f64(self.epsilon));
        p.push("eta", fmt_f64(self.eta));
        p.push("density", fmt_f64(self.density));
        p.push("effective_density", fmt_f64(convention.effective_density(self.density)));
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Read the ensemble from a file instead of sampling one.
    #[arg(long, conflicts_with_all = ["n", "dim", "epsilon", "eta", "density"])]
    ensemble: Option<PathBuf>,
    /// Also save the sampled ensemble.
    #[arg(long)]
    save_ensemble: Option<PathBuf>,
    /// Reference time scaling the default log+linear grid.
    #[arg(long, default_value_t = 1.0)]
    t_ref: f64,
    /// Use a uniform grid on [t_min, t_max] instead of the default grid.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 0.0, requires = "t_max")]
    t_min: f64,
    /// Points of the uniform grid.
    #[arg(long, default_value_t = 2048, requires = "t_max")]
    points: usize,
    /// Add a column with the deviation from the brute-force state vector.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Trace CSV with `t` and `xi_re` columns.
    input: PathBuf,
    /// Fixed floor c; by default averaged over the trace tail.
    #[arg(long)]
    floor: Option<f64>,
    /// Write `t,xi_re,model,residual` to this file.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Particle counts.
    #[arg(short = 'n', long = "particles", value_delimiter = ',', default_value = "100")]
    n: Vec<usize>,
    /// Dimensions.
    #[arg(short = 'd', long = "dim", value_delimiter = ',', default_value = "1")]
    dim: Vec<usize>,
    /// Interaction exponents.
    #[arg(short = 'e', long, value_delimiter = ',', default_value = "1")]
    epsilon: Vec<f64>,
    /// Runs per cell.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Base seed for run seeds; defaults to `--seed`.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Largest denominator for the recurrence bound.
    #[arg(long, default_value_t = DEFAULT_MAX_DENOMINATOR)]
    max_denominator: u64,
}

#[derive(Args, Debug)]
struct RecurrenceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also evaluate the fitted law.
    #[arg(long)]
    law: bool,
    /// Only evaluate the fitted law (no ensemble is sampled).
    #[arg(long)]
    law_only: bool,
    /// Round couplings to integer multiples of this base rate.
    #[arg(long)]
    round_couplings: Option<f64>,
    /// Override the time unit T_unit.
    #[arg(long)]
    t_unit: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_DENOMINATOR)]
    max_denominator: u64,
    /// Write the per-pair table to this CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_eta(s: &str) -> Result<f64, String> {
    match s {
        "em" => Ok(ETA_ELECTROMAGNETIC),
        "li6" => Ok(ETA_SPIN_LI6),
        _ => match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(format!("expected a positive number, `em` or `li6`, got {s:?}")),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(exit::OTHER);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Metrics(a) => cmd_metrics(a, out),
        Command::Simulate(a) => cmd_simulate(cli, a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Recurrence(a) => cmd_recurrence(cli, a, out),
    }
}

fn write_record(w: &mut dyn Write, prov: &Provenance, body: &str) -> closed_coherence::Result<()> {
    cio::write_comments(w, &prov.0)?;
    w.write_all(body.as_bytes())?;
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs, out: Option<&Path>) -> CliResult<()> {
    let rho = cio::read_density_matrix(open_input(&a.input)?)?;
    let mut body = format!(
        "dim={}\nxi={}\nS={}\n",
        rho.dim(),
        fmt_f64(coherence(&rho)?),
        fmt_f64(von_neumann_entropy(&rho)?)
    );
    if let Some(partition) = &a.partition {
        let r = metrics_report(&rho, partition)?;
        body.push_str(&format!(
            "xi_id={}\nxi_re={}\nS_id={}\nS_re={}\nI={}\nE={}\n",
            fmt_f64(r.xi_id),
            fmt_f64(r.xi_re),
            fmt_f64(r.s_id),
            fmt_f64(r.s_re),
            fmt_f64(r.mutual_information),
            fmt_f64(r.mutual_entanglement)
        ));
    }
    let mut prov = Provenance::new("metrics");
    prov.push("input", a.input.display());
    if let Some(p) = &a.partition {
        prov.push("partition", p.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
    }
    emit(out, |w| write_record(w, &prov, &body))
}

// Max elementwise deviation between closed-form and state-vector reduced
// matrices over all particles.
fn oracle_deviation(ens: &SpinEnsemble, t: f64) -> closed_coherence::Result<f64> {
    let psi = ens.brute_force_state(t, ORACLE_CAP)?;
    let mut worst: f64 = 0.0;
    for l in 0..ens.n() {
        let closed = ens.reduced_density(l, t)?.rho;
        worst = worst.max(closed.max_abs_diff(&reduce_state_vector(&psi, ens.n(), l)));
    }
    Ok(worst)
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: Option<&Path>) -> CliResult<()> {
    let conv = cli.unit_convention;
    let mut prov = Provenance::new("simulate");
    let ens = match &a.ensemble {
        Some(path) => {
            prov.push("ensemble", path.display());
            cio::read_ensemble(open_input(path)?)?
        }
        None => {
            a.model.record(&mut prov, conv);
            prov.push("seed", cli.seed);
            prov.push("unit_convention", conv);
            sample_ensemble(&a.model.params(conv), cli.seed)?
        }
    };
    if a.oracle && ens.n() > ORACLE_CAP {
        return Err(Error::Capacity(format!(
            "oracle limited to {ORACLE_CAP} particles, got {}",
            ens.n()
        ))
        .into());
    }
    let times = match a.t_max {
        Some(t_max) => {
            prov.push("grid", format!("uniform [{}, {}] x {}", a.t_min, t_max, a.points));
            linear_grid(a.t_min, t_max, a.points)
        }
        None => {
            let grid = TimeGrid::default().with_t_ref(a.t_ref);
            prov.push("grid", format!("{grid:?}"));
            grid.build()
        }
    };
    let trace = ens.xi_re_trace(&times)?;
    if let Some(path) = &a.save_ensemble {
        write_atomic(path, |w| cio::write_ensemble(&ens, w))?;
    }
    let oracle: Option<Vec<f64>> = if a.oracle {
        Some(times.iter().map(|&t| oracle_deviation(&ens, t)).collect::<closed_coherence::Result<_>>()?)
    } else {
        None
    };
    let extra: Vec<(&str, &[f64])> = oracle.as_deref().map(|o| vec![("oracle_dev", o)]).unwrap_or_default();
    emit(out, |w| cio::write_trace(&trace, &extra, &prov.0, w))
}

/// Floor from the default tail window, or 0 when the trace is too short
/// to contain it.
fn default_floor(trace: &CoherenceTrace) -> closed_coherence::Result<(f64, String)> {
    let (t1, t2) = FloorWindow::default().bounds(crude_decay_scale(trace));
    let end = *trace.times().last().unwrap_or(&0.0);
    if t2 <= end {
        Ok((estimate_floor(trace, t1, t2)?, format!("trapezoid average over [{t1}, {t2}]")))
    } else {
        eprintln!("warning: trace ends at {end} before the floor window [{t1}, {t2}]; using c = 0 (pass --floor to override)");
        Ok((0.0, "0 (trace shorter than floor window)".into()))
    }
}

fn cmd_fit(a: &FitArgs, out: Option<&Path>) -> CliResult<()> {
    let trace = cio::read_trace(open_input(&a.input)?)?;
    let (floor, how) = match a.floor {
        Some(c) => (c, "user".to_string()),
        None => default_floor(&trace)?,
    };
    let fit = fit_decay(&trace, floor)?;
    if !fit.converged {
        eprintln!("warning: refinement did not converge; reporting the linearised estimate");
    }
    let mut prov = Provenance::new("fit");
    prov.push("input", a.input.display());
    prov.push("floor", how);
    if let Some(path) = &a.residuals {
        let model: Vec<f64> = trace.times().iter().map(|&t| fit.model(t)).collect();
        let resid: Vec<f64> = trace.values().iter().zip(&model).map(|(v, m)| v - m).collect();
        write_atomic(path, |w| {
            cio::write_trace(&trace, &[("model", &model), ("residual", &resid)], &prov.0, w)
        })?;
    }
    let body = cio::format_fit_record(&fit);
    emit(out, |w| write_record(w, &prov, &body))
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> CliResult<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep-out"));
    ensure_dir(&dir)?;
    let base_seed = a.base_seed.unwrap_or(cli.seed);
    let config = PipelineConfig {
        unit_convention: cli.unit_convention,
        max_denominator: a.max_denominator,
        ..PipelineConfig::default()
    };
    let mut prov = Provenance::new("sweep");
    prov.push("N", join(&a.n));
    prov.push("D", join(&a.dim));
    prov.push("epsilon", join(&a.epsilon));
    prov.push("runs", a.runs);
    prov.push("base_seed", base_seed);
    prov.push("unit_convention", cli.unit_convention);
    prov.push("config", format!("{config:?}"));

    let mut cells: Vec<CellStats> = Vec::new();
    for &n in &a.n {
        for &d in &a.dim {
            for &eps in &a.epsilon {
                let cell = SweepCell::new(n, d, eps).with_runs(a.runs).with_base_seed(base_seed);
                if !cell.in_validated_domain() {
                    eprintln!("note: cell N={n} D={d} eps={eps} lies outside the validated domain");
                }
                let stats = run_cell(&cell, &config);
                eprintln!(
                    "N={n} D={d} eps={eps}: C={:.4} +- {:.4}, t_d={:.4}, c={:.3e}, {} ok / {} failed",
                    stats.c_exponent.mean,
                    stats.c_exponent.stderr,
                    stats.t_d.mean,
                    stats.c_floor.mean,
                    stats.succeeded,
                    stats.failed
                );
                cells.push(stats);
            }
        }
    }
    write_atomic(&dir.join("runs.csv"), |w| cio::write_sweep_runs(&cells, &prov.0, w))?;
    write_atomic(&dir.join("cells.csv"), |w| cio::write_sweep_cells(&cells, &prov.0, w))?;
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_recurrence(cli: &Cli, a: &RecurrenceArgs, out: Option<&Path>) -> CliResult<()> {
    let conv = cli.unit_convention;
    let m = &a.model;
    let mut prov = Provenance::new("recurrence");
    m.record(&mut prov, conv);
    let mut body = String::new();
    if a.law || a.law_only {
        let law = recurrence_law(m.n, conv.effective_density(m.density), m.eta, m.epsilon, m.dim as f64);
        body.push_str(&format!("log10_tp_law={}\n", fmt_f64(law)));
    }
    if !a.law_only {
        prov.push("seed", cli.seed);
        prov.push("max_denominator", a.max_denominator);
        let mut ens = sample_ensemble(&m.params(conv), cli.seed)?;
        if let Some(g0) = a.round_couplings {
            prov.push("round_couplings", fmt_f64(g0));
            ens = ens.with_commensurate_couplings(g0)?;
        }
        let t_unit = a.t_unit.unwrap_or_else(|| default_t_unit(&ens));
        let pairs = pair_list(&ens);
        let periods: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let est = poincare_log_bound(&periods, t_unit, a.max_denominator)?;
        if let Some(path) = &a.csv {
            write_atomic(path, |w| cio::write_recurrence_csv(&pairs, &est, &prov.0, w))?;
        }
        body.push_str(&format!("t_unit={}\nlog10_tp={}\n", fmt_f64(t_unit), fmt_f64(est.log10_tp)));
    }
    body.push_str(&format!("log10_factorial_N={}\n", fmt_f64(log10_factorial(m.n))));
    emit(out, |w| write_record(w, &prov, &body))
}
