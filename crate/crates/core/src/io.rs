//! Text formats for states, ensembles, traces and sweep results.
//!
//! Floats are written with 17 significant digits so every file reads back
//! bit-exact. Lines starting with `#` are comments (provenance and schema
//! tags) and are skipped by every reader.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::recurrence::RecurrenceEstimate;
use crate::spin::{CoherenceTrace, ModelParams, SpinEnsemble};
use crate::sweep::CellStats;

pub const SWEEP_RUNS_SCHEMA: &str = "sweep-runs/1";
pub const SWEEP_CELLS_SCHEMA: &str = "sweep-cells/1";
pub const RECURRENCE_SCHEMA: &str = "recurrence-pairs/1";

/// Full-precision float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(e: std::io::Error) -> Error {
    Error::from(e)
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines<R: BufRead>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push((i + 1, t.to_string()));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what}: {tok:?}")))
}

/// Write `# key: value` provenance lines.
pub fn write_comments<W: Write + ?Sized>(w: &mut W, comments: &[(String, String)]) -> Result<()> {
    for (k, v) in comments {
        writeln!(w, "# {k}: {v}").map_err(io_err)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// density matrices

/// `dim N` followed by `N²` row-major lines `i j re im`.
pub fn write_density_matrix<W: Write + ?Sized>(rho: &DensityMatrix, w: &mut W) -> Result<()> {
    let n = rho.dim();
    writeln!(w, "dim {n}").map_err(io_err)?;
    for i in 0..n {
        for j in 0..n {
            let z = rho.entry(i, j);
            writeln!(w, "{i} {j} {} {}", fmt_f64(z.re), fmt_f64(z.im)).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Parse and validate a density matrix; non-Hermitian input is rejected.
pub fn read_density_matrix<R: BufRead>(r: R) -> Result<DensityMatrix> {
    let lines = data_lines(r)?;
    let (first_line, header) = lines.first().ok_or_else(|| Error::parse(1, "empty file"))?;
    let dim: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["dim", n] => parse_num(n, *first_line, "dimension")?,
        _ => return Err(Error::parse(*first_line, "expected `dim N`")),
    };
    if dim == 0 {
        return Err(Error::parse(*first_line, "dimension must be positive"));
    }
    if lines.len() - 1 != dim * dim {
        return Err(Error::parse(
            *first_line,
            format!("expected {} entries, found {}", dim * dim, lines.len() - 1),
        ));
    }
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    let mut seen = vec![false; dim * dim];
    for (ln, text) in &lines[1..] {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::parse(*ln, "expected `i j re im`"));
        }
        let i: usize = parse_num(toks[0], *ln, "row index")?;
        let j: usize = parse_num(toks[1], *ln, "column index")?;
        if i >= dim || j >= dim {
            return Err(Error::parse(*ln, format!("index ({i}, {j}) out of range")));
        }
        if std::mem::replace(&mut seen[i * dim + j], true) {
            return Err(Error::parse(*ln, format!("duplicate entry ({i}, {j})")));
        }
        m[(i, j)] = C64::new(parse_num(toks[2], *ln, "real part")?, parse_num(toks[3], *ln, "imaginary part")?);
    }
    DensityMatrix::new(m)
}

// ---------------------------------------------------------------------------
// ensembles

/// Header lines `key value` then `positions` rows and `amplitudes` rows
/// (`re_a im_a re_b im_b`).
pub fn write_ensemble<W: Write + ?Sized>(ens: &SpinEnsemble, w: &mut W) -> Result<()> {
    let p = ens.params();
    let mut put = |s: String| writeln!(w, "{s}").map_err(io_err);
    put("# spin ensemble v1".into())?;
    put(format!("N {}", p.n_particles))?;
    put(format!("D {}", p.dimension))?;
    put(format!("epsilon {}", fmt_f64(p.epsilon)))?;
    put(format!("eta {}", fmt_f64(p.eta)))?;
    put(format!("density {}", fmt_f64(p.density)))?;
    put(format!("seed {}", ens.seed()))?;
    put("positions".into())?;
    for pos in ens.positions() {
        put(pos.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" "))?;
    }
    put("amplitudes".into())?;
    for (a, b) in &p.amplitudes {
        put(format!("{} {} {} {}", fmt_f64(a.re), fmt_f64(a.im), fmt_f64(b.re), fmt_f64(b.im)))?;
    }
    Ok(())
}

pub fn read_ensemble<R: BufRead>(r: R) -> Result<SpinEnsemble> {
    let lines = data_lines(r)?;
    let mut it = lines.iter();
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (ln, text) = it.next().ok_or_else(|| Error::parse(0, format!("missing `{key}`")))?;
        match text.split_once(' ') {
            Some((k, v)) if k == key => Ok((*ln, v.trim().to_string())),
            _ => Err(Error::parse(*ln, format!("expected `{key} <value>`"))),
        }
    };
    let (ln, v) = header("N")?;
    let n: usize = parse_num(&v, ln, "N")?;
    let (ln, v) = header("D")?;
    let d: usize = parse_num(&v, ln, "D")?;
    let (ln, v) = header("epsilon")?;
    let epsilon: f64 = parse_num(&v, ln, "epsilon")?;
    let (ln, v) = header("eta")?;
    let eta: f64 = parse_num(&v, ln, "eta")?;
    let (ln, v) = header("density")?;
    let density: f64 = parse_num(&v, ln, "density")?;
    let (ln, v) = header("seed")?;
    let seed: u64 = parse_num(&v, ln, "seed")?;

    let rest: Vec<&(usize, String)> = lines.iter().skip(6).collect();
    if rest.len() != 2 * n + 2 || rest[0].1 != "positions" || rest[n + 1].1 != "amplitudes" {
        let ln = rest.first().map(|l| l.0).unwrap_or(0);
        return Err(Error::parse(ln, "expected `positions` block of N rows then `amplitudes` block of N rows"));
    }
    let mut positions = Vec::with_capacity(n);
    for (ln, text) in rest[1..=n].iter().map(|l| (l.0, &l.1)) {
        let row = text
            .split_whitespace()
            .map(|t| parse_num::<f64>(t, ln, "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != d {
            return Err(Error::parse(ln, format!("expected {d} coordinates")));
        }
        positions.push(row);
    }
    let mut amplitudes = Vec::with_capacity(n);
    for (ln, text) in rest[n + 2..].iter().map(|l| (l.0, &l.1)) {
        let v = text
            .split_whitespace()
            .map(|t| parse_num::<f64>(t, ln, "amplitude"))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 4 {
            return Err(Error::parse(ln, "expected `re_a im_a re_b im_b`"));
        }
        amplitudes.push((C64::new(v[0], v[1]), C64::new(v[2], v[3])));
    }
    let params = ModelParams {
        n_particles: n,
        dimension: d,
        epsilon,
        eta,
        density,
        amplitudes,
    };
    SpinEnsemble::from_positions(params, positions, seed)
}

// ---------------------------------------------------------------------------
// traces

/// CSV with header `t,xi_re` plus any extra columns.
pub fn write_trace<W: Write + ?Sized>(
    trace: &CoherenceTrace,
    extra: &[(&str, &[f64])],
    comments: &[(String, String)],
    w: &mut W,
) -> Result<()> {
    write_comments(w, comments)?;
    let mut header = String::from("t,xi_re");
    for (name, col) in extra {
        if col.len() != trace.len() {
            return Err(Error::arg(format!("column {name} has {} rows, trace has {}", col.len(), trace.len())));
        }
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}").map_err(io_err)?;
    for i in 0..trace.len() {
        let mut row = format!("{},{}", fmt_f64(trace.times()[i]), fmt_f64(trace.values()[i]));
        for (_, col) in extra {
            row.push(',');
            row.push_str(&fmt_f64(col[i]));
        }
        writeln!(w, "{row}").map_err(io_err)?;
    }
    Ok(())
}

/// Read the `t` and `xi_re` columns of a trace CSV.
pub fn read_trace<R: BufRead>(r: R) -> Result<CoherenceTrace> {
    let lines = data_lines(r)?;
    let (hl, header) = lines.first().ok_or_else(|| Error::parse(1, "empty trace file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let ti = cols.iter().position(|c| *c == "t").ok_or_else(|| Error::parse(*hl, "missing `t` column"))?;
    let xi = cols
        .iter()
        .position(|c| *c == "xi_re")
        .ok_or_else(|| Error::parse(*hl, "missing `xi_re` column"))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (ln, text) in &lines[1..] {
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(*ln, format!("expected {} fields", cols.len())));
        }
        times.push(parse_num(f[ti], *ln, "time")?);
        values.push(parse_num(f[xi], *ln, "value")?);
    }
    CoherenceTrace::new(times, values).map_err(|e| Error::parse(*hl, e.to_string()))
}

// ---------------------------------------------------------------------------
// fit records

/// Flat `key=value` record.
pub fn format_fit_record(fit: &FitResult) -> String {
    format!(
        "t_d={}\nC={}\nc={}\nchi_sq={}\nweight={}\nconverged={}\n",
        fmt_f64(fit.t_d),
        fmt_f64(fit.c_exponent),
        fmt_f64(fit.c_floor),
        fmt_f64(fit.chi_sq),
        fmt_f64(fit.weight),
        fit.converged
    )
}

pub fn parse_fit_record(text: &str) -> Result<FitResult> {
    let mut fit = FitResult {
        t_d: f64::NAN,
        c_exponent: f64::NAN,
        c_floor: f64::NAN,
        chi_sq: f64::NAN,
        weight: f64::NAN,
        converged: false,
        iterations: 0,
    };
    let mut seen = 0;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(ln, "expected key=value"))?;
        match k.trim() {
            "t_d" => fit.t_d = parse_num(v, ln, k)?,
            "C" => fit.c_exponent = parse_num(v, ln, k)?,
            "c" => fit.c_floor = parse_num(v, ln, k)?,
            "chi_sq" => fit.chi_sq = parse_num(v, ln, k)?,
            "weight" => fit.weight = parse_num(v, ln, k)?,
            "converged" => fit.converged = parse_num(v, ln, k)?,
            _ => continue,
        }
        seen += 1;
    }
    if seen < 6 {
        return Err(Error::parse(0, "fit record is missing fields"));
    }
    Ok(fit)
}

// ---------------------------------------------------------------------------
// recurrence

/// One row per pair plus a trailing summary row.
pub fn write_recurrence_csv<W: Write + ?Sized>(
    pairs: &[(usize, usize, f64)],
    est: &RecurrenceEstimate,
    comments: &[(String, String)],
    w: &mut W,
) -> Result<()> {
    if pairs.len() != est.rationals.len() {
        return Err(Error::arg("pair list and rationals differ in length"));
    }
    writeln!(w, "# schema: {RECURRENCE_SCHEMA}").map_err(io_err)?;
    write_comments(w, comments)?;
    writeln!(w, "kind,i,j,period,n,d,log10_tp").map_err(io_err)?;
    for ((i, j, period), (n, d)) in pairs.iter().zip(&est.rationals) {
        writeln!(w, "pair,{i},{j},{},{n},{d},", fmt_f64(*period)).map_err(io_err)?;
    }
    writeln!(w, "summary,,,{},,,{}", fmt_f64(est.t_unit), fmt_f64(est.log10_tp)).map_err(io_err)?;
    Ok(())
}

/// Inverse of [`write_recurrence_csv`].
/// `(i, j, period)` rows of a recurrence table.
pub type PairRows = Vec<(usize, usize, f64)>;

pub fn read_recurrence_csv<R: BufRead>(r: R) -> Result<(PairRows, RecurrenceEstimate)> {
    let lines = data_lines(r)?;
    let mut pairs = Vec::new();
    let mut rationals = Vec::new();
    let mut summary = None;
    for (ln, text) in lines.iter().skip(1) {
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(*ln, "expected 7 fields"));
        }
        match f[0] {
            "pair" => {
                pairs.push((parse_num(f[1], *ln, "i")?, parse_num(f[2], *ln, "j")?, parse_num(f[3], *ln, "period")?));
                rationals.push((parse_num(f[4], *ln, "n")?, parse_num(f[5], *ln, "d")?));
            }
            "summary" => summary = Some((parse_num(f[3], *ln, "t_unit")?, parse_num(f[6], *ln, "log10_tp")?)),
            other => return Err(Error::parse(*ln, format!("unknown row kind {other:?}"))),
        }
    }
    let (t_unit, log10_tp) = summary.ok_or_else(|| Error::parse(0, "missing summary row"))?;
    Ok((pairs, RecurrenceEstimate { t_unit, rationals, log10_tp }))
}

// ---------------------------------------------------------------------------
// sweeps

pub const SWEEP_RUNS_HEADER: &str = "N,D,epsilon,run,seed,t_d,C,c,chi_sq,weight,log10_tp,converged";
pub const SWEEP_CELLS_HEADER: &str =
    "N,D,epsilon,runs,succeeded,failed,t_d_mean,t_d_std,C_mean,C_std,C_stderr,c_mean,c_std,log10_tp_mean,validated_domain";

/// One row of the per-run sweep table. Failed runs carry NaN fit fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRunRow {
    pub n_particles: usize,
    pub dimension: usize,
    pub epsilon: f64,
    pub run: usize,
    pub seed: u64,
    pub t_d: f64,
    pub c_exponent: f64,
    pub c_floor: f64,
    pub chi_sq: f64,
    pub weight: f64,
    pub log10_tp: f64,
    pub converged: bool,
}

pub fn sweep_run_rows(stats: &CellStats) -> Vec<SweepRunRow> {
    stats
        .records
        .iter()
        .map(|r| {
            let base = SweepRunRow {
                n_particles: stats.cell.n_particles,
                dimension: stats.cell.dimension,
                epsilon: stats.cell.epsilon,
                run: r.run,
                seed: r.seed,
                t_d: f64::NAN,
                c_exponent: f64::NAN,
                c_floor: f64::NAN,
                chi_sq: f64::NAN,
                weight: f64::NAN,
                log10_tp: f64::NAN,
                converged: false,
            };
            match &r.outcome {
                Ok(o) => SweepRunRow {
                    t_d: o.fit.t_d,
                    c_exponent: o.fit.c_exponent,
                    c_floor: o.fit.c_floor,
                    chi_sq: o.fit.chi_sq,
                    weight: o.fit.weight,
                    log10_tp: o.log10_tp,
                    converged: o.fit.converged,
                    ..base
                },
                Err(_) => base,
            }
        })
        .collect()
}

pub fn write_sweep_runs<W: Write + ?Sized>(cells: &[CellStats], comments: &[(String, String)], w: &mut W) -> Result<()> {
    writeln!(w, "# schema: {SWEEP_RUNS_SCHEMA}").map_err(io_err)?;
    write_comments(w, comments)?;
    writeln!(w, "{SWEEP_RUNS_HEADER}").map_err(io_err)?;
    for stats in cells {
        for r in &stats.records {
            if let Err(msg) = &r.outcome {
                writeln!(w, "# run {} seed {} failed: {msg}", r.run, r.seed).map_err(io_err)?;
            }
        }
        for row in sweep_run_rows(stats) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                row.n_particles,
                row.dimension,
                fmt_f64(row.epsilon),
                row.run,
                row.seed,
                fmt_f64(row.t_d),
                fmt_f64(row.c_exponent),
                fmt_f64(row.c_floor),
                fmt_f64(row.chi_sq),
                fmt_f64(row.weight),
                fmt_f64(row.log10_tp),
                row.converged
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn read_sweep_runs<R: BufRead>(r: R) -> Result<Vec<SweepRunRow>> {
    let lines = data_lines(r)?;
    let (hl, header) = lines.first().ok_or_else(|| Error::parse(1, "empty sweep file"))?;
    if header != SWEEP_RUNS_HEADER {
        return Err(Error::parse(*hl, "unexpected sweep header"));
    }
    lines[1..]
        .iter()
        .map(|(ln, text)| {
            let f: Vec<&str> = text.split(',').collect();
            if f.len() != 12 {
                return Err(Error::parse(*ln, "expected 12 fields"));
            }
            Ok(SweepRunRow {
                n_particles: parse_num(f[0], *ln, "N")?,
                dimension: parse_num(f[1], *ln, "D")?,
                epsilon: parse_num(f[2], *ln, "epsilon")?,
                run: parse_num(f[3], *ln, "run")?,
                seed: parse_num(f[4], *ln, "seed")?,
                t_d: parse_num(f[5], *ln, "t_d")?,
                c_exponent: parse_num(f[6], *ln, "C")?,
                c_floor: parse_num(f[7], *ln, "c")?,
                chi_sq: parse_num(f[8], *ln, "chi_sq")?,
                weight: parse_num(f[9], *ln, "weight")?,
                log10_tp: parse_num(f[10], *ln, "log10_tp")?,
                converged: parse_num(f[11], *ln, "converged")?,
            })
        })
        .collect()
}

pub fn write_sweep_cells<W: Write + ?Sized>(cells: &[CellStats], comments: &[(String, String)], w: &mut W) -> Result<()> {
    writeln!(w, "# schema: {SWEEP_CELLS_SCHEMA}").map_err(io_err)?;
    write_comments(w, comments)?;
    writeln!(w, "{SWEEP_CELLS_HEADER}").map_err(io_err)?;
    for s in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.cell.n_particles,
            s.cell.dimension,
            fmt_f64(s.cell.epsilon),
            s.cell.runs,
            s.succeeded,
            s.failed,
            fmt_f64(s.t_d.mean),
            fmt_f64(s.t_d.std),
            fmt_f64(s.c_exponent.mean),
            fmt_f64(s.c_exponent.std),
            fmt_f64(s.c_exponent.stderr),
            fmt_f64(s.c_floor.mean),
            fmt_f64(s.c_floor.std),
            fmt_f64(s.mean_log10_tp),
            s.cell.in_validated_domain()
        )
        .map_err(io_err)?;
    }
    Ok(())
}
