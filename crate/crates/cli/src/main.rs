//! `tickwarp` command line: file-in, file-out wrappers around the library.
//!
//! Every table goes out as CSV with a `#` header carrying the tool version,
//! an optional timestamp and the full argument echo. `--json` adds a JSON
//! lines mirror next to each table.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tickwarp::acf::{acf_slotted, AcfOptions, MarkTransform, MeanRemoval, Weighting};
use tickwarp::fit::fit_theta;
use tickwarp::ingest::{
    compute_returns, compute_velocities, parse_clock, parse_ticks, session_stats, write_ticks, Calendar,
    Day, FormatSpec, SessionSpec, SessionStats,
};
use tickwarp::kernel::{
    lag_distribution_with_cells, omega_curve, predict_cy, predict_cy_pair_weighted, AcfTable, DEFAULT_CELLS,
    DEFAULT_GRID_N,
};
use tickwarp::numeric::log_grid;
use tickwarp::pattern::{build_pattern, normalize_pattern, Averaging, IntradayPattern};
use tickwarp::synth::{gen_seasonal_days, validate_relation, AcfKind, SynthConfig, ValidationOptions};
use tickwarp::table::{Table, Value};
use tickwarp::theta::{Shape, ThetaKind, ThetaModel};
use tickwarp::warp::WarpFn;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "tickwarp", version, about = "Intraday seasonality and time deformation for tick data")]
struct Cli {
    /// Also write every table as JSON lines (`<output>.jsonl`, or stdout).
    #[arg(long, global = true)]
    json: bool,
    /// Omit the timestamp header line so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse raw transactions into the canonical tick file.
    Ingest(IngestArgs),
    /// Bin inter-trade intervals and return volatility over the session.
    Pattern(PatternArgs),
    /// Fit a parametric θ to a pattern table.
    Fit(FitArgs),
    /// Map tick times through the deformation τ.
    Warp(WarpArgs),
    /// Slotted autocorrelation of returns.
    Acf(AcfArgs),
    /// Lag distribution of Δτ for one clock lag.
    Rho(RhoArgs),
    /// ω(dt) on a logarithmic grid.
    Omega(OmegaArgs),
    /// Predicted clock-time ACF from a deformed-time ACF table.
    Predict(PredictArgs),
    /// Run the synthetic laboratory from a TOML config.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Serialize)]
struct Session {
    /// Session opening time, hh:mm:ss.
    #[arg(long, default_value = "09:00:00")]
    open: String,
    /// Session length in seconds.
    #[arg(long, default_value_t = 25200.0)]
    length: f64,
}

impl Session {
    fn spec(&self) -> Result<SessionSpec> {
        let open = parse_clock(&self.open).map_err(|e| anyhow!("--open: {e}"))?;
        Ok(SessionSpec::new(open, self.length)?)
    }
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Canonical tick file to write.
    #[arg(long)]
    output: PathBuf,
    /// `key = value` format descriptor (delimiter, columns, header, fail_fast).
    #[arg(long)]
    format: Option<PathBuf>,
    /// Per-date session overrides, `yyyymmdd,hh:mm:ss,length` lines.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Where to write the summary table; stdout if absent.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[command(flatten)]
    session: Session,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Marks {
    Returns,
    Velocities,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AveragingArg {
    Pooled,
    PerDay,
}

#[derive(Args, Debug, Serialize)]
struct PatternArgs {
    /// Canonical tick file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1200.0)]
    bin_width: f64,
    #[arg(long, value_enum, default_value_t = AveragingArg::Pooled)]
    averaging: AveragingArg,
    /// Divide by the session-wide means.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value_t = Marks::Returns)]
    marks: Marks,
    #[command(flatten)]
    session: Session,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum KindArg {
    Quadratic,
    Rational,
    Constant,
}

impl From<KindArg> for ThetaKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Quadratic => ThetaKind::Quadratic,
            KindArg::Rational => ThetaKind::Rational,
            KindArg::Constant => ThetaKind::Constant,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// Pattern table written by `pattern` (not normalized).
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Session mean inter-trade time, seconds.
    #[arg(long, conflicts_with = "ticks", required_unless_present = "ticks")]
    mean_dt: Option<f64>,
    /// Canonical tick file to take the mean inter-trade time from.
    #[arg(long)]
    ticks: Option<PathBuf>,
    /// Model record to write.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    session: Session,
}

#[derive(Args, Debug, Serialize)]
struct WarpArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Session opening time, hh:mm:ss; the length comes from the model.
    #[arg(long, default_value = "09:00:00")]
    open: String,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TransformArg {
    Identity,
    Abs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MeanArg {
    Global,
    PerDay,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum WeightingArg {
    Pooled,
    ClockUniform,
}

#[derive(Args, Debug, Serialize)]
struct AcfArgs {
    /// Canonical tick file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Warp the ticks through this model first.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Slot width in seconds; defaults to the mean inter-trade time.
    #[arg(long)]
    slot_width: Option<f64>,
    #[arg(long, default_value_t = 600.0)]
    max_lag: f64,
    #[arg(long, value_enum, default_value_t = Marks::Returns)]
    marks: Marks,
    #[arg(long, value_enum, default_value_t = TransformArg::Identity)]
    transform: TransformArg,
    #[arg(long, value_enum, default_value_t = MeanArg::Global)]
    mean: MeanArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Pooled)]
    weighting: WeightingArg,
    /// Stratum width for clock-uniform weighting, seconds.
    #[arg(long, default_value_t = 300.0)]
    stratum_width: f64,
    /// Report covariances instead of correlations.
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    session: Session,
}

#[derive(Args, Debug, Serialize)]
struct RhoArgs {
    #[arg(long)]
    model: PathBuf,
    /// Clock-time lag, seconds.
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    cells: usize,
    /// Sampling points in t.
    #[arg(long, default_value_t = DEFAULT_GRID_N)]
    grid_n: usize,
}

#[derive(Args, Debug, Serialize)]
struct GridArgs {
    /// Number of lags.
    #[arg(long, default_value_t = 100)]
    grid: usize,
    /// Smallest lag; defaults to mean_dt / 10.
    #[arg(long)]
    min: Option<f64>,
    /// Largest lag; defaults to T / 4.
    #[arg(long)]
    max: Option<f64>,
}

impl GridArgs {
    fn lags(&self, m: &ThetaModel) -> Result<Vec<f64>> {
        let lo = self.min.unwrap_or(m.mean_dt() / 10.0);
        let hi = self.max.unwrap_or(m.length() / 4.0);
        if self.grid < 2 || !(lo > 0.0 && lo < hi && hi < m.length()) {
            bail!("lag grid needs at least 2 points and 0 < min < max < T (got {} points on [{lo}, {hi}])", self.grid);
        }
        Ok(log_grid(lo, hi, self.grid))
    }
}

#[derive(Args, Debug, Serialize)]
struct OmegaArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PredictWeighting {
    /// Every clock time t weighs the same.
    Uniform,
    /// Weight by the intensity at both ends of the pair.
    Pair,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Table of the deformed-time ACF, columns `lag` and `value`.
    #[arg(long)]
    cx: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PredictWeighting::Uniform)]
    weighting: PredictWeighting,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    /// TOML configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Shared output settings.
struct Out {
    json: bool,
    timestamp: bool,
    command: &'static str,
    echo: Vec<String>,
}

impl Out {
    fn new<A: Serialize>(cli: &Cli, command: &'static str, args: &A) -> Result<Self> {
        let mut echo = Vec::new();
        flatten_echo("", &toml::Value::try_from(args)?, &mut echo);
        Ok(Self { json: cli.json, timestamp: !cli.no_timestamp, command, echo })
    }

    fn preamble(&self) -> Vec<String> {
        let mut lines = vec![format!("version = {VERSION}"), format!("command = {}", self.command)];
        if self.timestamp {
            lines.push(format!("generated = {}", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)));
        }
        lines.extend(self.echo.iter().cloned());
        lines
    }

    fn header_comment(&self) -> String {
        self.preamble().iter().map(|l| format!("# {l}\n")).collect()
    }

    fn table(&self, table: &Table, path: Option<&Path>, extra: &[String]) -> Result<()> {
        let mut pre = self.preamble();
        pre.extend(extra.iter().cloned());
        match path {
            Some(p) => {
                write_atomic(p, |w| table.write_csv(w, &pre))?;
                if self.json {
                    let mut name = p.as_os_str().to_owned();
                    name.push(".jsonl");
                    write_atomic(Path::new(&name), |w| table.write_json_lines(w, &pre))?;
                }
            }
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                if self.json {
                    table.write_json_lines(&mut lock, &pre)?;
                } else {
                    table.write_csv(&mut lock, &pre)?;
                }
                lock.flush()?;
            }
        }
        Ok(())
    }

    fn ticks(&self, days: &[Day], spec: &SessionSpec, path: &Path) -> Result<()> {
        let header = self.header_comment();
        write_atomic(path, |w| {
            w.write_all(header.as_bytes())?;
            write_ticks(w, days, spec)
        })
    }
}

fn flatten_echo(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_echo(&key, v, out);
            }
        }
        toml::Value::String(s) => out.push(format!("arg.{prefix} = {s}")),
        other => out.push(format!("arg.{prefix} = {other}")),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<ThetaModel> {
    ThetaModel::from_record(&read_text(path)?).with_context(|| format!("model {}", path.display()))
}

fn read_canonical(path: &Path, spec: &SessionSpec) -> Result<Vec<Day>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = parse_ticks(BufReader::new(file), spec, &FormatSpec::default(), None)?;
    for d in &parsed.report.diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    if parsed.days.is_empty() {
        bail!("{} holds no ticks inside the session", path.display());
    }
    Ok(parsed.days)
}

fn marks(days: &[Day], kind: Marks) -> Vec<tickwarp::ingest::ReturnPoint> {
    match kind {
        Marks::Returns => compute_returns(days).points,
        Marks::Velocities => compute_velocities(days).points,
    }
}

fn run_ingest(out: &Out, a: &IngestArgs) -> Result<()> {
    let spec = a.session.spec()?;
    let format = match &a.format {
        Some(p) => FormatSpec::from_descriptor(&read_text(p)?)?,
        None => FormatSpec::default(),
    };
    let calendar = match &a.calendar {
        Some(p) => Some(Calendar::parse(&read_text(p)?)?),
        None => None,
    };
    let file = fs::File::open(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let parsed = parse_ticks(BufReader::new(file), &spec, &format, calendar.as_ref())?;
    for d in &parsed.report.diagnostics {
        log::warn!("{}:{}: {}", a.input.display(), d.line, d.message);
    }
    out.ticks(&parsed.days, &spec, &a.output)?;

    let r = &parsed.report;
    let stats = session_stats(&parsed.days).ok();
    let mut t = Table::new(
        "ingest",
        &["rows_read", "ticks_kept", "out_of_session", "excluded_days", "diagnostics", "n_days", "n_transactions", "mean_dt"],
    );
    t.push(vec![
        (r.rows_read as u64).into(),
        (parsed.n_ticks() as u64).into(),
        (r.out_of_session as u64).into(),
        (r.excluded_days.len() as u64).into(),
        (r.diagnostics.len() as u64).into(),
        stats.map_or(Value::Missing, |s| (s.n_days as u64).into()),
        stats.map_or(Value::Missing, |s| (s.n_transactions as u64).into()),
        stats.map(|s| s.mean_dt).into(),
    ]);
    let extra: Vec<String> = r.excluded_days.iter().map(|d| format!("excluded {}", d.format("%Y%m%d"))).collect();
    out.table(&t, a.stats.as_deref(), &extra)
}

fn run_pattern(out: &Out, a: &PatternArgs) -> Result<()> {
    let spec = a.session.spec()?;
    let days = read_canonical(&a.input, &spec)?;
    let averaging = match a.averaging {
        AveragingArg::Pooled => Averaging::Pooled,
        AveragingArg::PerDay => Averaging::PerDay,
    };
    let mut p = build_pattern(&days, &marks(&days, a.marks), a.bin_width, &spec, averaging)?;
    if a.normalize {
        p = normalize_pattern(&p)?;
    }
    out.table(&p.to_table(), a.output.as_deref(), &[])
}

fn run_fit(out: &Out, a: &FitArgs) -> Result<()> {
    let spec = a.session.spec()?;
    let table = Table::read_csv(&read_text(&a.pattern)?)?;
    let pattern = IntradayPattern::from_table(&table)?;
    let stats = match (a.mean_dt, &a.ticks) {
        (Some(m), _) => SessionStats { n_transactions: 0, mean_dt: m, n_days: 0 },
        (None, Some(p)) => session_stats(&read_canonical(p, &spec)?)?,
        (None, None) => bail!("one of --mean-dt or --ticks is required"),
    };
    let report = fit_theta(&pattern, a.kind.into(), &stats, &spec)?;
    let header = out.header_comment();
    let record = report.model.to_record();
    let fit_lines = format!(
        "# objective = {}\n# residual_norm = {}\n# iterations = {}\n# restarts = {}\n",
        report.objective, report.residual_norm, report.iterations, report.restarts
    );
    write_atomic(&a.output, |w| {
        w.write_all(header.as_bytes())?;
        w.write_all(fit_lines.as_bytes())?;
        w.write_all(record.as_bytes())
    })?;
    if out.json {
        let mut name = a.output.as_os_str().to_owned();
        name.push(".jsonl");
        let mut t = Table::new("fit", &["iteration", "objective"]);
        for (i, f) in report.history.iter().enumerate() {
            t.push(vec![(i as u64).into(), (*f).into()]);
        }
        let mut t = t.param("kind", report.model.kind()).param("a", report.model.a());
        match report.model.shape() {
            Shape::Quadratic { t1, t2 } => t = t.param("t1", t1).param("t2", t2),
            Shape::Rational { p, q } => t = t.param("p", p).param("q", q),
            Shape::Constant => {}
        }
        write_atomic(Path::new(&name), |w| t.write_json_lines(w, &out.preamble()))?;
    }
    log::info!("fit {}: residual {:.4} s after {} iterations", report.model.kind(), report.residual_norm, report.iterations);
    Ok(())
}

fn run_warp(out: &Out, a: &WarpArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let open = parse_clock(&a.open).map_err(|e| anyhow!("--open: {e}"))?;
    let spec = SessionSpec::new(open, model.length())?;
    let days = read_canonical(&a.input, &spec)?;
    let warped = WarpFn::new(model).warp_ticks(&days)?;
    out.ticks(&warped, &spec, &a.output)
}

fn run_acf(out: &Out, a: &AcfArgs) -> Result<()> {
    let mut spec = a.session.spec()?;
    let model = a.model.as_deref().map(read_model).transpose()?;
    if let Some(m) = &model {
        spec = SessionSpec::new(spec.open_time, m.length())?;
    }
    let mut days = read_canonical(&a.input, &spec)?;
    if let Some(m) = model {
        days = WarpFn::new(m).warp_ticks(&days)?;
    }
    let slot_width = match a.slot_width {
        Some(h) => h,
        None => session_stats(&days)?.mean_dt,
    };
    let opts = AcfOptions {
        transform: match a.transform {
            TransformArg::Identity => MarkTransform::Identity,
            TransformArg::Abs => MarkTransform::AbsoluteValue,
        },
        mean: match a.mean {
            MeanArg::Global => MeanRemoval::Global,
            MeanArg::PerDay => MeanRemoval::PerDay,
        },
        weighting: match a.weighting {
            WeightingArg::Pooled => Weighting::Pooled,
            WeightingArg::ClockUniform => Weighting::ClockUniform { stratum_width: a.stratum_width },
        },
        normalize: !a.raw,
        ..AcfOptions::new(a.max_lag, slot_width, spec.length)
    };
    let est = acf_slotted(&marks(&days, a.marks), &opts)?;
    out.table(&est.to_table(), a.output.as_deref(), &[])
}

fn run_rho(out: &Out, a: &RhoArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let d = lag_distribution_with_cells(&WarpFn::new(model), a.dt, a.grid_n, a.cells)?;
    let density = d.density();
    let mut t = Table::new("rho", &["lag_lo", "lag_hi", "lag_mid", "mass", "density"])
        .param("dt", a.dt)
        .param("support_lo", d.support.0)
        .param("support_hi", d.support.1)
        .param("mean", d.mean());
    for i in 0..d.mass.len() {
        t.push(vec![d.edges[i].into(), d.edges[i + 1].into(), d.cell_mid(i).into(), d.mass[i].into(), density[i].into()]);
    }
    out.table(&t, a.output.as_deref(), &[])
}

fn run_omega(out: &Out, a: &OmegaArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let lags = a.grid.lags(&model)?;
    let curve = omega_curve(&WarpFn::new(model), &lags)?;
    let mut t = Table::new("omega", &["dt", "omega"]).param("T", model.length()).param("mean_dt", model.mean_dt());
    for (dt, w) in curve.dts.iter().zip(&curve.omega) {
        t.push(vec![(*dt).into(), (*w).into()]);
    }
    out.table(&t, a.output.as_deref(), &[])
}

fn read_cx(path: &Path) -> Result<AcfTable> {
    let t = Table::read_csv(&read_text(path)?)?;
    let (lags, values) = if t.columns.is_empty() {
        let first = t.rows.iter().map(|r| r.first().and_then(Value::as_f64)).collect::<Vec<_>>();
        let second = t.rows.iter().map(|r| r.get(1).and_then(Value::as_f64)).collect::<Vec<_>>();
        (first, second)
    } else {
        (t.column("lag")?, t.column("value")?)
    };
    let (lags, values): (Vec<f64>, Vec<f64>) =
        lags.into_iter().zip(values).filter_map(|(l, v)| Some((l?, v?))).unzip();
    Ok(AcfTable::new(lags, values)?)
}

fn run_predict(out: &Out, a: &PredictArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let cx = read_cx(&a.cx)?;
    let w = WarpFn::new(model);
    let lags = a.grid.lags(&model)?;
    let mut t = Table::new("predict", &["dt", "c_y_pred"]).param("weighting", format!("{:?}", a.weighting).to_lowercase());
    for dt in lags {
        let v = match a.weighting {
            PredictWeighting::Uniform => predict_cy(&w, &cx, dt)?,
            PredictWeighting::Pair => predict_cy_pair_weighted(&w, &cx, dt)?,
        };
        t.push(vec![dt.into(), v.into()]);
    }
    out.table(&t, a.output.as_deref(), &[])
}

/// θ given either as a model record file or inline.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaConfig {
    model: Option<PathBuf>,
    kind: Option<String>,
    t1: Option<f64>,
    t2: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
    mean_dt: Option<f64>,
    length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidationConfig {
    slot_width: Option<f64>,
    max_lag: Option<f64>,
    stratum_width: Option<f64>,
    bootstrap_replicates: Option<usize>,
    bootstrap_seed: Option<u64>,
    min_pairs: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabConfig {
    n_days: usize,
    seed: u64,
    /// Canonical tick dump of the generated clock-time data.
    dump_ticks: Option<PathBuf>,
    theta: ThetaConfig,
    acf: AcfKind,
    #[serde(default)]
    validation: ValidationConfig,
}

impl ThetaConfig {
    fn model(&self, base: &Path) -> Result<ThetaModel> {
        if let Some(p) = &self.model {
            return read_model(&base.join(p));
        }
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| anyhow!("[theta] needs {k}"));
        let kind: ThetaKind = self.kind.as_deref().ok_or_else(|| anyhow!("[theta] needs model or kind"))?.parse()?;
        let shape = match kind {
            ThetaKind::Quadratic => Shape::Quadratic { t1: need(self.t1, "t1")?, t2: need(self.t2, "t2")? },
            ThetaKind::Rational => Shape::Rational { p: need(self.p, "p")?, q: need(self.q, "q")? },
            ThetaKind::Constant => Shape::Constant,
        };
        Ok(ThetaModel::new(shape, need(self.mean_dt, "mean_dt")?, self.length.unwrap_or(25200.0))?)
    }
}

fn run_validate(out: &Out, a: &ValidateArgs) -> Result<bool> {
    let cfg: LabConfig = toml::from_str(&read_text(&a.config)?).with_context(|| format!("config {}", a.config.display()))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let model = cfg.theta.model(base)?;
    let lab = SynthConfig::new(model, cfg.n_days, cfg.acf, cfg.seed);
    let data = gen_seasonal_days(&lab)?;
    if let Some(p) = &cfg.dump_ticks {
        let spec = SessionSpec::new(SessionSpec::default().open_time, model.length())?;
        out.ticks(&data.to_ticks(), &spec, &base.join(p))?;
    }
    let d = ValidationOptions::for_model(&model);
    let v = &cfg.validation;
    let opts = ValidationOptions {
        slot_width: v.slot_width.unwrap_or(d.slot_width),
        max_lag: v.max_lag.unwrap_or(d.max_lag),
        stratum_width: v.stratum_width.unwrap_or(d.stratum_width),
        bootstrap_replicates: v.bootstrap_replicates.unwrap_or(d.bootstrap_replicates),
        bootstrap_seed: v.bootstrap_seed.unwrap_or(d.bootstrap_seed),
        min_pairs: v.min_pairs.unwrap_or(d.min_pairs),
    };
    let report = validate_relation(&lab, &data, &opts)?;
    out.table(&report.to_table(), a.output.as_deref(), &[])?;
    for c in &report.checks {
        eprintln!("{:<20} {}", c.name, if c.passed { "pass" } else { "FAIL" });
    }
    eprintln!("verdict: {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(report.passed())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Ingest(a) => run_ingest(&Out::new(cli, "ingest", a)?, a).map(|_| true),
        Command::Pattern(a) => run_pattern(&Out::new(cli, "pattern", a)?, a).map(|_| true),
        Command::Fit(a) => run_fit(&Out::new(cli, "fit", a)?, a).map(|_| true),
        Command::Warp(a) => run_warp(&Out::new(cli, "warp", a)?, a).map(|_| true),
        Command::Acf(a) => run_acf(&Out::new(cli, "acf", a)?, a).map(|_| true),
        Command::Rho(a) => run_rho(&Out::new(cli, "rho", a)?, a).map(|_| true),
        Command::Omega(a) => run_omega(&Out::new(cli, "omega", a)?, a).map(|_| true),
        Command::Predict(a) => run_predict(&Out::new(cli, "predict", a)?, a).map(|_| true),
        Command::Validate(a) => run_validate(&Out::new(cli, "validate", a)?, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

