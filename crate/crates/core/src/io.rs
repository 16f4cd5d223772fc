//! Run configuration, CSV/JSON outputs, binary snapshots and the subcommand
//! drivers behind the `phasefield` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{
    self, RateEstimate, RatePoint, RunParams, RunRecord, ScanTable, SpatialStabilization,
    SpatialStudy, StabilizationAxis, TemporalReference,
};
use crate::error::{Error, Result};
use crate::models::{self, ModelConfig, ModelKind, StabilizationPlan, StabilizerOrder};
use crate::spectral::{Cutoff, Grid, GridSpec, PhysicalField, SpectralField};
use crate::stepper::{self, make_initial, InitKind, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub const ENERGY_CSV_HEADER: &str = "step,time,energy,mass,linf,diff_l2,residual,lemma_margin";
pub const CONVERGE_CSV_HEADER: &str = "resolution,error";
pub const SCAN_CSV_HEADER: &str = "tau,A,monotone,first_violation_step,final_energy";

/// `{"beta": β}` or `{"A": A}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub nu: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub tau: f64,
    pub steps: usize,
    pub stabilization: StabilizationSpec,
    #[serde(default)]
    pub s_op: StabilizerOrder,
    pub init: InitKind,
    #[serde(default)]
    pub snapshot_every: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cutoff: Cutoff,
    /// Drop the nonlinear term (closed-form reference problem).
    #[serde(default)]
    pub linear: bool,
    #[serde(default = "default_true")]
    pub enforce_mean_zero: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name}: must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        positive("tau", self.tau)?;
        if self.steps == 0 {
            return Err(Error::Config("steps: must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("N: must be positive".into()));
        }
        self.grid_spec()?;
        match (self.stabilization.beta, self.stabilization.a) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("stabilization: give exactly one of beta and A, not both".into()))
            }
            (None, None) => return Err(Error::Config("stabilization: one of beta or A is required".into())),
            (Some(b), None) => positive("stabilization.beta", b)?,
            (None, Some(a)) => {
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("stabilization.A: must be nonnegative, got {a}")));
                }
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let spec = match self.m {
            Some(m) => GridSpec::new(self.n, m, self.cutoff),
            None => GridSpec::with_default_size(self.n, self.cutoff),
        };
        spec.map_err(|e| Error::Config(format!("M: {e}")))
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let c = ModelConfig::new(self.model, self.nu)?;
        Ok(if self.linear { c.linear() } else { c })
    }

    pub fn seed(&self) -> Option<u64> {
        match self.init {
            InitKind::RandomBandlimited { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

/// Parses a JSON config and applies `(key, value)` overrides first. Keys may be
/// dotted (`init.seed`); `beta` and `A` replace the whole stabilization block.
/// Values are parsed as JSON, falling back to a plain string.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut value, overrides)?;
    let config: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn apply_overrides(value: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (key, raw) in overrides {
        let v: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let root = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config root must be a JSON object".into()))?;
        match key.as_str() {
            "beta" | "A" => {
                let mut block = serde_json::Map::new();
                block.insert(key.clone(), v);
                root.insert("stabilization".into(), Value::Object(block));
            }
            _ => {
                let mut cur = root;
                let parts: Vec<&str> = key.split('.').collect();
                for p in &parts[..parts.len() - 1] {
                    cur = cur
                        .entry(p.to_string())
                        .or_insert_with(|| Value::Object(Default::default()))
                        .as_object_mut()
                        .ok_or_else(|| Error::Config(format!("{key}: {p} is not an object")))?;
                }
                cur.insert(parts[parts.len() - 1].to_string(), v);
            }
        }
    }
    Ok(())
}

/// Turns `--key value` pairs into override tuples.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Config(format!("expected --key value, got {flag:?}")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        let value = it
            .next()
            .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}

fn csv_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn energy_csv(record: &RunRecord) -> String {
    let mut s = String::with_capacity(64 * (record.rows.len() + 1));
    s.push_str(ENERGY_CSV_HEADER);
    s.push('\n');
    for r in &record.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.step, r.time, r.energy, r.mass, r.linf, r.diff_l2, r.residual, r.lemma_margin
        );
    }
    s
}

pub fn converge_csv(points: &[RatePoint], summary: &[String]) -> String {
    let mut s = String::new();
    s.push_str(CONVERGE_CSV_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{}", p.resolution, p.error);
    }
    for line in summary {
        let _ = writeln!(s, "# {line}");
    }
    s
}

fn fit_summary(order: Option<f64>, r2: Option<f64>) -> String {
    match (order, r2) {
        (Some(p), Some(r)) => format!("fitted_order={p},r_squared={r}"),
        _ => "fitted_order=n/a".to_string(),
    }
}

pub fn scan_csv(table: &ScanTable) -> String {
    let mut s = String::new();
    s.push_str(SCAN_CSV_HEADER);
    s.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.tau,
            r.a,
            r.monotone,
            csv_opt(r.first_violation_step),
            r.final_energy
        );
    }
    s
}

/// Parsed snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub model: ModelKind,
    /// Samples on an `M × M` grid. The mode cutoff is not stored, so the grid
    /// carries the largest cutoff `M` supports.
    pub field: PhysicalField,
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PFLD";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 21;

pub fn encode_snapshot(field: &PhysicalField, time: f64, model: ModelKind) -> Vec<u8> {
    let values = field.values();
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 8 * values.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(field.grid().m() as u32).to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    buf.push(model.tag());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn write_snapshot(path: &Path, field: &PhysicalField, time: f64, model: ModelKind) -> Result<()> {
    fs::write(path, encode_snapshot(field, time, model))?;
    Ok(())
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn take<const K: usize>(bytes: &[u8], offset: usize, what: &str) -> Result<[u8; K]> {
    bytes
        .get(offset..offset + K)
        .map(|s| s.try_into().expect("slice length"))
        .ok_or_else(|| format_err(bytes.len(), format!("truncated {what}")))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let magic: [u8; 4] = take(bytes, 0, "magic")?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(take(bytes, 4, "version")?);
    if version != SNAPSHOT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let m = u32::from_le_bytes(take(bytes, 8, "grid size")?) as usize;
    if m < 6 || !m.is_multiple_of(2) {
        return Err(format_err(8, format!("invalid grid size M = {m}")));
    }
    let time = f64::from_le_bytes(take(bytes, 12, "time")?);
    let [tag] = take::<1>(bytes, 20, "model tag")?;
    let model = ModelKind::from_tag(tag).ok_or_else(|| format_err(20, format!("unknown model tag {tag}")))?;
    let payload = &bytes[SNAPSHOT_HEADER_LEN..];
    let needed = 8 * m * m;
    if payload.len() < needed {
        // first byte of the first incomplete value
        let complete = payload.len() / 8 * 8;
        return Err(format_err(
            SNAPSHOT_HEADER_LEN + complete,
            format!("truncated payload: need {needed} bytes, got {}", payload.len()),
        ));
    }
    if payload.len() > needed {
        return Err(format_err(SNAPSHOT_HEADER_LEN + needed, "trailing bytes after payload"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk")))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(format_err(SNAPSHOT_HEADER_LEN + 8 * i, "non-finite sample"));
    }
    let grid = Grid::new(GridSpec::new((m - 2) / 4, m, Cutoff::EuclideanBall).expect("valid M"));
    let field = PhysicalField::new(&grid, values)?;
    Ok(Snapshot { time, model, field })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode_snapshot(&fs::read(path)?)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(contents)?;
    Ok(())
}

#[derive(Serialize)]
struct ParamsEcho<'a> {
    #[serde(flatten)]
    params: &'a RunParams,
    steps: usize,
    completed_steps: usize,
    status: &'a str,
    initial_energy: f64,
    init: &'a InitKind,
    snapshot_every: usize,
    enforce_mean_zero: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidGrid(_) | Error::Capacity { .. } => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.pfld")
}

/// `run` subcommand: returns the process exit code.
pub fn cmd_run(config_path: &Path, overrides: &[(String, String)]) -> i32 {
    match load_config(config_path, overrides) {
        Ok(cfg) => execute_run(&cfg).unwrap_or_else(|e| report(&e)),
        Err(e) => report(&e),
    }
}

pub fn execute_run(cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid_spec()?);
    let model = cfg.model_config()?;
    let init = make_initial(&cfg.init, &grid)?;
    let plan = match (cfg.stabilization.beta, cfg.stabilization.a) {
        (Some(b), _) => models::resolve_a(&model, &init, b)?.with_order(cfg.s_op),
        (None, Some(a)) => StabilizationPlan::with_a(a, cfg.s_op)?,
        (None, None) => unreachable!("validated"),
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io(format!("{}: {e}", cfg.out_dir.display())))?;

    let every = cfg.snapshot_every;
    let mut snap_err: Option<Error> = None;
    let mut snap = |step: usize, time: f64, field: &SpectralField| {
        if snap_err.is_some() {
            return;
        }
        let r = field
            .to_physical()
            .and_then(|p| write_snapshot(&cfg.out_dir.join(snapshot_name(step)), &p, time, cfg.model));
        if let Err(e) = r {
            snap_err = Some(e);
        }
    };
    if every > 0 {
        snap(0, 0.0, &init);
    }
    let opts = RunOptions {
        enforce_mean_zero: cfg.enforce_mean_zero,
        seed: cfg.seed(),
    };
    let outcome = stepper::run_with(&init, &model, &plan, cfg.tau, cfg.steps, &opts, |state, _| {
        if every > 0 && state.step % every == 0 {
            snap(state.step, state.time, &state.field);
        }
    });
    if let Some(e) = snap_err {
        return Err(e);
    }
    let (record, failure) = match outcome {
        Ok(r) => (r, None),
        Err(aborted) => (aborted.record, Some(aborted.error)),
    };
    write_file(&cfg.out_dir.join("energy.csv"), energy_csv(&record).as_bytes())?;
    let echo = ParamsEcho {
        params: &record.params,
        steps: cfg.steps,
        completed_steps: record.rows.len(),
        status: if failure.is_some() { "diverged" } else { "completed" },
        initial_energy: record.initial_energy,
        init: &cfg.init,
        snapshot_every: cfg.snapshot_every,
        enforce_mean_zero: cfg.enforce_mean_zero,
    };
    let json = serde_json::to_string_pretty(&echo).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&cfg.out_dir.join("params.json"), (json + "\n").as_bytes())?;
    match failure {
        None => Ok(EXIT_OK),
        Some(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConvergeMode {
    Temporal,
    Spatial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReferenceKind {
    /// Same scheme with a finer step.
    Refined,
    /// Closed-form decay (linear problem only).
    Exact,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    match s {
        "ch" => Ok(ModelKind::Ch),
        "mbe" => Ok(ModelKind::Mbe),
        _ => Err(format!("unknown model {s:?} (expected ch or mbe)")),
    }
}

fn parse_cutoff(s: &str) -> std::result::Result<Cutoff, String> {
    match s {
        "ball" => Ok(Cutoff::EuclideanBall),
        "square" => Ok(Cutoff::Square),
        _ => Err(format!("unknown cutoff {s:?} (expected ball or square)")),
    }
}

fn parse_init(s: &str) -> std::result::Result<InitKind, String> {
    serde_json::from_str(s).map_err(|e| e.to_string())
}

/// Flags shared by `converge` and `stability-scan`.
#[derive(Args, Clone, Debug)]
pub struct CommonArgs {
    #[arg(long, value_parser = parse_model, default_value = "ch")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    #[arg(long = "N", default_value_t = 32)]
    pub n: usize,
    #[arg(long, value_parser = parse_cutoff, default_value = "ball")]
    pub cutoff: Cutoff,
    #[arg(long = "s-op", default_value_t = 1)]
    pub s_op: u32,
    /// Initial data as JSON, e.g. '{"kind":"random","seed":1,"amplitude":1,"band":16}'.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitKind>,
    /// Seed for the default random initial field.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop the nonlinear term.
    #[arg(long)]
    pub linear: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl CommonArgs {
    fn model_config(&self) -> Result<ModelConfig> {
        positive("nu", self.nu).map_err(|e| Error::Config(e.to_string()))?;
        let c = ModelConfig::new(self.model, self.nu)?;
        Ok(if self.linear { c.linear() } else { c })
    }

    fn s_op(&self) -> Result<StabilizerOrder> {
        StabilizerOrder::from_int(self.s_op).map_err(|e| Error::Config(format!("s-op: {e}")))
    }

    fn grid(&self) -> Result<Arc<Grid>> {
        Grid::with_cutoff(self.n, self.cutoff).map_err(|e| Error::Config(format!("N: {e}")))
    }

    fn init_or(&self, default: InitKind) -> InitKind {
        self.init.clone().unwrap_or(default)
    }

    fn default_random(&self) -> InitKind {
        InitKind::RandomBandlimited {
            seed: self.seed,
            amplitude: 1.0,
            band: (self.n / 2).max(1),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "temporal")]
    pub mode: ConvergeMode,
    /// Step sizes for temporal mode, strictly decreasing.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub taus: Vec<f64>,
    /// Cutoffs for spatial mode, strictly increasing.
    #[arg(long = "Ns", value_delimiter = ',', num_args = 0..)]
    pub ns: Vec<usize>,
    /// Step size for spatial mode.
    #[arg(long, default_value_t = 1e-5)]
    pub tau: f64,
    #[arg(long = "T", default_value_t = 0.1)]
    pub t_final: f64,
    #[arg(long, conflicts_with = "a")]
    pub beta: Option<f64>,
    #[arg(long = "A")]
    pub a: Option<f64>,
    #[arg(long, value_enum, default_value = "refined")]
    pub reference: ReferenceKind,
    #[arg(long, default_value_t = 16)]
    pub refine: usize,
}

#[derive(Args, Clone, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub taus: Vec<f64>,
    #[arg(long = "betas", value_delimiter = ',', num_args = 0.., conflicts_with = "a_list")]
    pub betas: Vec<f64>,
    #[arg(long = "A", value_delimiter = ',', num_args = 0..)]
    pub a_list: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
}

fn stabilization_for(model: &ModelConfig, init: &SpectralField, beta: Option<f64>, a: Option<f64>, s_op: StabilizerOrder) -> Result<StabilizationPlan> {
    match (beta, a) {
        (Some(_), Some(_)) => Err(Error::Config("give exactly one of --beta and --A".into())),
        (None, Some(a)) => StabilizationPlan::with_a(a, s_op),
        (b, None) => Ok(models::resolve_a(model, init, b.unwrap_or(1.0))?.with_order(s_op)),
    }
}

pub fn cmd_converge(args: &ConvergeArgs) -> i32 {
    execute_converge(args).unwrap_or_else(|e| report(&e))
}

pub fn execute_converge(args: &ConvergeArgs) -> Result<i32> {
    let c = &args.common;
    let model = c.model_config()?;
    let s_op = c.s_op()?;
    positive("T", args.t_final)?;
    let (points, summary) = match args.mode {
        ConvergeMode::Temporal => {
            if args.taus.is_empty() {
                return Err(Error::Config("taus: list is empty".into()));
            }
            let grid = c.grid()?;
            let init = make_initial(&c.init_or(c.default_random()), &grid)?;
            let plan = stabilization_for(&model, &init, args.beta, args.a, s_op)?;
            let reference = match args.reference {
                ReferenceKind::Refined => TemporalReference::Refined { factor: args.refine },
                ReferenceKind::Exact => TemporalReference::ExactLinear,
            };
            let est = analysis::temporal_convergence(&model, &plan, &init, &args.taus, args.t_final, reference)?;
            let line = fit_summary(est.fitted_order, est.r_squared);
            (est.points, vec![line])
        }
        ConvergeMode::Spatial => {
            if args.ns.is_empty() {
                return Err(Error::Config("Ns: list is empty".into()));
            }
            if s_op != StabilizerOrder::Laplacian {
                return Err(Error::Config("s-op: spatial mode uses the Laplacian stabilizer".into()));
            }
            let init = c.init_or(InitKind::Bump {
                kappa: 20.0,
                amplitude: 0.5,
            });
            let stab = match (args.beta, args.a) {
                (Some(_), Some(_)) => return Err(Error::Config("give exactly one of --beta and --A".into())),
                (None, Some(a)) => SpatialStabilization::A(a),
                (b, None) => SpatialStabilization::Beta(b.unwrap_or(1.0)),
            };
            let study = analysis::spatial_convergence(&model, &args.ns, c.cutoff, args.tau, args.t_final, &init, stab)?;
            spatial_summary(&study)
        }
    };
    fs::create_dir_all(&c.out_dir)?;
    write_file(&c.out_dir.join("converge.csv"), converge_csv(&points, &summary).as_bytes())?;
    Ok(EXIT_OK)
}

/// Floor for superalgebraic-decay claims, relative to the reference norm.
pub const SPATIAL_FLOOR_REL: f64 = 1e-12;

fn spatial_summary(study: &SpatialStudy) -> (Vec<RatePoint>, Vec<String>) {
    let points: Vec<RatePoint> = study
        .rows
        .iter()
        .map(|r| RatePoint {
            resolution: r.n as f64,
            error: r.error,
        })
        .collect();
    let est = RateEstimate::from_points(points);
    // error ~ N^{-p}: report p
    let line = fit_summary(est.fitted_order.map(|p| -p), est.r_squared);
    let sa = match study.is_superalgebraic(SPATIAL_FLOOR_REL) {
        Some(b) => b.to_string(),
        None => "n/a".into(),
    };
    let orders: Vec<String> = study.local_orders().iter().map(|o| o.to_string()).collect();
    (
        est.points,
        vec![
            line,
            format!("local_orders={}", if orders.is_empty() { "n/a".into() } else { orders.join(";") }),
            format!("superalgebraic={sa}"),
        ],
    )
}

pub fn cmd_stability_scan(args: &ScanArgs) -> i32 {
    execute_stability_scan(args).unwrap_or_else(|e| report(&e))
}

pub fn execute_stability_scan(args: &ScanArgs) -> Result<i32> {
    let c = &args.common;
    if args.taus.is_empty() {
        return Err(Error::Config("taus: list is empty".into()));
    }
    let axis = match (args.betas.is_empty(), args.a_list.is_empty()) {
        (false, true) => StabilizationAxis::Beta(args.betas.clone()),
        (true, false) => StabilizationAxis::A(args.a_list.clone()),
        (true, true) => return Err(Error::Config("give a nonempty --betas or --A list".into())),
        (false, false) => return Err(Error::Config("give exactly one of --betas and --A".into())),
    };
    if args.steps == 0 {
        return Err(Error::Config("steps: must be at least 1".into()));
    }
    let model = c.model_config()?;
    let grid = c.grid()?;
    let init = make_initial(&c.init_or(c.default_random()), &grid)?;
    let table = analysis::stability_scan(&model, &init, &args.taus, &axis, c.s_op()?, args.steps)
        .map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        })?;
    fs::create_dir_all(&c.out_dir)?;
    write_file(&c.out_dir.join("scan.csv"), scan_csv(&table).as_bytes())?;
    Ok(EXIT_OK)
}

/// Sizes the global rayon pool from `PHASEFIELD_THREADS` (unset or 0 = automatic).
pub fn configure_threads() -> Result<()> {
    let n = match std::env::var("PHASEFIELD_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("PHASEFIELD_THREADS: expected an integer, got {s:?}")))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("PHASEFIELD_THREADS: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(m_n: usize, seed: u64) -> PhysicalField {
        let grid = Grid::with_cutoff(m_n, Cutoff::EuclideanBall).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-200..200))).collect();
        PhysicalField::new(&grid, values).unwrap()
    }

    #[test]
    fn snapshot_round_trip_bits() {
        let f = field(4, 1);
        let bytes = encode_snapshot(&f, 0.125, ModelKind::Mbe);
        assert_eq!(bytes.len(), SNAPSHOT_HEADER_LEN + 8 * f.values().len());
        let s = decode_snapshot(&bytes).unwrap();
        assert_eq!(s.time, 0.125);
        assert_eq!(s.model, ModelKind::Mbe);
        let a: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = s.field.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(encode_snapshot(&s.field, s.time, s.model), bytes);
    }

    #[test]
    fn snapshot_format_errors() {
        let bytes = encode_snapshot(&field(4, 2), 1.0, ModelKind::Ch);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_snapshot(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_snapshot(&bad), Err(Error::Format { offset: 4, .. })));
        let cut = &bytes[..bytes.len() - 5];
        match decode_snapshot(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 8),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_snapshot(&bytes[..10]), Err(Error::Format { offset: 10, .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_snapshot(&long), Err(Error::Format { .. })));
    }

    #[test]
    fn overrides_nested_and_stabilization() {
        let mut v: Value = serde_json::json!({"tau": 0.1, "init": {"kind": "random", "seed": 1}, "stabilization": {"A": 2.0}});
        apply_overrides(
            &mut v,
            &[
                ("tau".into(), "0.5".into()),
                ("init.seed".into(), "7".into()),
                ("beta".into(), "3".into()),
                ("out_dir".into(), "/tmp/x".into()),
            ],
        )
        .unwrap();
        assert_eq!(v["tau"], 0.5);
        assert_eq!(v["init"]["seed"], 7);
        assert_eq!(v["stabilization"], serde_json::json!({"beta": 3}));
        assert_eq!(v["out_dir"], "/tmp/x");
    }

    #[test]
    fn override_arg_parsing() {
        let args: Vec<String> = ["--tau", "0.1", "--steps=5"].iter().map(|s| s.to_string()).collect();
        let p = parse_override_args(&args).unwrap();
        assert_eq!(p, vec![("tau".into(), "0.1".into()), ("steps".into(), "5".into())]);
        assert!(parse_override_args(&["--tau".to_string()]).is_err());
        assert!(parse_override_args(&["tau".to_string()]).is_err());
    }

    fn base_json() -> Value {
        serde_json::json!({
            "model": "ch", "nu": 0.1, "N": 8, "tau": 0.01, "steps": 3,
            "stabilization": {"beta": 1.0},
            "init": {"kind": "random", "seed": 1, "amplitude": 1.0, "band": 4},
            "out_dir": "out"
        })
    }

    #[test]
    fn config_validation() {
        let c: RunConfig = serde_json::from_value(base_json()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.s_op, StabilizerOrder::Laplacian);
        assert_eq!(c.grid_spec().unwrap().m, 36);
        let mut both = base_json();
        both["stabilization"]["A"] = 1.0.into();
        let c: RunConfig = serde_json::from_value(both).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut neg = base_json();
        neg["tau"] = (-1.0).into();
        let c: RunConfig = serde_json::from_value(neg).unwrap();
        assert!(c.validate().is_err());
        let mut small = base_json();
        small["M"] = 16.into();
        let c: RunConfig = serde_json::from_value(small).unwrap();
        assert!(c.validate().is_err());
        let mut unknown = base_json();
        unknown["bogus"] = 1.into();
        assert!(serde_json::from_value::<RunConfig>(unknown).is_err());
    }

    #[test]
    fn csv_values_round_trip() {
        let vals = [0.1 + 0.2, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI];
        for v in vals {
            assert_eq!(v.to_string().parse::<f64>().unwrap(), v);
        }
        let pts = [RatePoint { resolution: 0.001, error: 1.0 / 3.0 }];
        let s = converge_csv(&pts, &[fit_summary(None, None)]);
        assert_eq!(s, format!("resolution,error\n0.001,{}\n# fitted_order=n/a\n", 1.0 / 3.0));
    }
}
