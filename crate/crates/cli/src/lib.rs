//! Command-line workflows: generate a synthetic dataset, train per-field
//! models, evaluate them, and check gradients.
//!
//! [`run`] is the whole program minus process exit, so tests can drive it
//! in-process.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use serde::Serialize;

use geompnn::eval::{self, EvalOptions, PredictionSet};
use geompnn::features::{BasisSettings, FeatureContext, FeatureVariant};
use geompnn::graph::{radius_graph, surf2vol_graph, write_edge_list};
use geompnn::io::{load_case, load_manifest_cases, write_case, write_manifest};
use geompnn::net::checkpoint::Checkpoint;
use geompnn::net::gradcheck;
use geompnn::net::{Architecture, ModelConfig};
use geompnn::rng::{stream_rng, Stream};
use geompnn::synth::{generate_dataset, DatasetSpec};
use geompnn::train::{self, Anneal, TrainConfig};
use geompnn::{Error, FieldId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "geompnn",
    version,
    about = "Geometry-aware message passing surrogates for 2-D airfoil flows"
)]
pub struct Cli {
    /// Worker threads for per-case work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic Joukowski cases and train/test manifests.
    Generate(GenerateArgs),
    /// Train per-field models.
    Train(TrainArgs),
    /// Evaluate checkpoints on a manifest.
    Eval(EvalArgs),
    /// Rebuild an evaluation report from saved predictions.
    Report(ReportArgs),
    /// Finite-difference checks of every primitive and model.
    Gradcheck(GradcheckArgs),
    /// Dump node features of one case.
    Features(FeaturesArgs),
    /// Dump the surface radius graph or the Surf2Vol graph of one case.
    Graph(GraphArgs),
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got '{s}'"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    if !(lo <= hi) {
        return Err(format!("range {lo},{hi} is empty"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Circle-centre offset controlling thickness, as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "0.06,0.16")]
    pub thickness: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "0,0.08")]
    pub camber: (f64, f64),
    #[arg(long, value_parser = parse_range, default_value = "0.8,1.2")]
    pub speed: (f64, f64),
    /// Angle of attack in degrees, as LO,HI.
    #[arg(long, value_parser = parse_range, default_value = "-5,10", allow_hyphen_values = true)]
    pub aoa: (f64, f64),
    #[arg(long, default_value_t = 8000)]
    pub n_volume: usize,
    #[arg(long, default_value_t = 256)]
    pub n_surface: usize,
    /// Fraction of cases in the training manifest.
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnnealArg {
    Cos,
    Linear,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Field to train: ux, uy, p or nut.
    #[arg(
        long,
        required_unless_present = "all_fields",
        conflicts_with = "all_fields"
    )]
    pub field: Option<FieldId>,
    /// Train all four fields one after another.
    #[arg(long)]
    pub all_fields: bool,
    /// Feature variant; defaults to sph for velocity and inlet for p and nut.
    #[arg(long)]
    pub variant: Option<FeatureVariant>,
    #[arg(long, default_value = "surf2vol")]
    pub arch: Architecture,
    /// Log-transform pressure targets before normalizing.
    #[arg(long)]
    pub log_pressure: bool,
    #[arg(long, default_value_t = 600)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32_000)]
    pub subsample_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub max_lr: f64,
    #[arg(long, default_value_t = 0.3)]
    pub warmup: f64,
    #[arg(long, default_value_t = 25.0)]
    pub div: f64,
    #[arg(long, default_value_t = 1e4)]
    pub final_div: f64,
    #[arg(long, value_enum, default_value_t = AnnealArg::Cos)]
    pub anneal: AnnealArg,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Hidden layers per MLP.
    #[arg(long, default_value_t = 2)]
    pub mlp_depth: usize,
    #[arg(long, default_value_t = 4)]
    pub surface_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub s2v_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub gnn_layers: usize,
    /// Surface neighbors per volume point.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Use the factorial normalization for harmonic embeddings.
    #[arg(long)]
    pub sph_factorial_norm: bool,
    /// Standardize input features with training-set statistics.
    #[arg(long)]
    pub standardize_inputs: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32_000)]
    pub subsample_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock inference time (makes reports nondeterministic).
    #[arg(long)]
    pub timing: bool,
    /// Also write the raw predictions for later `report` runs.
    #[arg(long)]
    pub save_predictions: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, default_value = "sph")]
    pub variant: FeatureVariant,
    /// Points to dump; all points when omitted.
    #[arg(long = "point")]
    pub points: Vec<usize>,
    #[arg(long)]
    pub sph_factorial_norm: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GraphKind {
    Surface,
    Surf2vol,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum)]
    pub kind: GraphKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub radius: f64,
    #[arg(long, default_value_t = 8)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Written to `run.json` in the output directory before the work starts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> geompnn::Result<()> {
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> geompnn::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    if cli.jobs > 0 {
        // A pool may already exist when run() is called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Features(a) => cmd_features(&a, out),
        Command::Graph(a) => cmd_graph(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn say(out: &mut dyn Write, msg: std::fmt::Arguments<'_>) {
    let _ = out.write_fmt(msg);
    let _ = out.write_all(b"\n");
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    if !(0.0..=1.0).contains(&a.train_fraction) {
        return Err(Error::Config("--train-fraction must be in [0, 1]".into()));
    }
    let spec = DatasetSpec {
        count: a.count,
        thickness: a.thickness,
        camber: a.camber,
        speed: a.speed,
        angle_of_attack: a.aoa,
        n_volume: a.n_volume,
        n_surface: a.n_surface,
    };
    spec.validate()?;
    create_dir(&a.out)?;
    let names: Vec<PathBuf> = (0..a.count)
        .map(|i| PathBuf::from(format!("case_{i:04}.txt")))
        .collect();
    let mut artifacts = names.clone();
    artifacts.extend(["manifest.txt", "train.txt", "test.txt"].map(PathBuf::from));
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "generate",
        seed: a.seed,
        config: serde_json::json!({ "dataset": spec, "train_fraction": a.train_fraction }),
        artifacts,
    }
    .write(&a.out)?;

    let cases = generate_dataset(&spec, a.seed)?;
    for (case, name) in cases.iter().zip(&names) {
        write_case(case, a.out.join(name))?;
    }
    let n_train = (a.count as f64 * a.train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..a.count).collect();
    order.shuffle(&mut stream_rng(a.seed, Stream::Shuffle, 0, 0));
    let (mut tr, mut te) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    write_manifest(a.out.join("manifest.txt"), &names)?;
    write_manifest(a.out.join("train.txt"), &pick(&tr))?;
    write_manifest(a.out.join("test.txt"), &pick(&te))?;
    say(
        out,
        format_args!(
            "wrote {} cases to {} ({} train, {} test)",
            a.count,
            a.out.display(),
            tr.len(),
            te.len()
        ),
    );
    Ok(EXIT_OK)
}

fn train_config(a: &TrainArgs, field: FieldId) -> TrainConfig {
    let mut cfg = TrainConfig::new(field);
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    cfg.model = ModelConfig {
        architecture: a.arch,
        hidden: a.hidden,
        mlp_depth: a.mlp_depth,
        surface_layers: a.surface_layers,
        s2v_layers: a.s2v_layers,
        gnn_layers: a.gnn_layers,
        k: a.k,
        ..ModelConfig::default()
    };
    cfg.epochs = a.epochs;
    cfg.subsample_n = a.subsample_n;
    cfg.seed = a.seed;
    cfg.schedule.max_lr = a.max_lr;
    cfg.schedule.warmup_frac = a.warmup;
    cfg.schedule.div = a.div;
    cfg.schedule.final_div = a.final_div;
    cfg.schedule.anneal = match a.anneal {
        AnnealArg::Cos => Anneal::Cosine,
        AnnealArg::Linear => Anneal::Linear,
    };
    cfg.log_pressure = a.log_pressure;
    cfg.factorial_norm = a.sph_factorial_norm;
    cfg.standardize_inputs = a.standardize_inputs;
    cfg
}

/// Checkpoint and loss-history paths for one trained model.
pub fn artifact_stem(field: FieldId, variant: FeatureVariant) -> String {
    format!("{}_{}", field.short_name(), variant)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    let fields: Vec<FieldId> = match a.field {
        Some(f) => vec![f],
        None => FieldId::ALL.to_vec(),
    };
    let configs: Vec<TrainConfig> = fields.iter().map(|&f| train_config(a, f)).collect();
    for c in &configs {
        c.validate()?;
    }
    create_dir(&a.out)?;
    let mut artifacts = Vec::new();
    for c in &configs {
        let stem = artifact_stem(c.field, c.variant);
        artifacts.push(PathBuf::from(format!("{stem}.ckpt")));
        artifacts.push(PathBuf::from(format!("{stem}.loss.txt")));
    }
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "train",
        seed: a.seed,
        config: serde_json::json!({ "manifest": a.manifest, "runs": configs }),
        artifacts,
    }
    .write(&a.out)?;

    let cases = load_manifest_cases(&a.manifest)?;
    if cases.is_empty() {
        return Err(Error::Invariant(format!(
            "{}: manifest lists no cases",
            a.manifest.display()
        )));
    }
    for cfg in &configs {
        let stem = artifact_stem(cfg.field, cfg.variant);
        let ckpt = a.out.join(format!("{stem}.ckpt"));
        let hist = a.out.join(format!("{stem}.loss.txt"));
        say(
            out,
            format_args!("training {} with {} features", cfg.field, cfg.variant),
        );
        match train::train_field_with(&cases, cfg, |r| {
            if r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == cfg.epochs {
                say(
                    out,
                    format_args!("  epoch {:>4}  mse {:.6}  lr {:.3e}", r.epoch, r.mse, r.lr),
                );
            }
        }) {
            Ok(done) => {
                done.checkpoint.save(&ckpt)?;
                train::write_history(&hist, &done.history)?;
                say(out, format_args!("  wrote {}", ckpt.display()));
            }
            Err(failure) => {
                train::write_history(&hist, &failure.history)?;
                return Err(failure.error);
            }
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    if a.subsample_n == 0 {
        return Err(Error::Config("--subsample-n must be positive".into()));
    }
    create_dir(&a.out)?;
    let mut artifacts = vec![PathBuf::from("report.txt"), PathBuf::from("report.lines")];
    if a.save_predictions {
        artifacts.push(PathBuf::from("predictions.json"));
    }
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "eval",
        seed: a.seed,
        config: serde_json::json!({
            "manifest": a.manifest,
            "checkpoints": a.checkpoints,
            "subsample_n": a.subsample_n,
            "timing": a.timing,
        }),
        artifacts,
    }
    .write(&a.out)?;

    let checkpoints = a
        .checkpoints
        .iter()
        .map(|p| Checkpoint::load(p))
        .collect::<geompnn::Result<Vec<_>>>()?;
    let cases = load_manifest_cases(&a.manifest)?;
    let opts = EvalOptions {
        subsample_n: a.subsample_n,
        seed: a.seed,
        timing: a.timing,
    };
    let set = eval::predict_cases(&checkpoints, &cases, &opts)?;
    if a.save_predictions {
        set.save(&a.out.join("predictions.json"))?;
    }
    write_report(&set, &a.out, out)
}

fn write_report(set: &PredictionSet, dir: &Path, out: &mut dyn Write) -> geompnn::Result<i32> {
    let report = eval::report_from_predictions(set)?;
    let table = report.to_table();
    for (name, text) in [("report.txt", &table), ("report.lines", &report.to_lines())] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    }
    let _ = out.write_all(table.as_bytes());
    Ok(EXIT_OK)
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    create_dir(&a.out)?;
    let set = PredictionSet::load(&a.predictions)?;
    write_report(&set, &a.out, out)
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    let report = gradcheck::run_suite(a.seed)?;
    say(out, format_args!("{report}"));
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

pub fn cmd_features(a: &FeaturesArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    let case = load_case(&a.case)?.recentre();
    let mut basis = BasisSettings::fit(std::slice::from_ref(&case))?;
    basis.factorial_norm = a.sph_factorial_norm;
    let ctx = FeatureContext::new(&case, a.variant, &basis)?;
    let points: Vec<usize> = if a.points.is_empty() {
        (0..case.len()).collect()
    } else {
        a.points.clone()
    };
    if let Some(&bad) = points.iter().find(|&&i| i >= case.len()) {
        return Err(Error::Config(format!(
            "point {bad} out of range (case has {})",
            case.len()
        )));
    }
    for i in points {
        let f = ctx.node_features(&case, i);
        let row: Vec<String> = f.iter().map(f64::to_string).collect();
        say(out, format_args!("{} {i} {}", case.case_id, row.join(" ")));
    }
    Ok(EXIT_OK)
}

pub fn cmd_graph(a: &GraphArgs, out: &mut dyn Write) -> geompnn::Result<i32> {
    let case = load_case(&a.case)?;
    let (src, dst) = match a.kind {
        GraphKind::Surface => {
            let g = radius_graph(&case.surface_points(), a.radius, a.max_neighbors, a.seed);
            let map = |v: &[usize]| v.iter().map(|&s| case.surface_idx[s]).collect::<Vec<_>>();
            (map(&g.src), map(&g.dst))
        }
        GraphKind::Surf2vol => {
            let g = surf2vol_graph(&case, a.k)?;
            let src = g
                .surface_slots
                .iter()
                .map(|&s| case.surface_idx[s])
                .collect();
            let dst = g.dst().iter().map(|&d| g.volume[d]).collect();
            (src, dst)
        }
    };
    write_edge_list(&a.out, &src, &dst, None)?;
    say(
        out,
        format_args!("wrote {} edges to {}", src.len(), a.out.display()),
    );
    Ok(EXIT_OK)
}
