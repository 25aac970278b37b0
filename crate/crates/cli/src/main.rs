use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use drivelab::datakit::{export_dataset, read_dataset, record_dataset, split, write_dataset};
use drivelab::harness::{
    emit_report, evaluate_internal, generalization_suite, robustness_suite, run_episode, train,
    Brain, EpisodeConfig, PreparedData, ReportFormat, RunConfig, SuiteConfig,
};
use drivelab::models::{build_model_at, load_weights, save_weights, ModelName, ModelSpec};
use drivelab::simworld::{
    builtin_circuit, builtin_circuits, LineColor, RoadColor, Track, TrackSpec, TrackVariation,
};

/// Usage problems map to exit code 2, everything else that fails to 1.
#[derive(Debug)]
struct BadArgs(String);

impl std::fmt::Display for BadArgs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadArgs {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(BadArgs(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "drivelab",
    version,
    about = "Synthetic circuits, a PID expert and vision brains for end-to-end driving"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Builtin circuits.
    Circuits {
        #[command(subcommand)]
        action: CircuitsCmd,
    },
    /// Record or export expert datasets.
    Dataset {
        #[command(subcommand)]
        action: DatasetCmd,
    },
    /// Train a brain on a recorded dataset.
    Train(TrainArgs),
    /// Internal metrics or a single simulated episode.
    Eval {
        #[command(subcommand)]
        action: EvalCmd,
    },
    /// Generalization or robustness grid over several brains.
    Suite {
        kind: SuiteKind,
        #[command(flatten)]
        args: SuiteArgs,
    },
}

#[derive(Subcommand)]
enum CircuitsCmd {
    List,
    /// Write each builtin circuit as a JSON circuit file.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    Record {
        /// Comma-separated builtin circuit names or numbers.
        #[arg(long, value_delimiter = ',')]
        circuits: Option<Vec<String>>,
        #[arg(long)]
        laps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Std-dev of the steering disturbance while recording, rad/s.
        #[arg(long)]
        steer_noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum LineArg {
    Red,
    White,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoadArg {
    Grey,
    White,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum OffsetArg {
    Left,
    Right,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteKind {
    Generalization,
    Robustness,
}

#[derive(Subcommand)]
enum EvalCmd {
    Internal {
        #[arg(long)]
        model: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// Seed of the train/validation split (the training seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    Episode {
        /// A model name or `expert`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        circuit: String,
        #[arg(long, value_enum, default_value = "red")]
        line: LineArg,
        #[arg(long, value_enum, default_value = "grey")]
        road: RoadArg,
        #[arg(long, value_enum, default_value = "on")]
        walls: Toggle,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, value_enum, default_value = "none")]
        camera_offset: OffsetArg,
        #[arg(long, default_value_t = 0.0)]
        camera_pitch_down: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SuiteArgs {
    /// Comma-separated model names; `expert` adds the PID expert.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    /// Directory holding `<model>.lrwt` files.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    #[arg(long)]
    circuit: String,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `.json` or `.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    use drivelab::Error as E;
    e.chain().any(|c| {
        c.downcast_ref::<BadArgs>().is_some()
            || matches!(
                c.downcast_ref::<E>(),
                Some(E::UnknownModel(_) | E::InvalidArgument(_) | E::Config(_))
            )
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Circuits { action } => circuits(action),
        Command::Dataset { action } => dataset(action, &cfg),
        Command::Train(args) => train_cmd(args, &cfg),
        Command::Eval { action } => eval(action, &cfg),
        Command::Suite { kind, args } => suite(kind, args, &cfg),
    }
}

fn circuits(action: CircuitsCmd) -> anyhow::Result<()> {
    match action {
        CircuitsCmd::List => {
            for c in builtin_circuits() {
                let t = Track::new(c.spec.clone())?;
                println!(
                    "{} {:<18} {:<5} {:>6.1} m",
                    c.id,
                    c.spec.name,
                    format!("{:?}", c.role).to_lowercase(),
                    t.length()
                );
            }
        }
        CircuitsCmd::Export { out } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for c in builtin_circuits() {
                let path = out.join(format!("{}.json", c.spec.name));
                c.spec
                    .save(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}

fn dataset(action: DatasetCmd, cfg: &RunConfig) -> anyhow::Result<()> {
    match action {
        DatasetCmd::Record {
            circuits,
            laps,
            seed,
            steer_noise,
            out,
        } => {
            let mut recipe = cfg.record.clone();
            recipe.expert = cfg.expert.clone();
            recipe.limits = cfg.limits;
            if let Some(c) = circuits {
                recipe.circuits = c;
            }
            if let Some(l) = laps {
                recipe.laps = l;
            }
            if let Some(s) = seed {
                recipe.seed = s;
            }
            if let Some(n) = steer_noise {
                recipe.steer_noise = n;
            }
            for c in &recipe.circuits {
                builtin_circuit(c)?;
            }
            let ds = record_dataset(&recipe)?;
            write_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!(
                "{} samples in {} episodes -> {}",
                ds.len(),
                ds.episodes()?.len(),
                out.display()
            );
        }
        DatasetCmd::Export { input, out } => {
            let ds =
                read_dataset(&input).with_context(|| format!("reading {}", input.display()))?;
            export_dataset(&ds, &out)?;
            eprintln!("{} frames -> {}", ds.len(), out.display());
        }
    }
    Ok(())
}

fn model_spec(name: &str, cfg: &RunConfig) -> anyhow::Result<ModelSpec> {
    let n: ModelName = name.parse()?;
    Ok(build_model_at(n, cfg.scale))
}

fn train_cmd(a: TrainArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let spec = model_spec(&a.model, cfg)?;
    let mut hyper = cfg.train.clone();
    if let Some(e) = a.epochs {
        hyper.epochs = e;
    }
    if let Some(b) = a.batch {
        hyper.batch = b;
    }
    if let Some(lr) = a.lr {
        hyper.lr = lr;
    }
    if let Some(s) = a.seed {
        hyper.seed = s;
    }
    if hyper.batch == 0 || hyper.lr.is_nan() || hyper.lr <= 0.0 {
        return Err(bad("batch must be positive and lr > 0"));
    }
    let ds = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let mut out = train(&spec, &ds, &hyper)?;
    save_weights(&spec, &out.weights, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    out.history.weights_path = Some(a.out.display().to_string());
    if let Some(h) = &a.history {
        fs::write(h, serde_json::to_string_pretty(&out.history)? + "\n")?;
    }
    match out.history.epochs.last() {
        Some(last) => eprintln!(
            "{}: val MSE {:.5} -> {:.5} after {} epochs",
            spec.id(),
            out.history.initial_val.mse,
            last.val.mse,
            last.epoch
        ),
        None => eprintln!("{}: no epochs run, initial weights saved", spec.id()),
    }
    Ok(())
}

fn variation(line: LineArg, road: RoadArg, walls: Toggle) -> TrackVariation {
    TrackVariation::new(
        match line {
            LineArg::Red => LineColor::Red,
            LineArg::White => LineColor::White,
            LineArg::None => LineColor::None,
        },
        match road {
            RoadArg::Grey => RoadColor::Grey,
            RoadArg::White => RoadColor::White,
        },
        matches!(walls, Toggle::On),
    )
}

/// A builtin name/number or a path to a circuit file.
fn load_track(key: &str) -> anyhow::Result<Track> {
    let spec = if Path::new(key).extension().is_some_and(|e| e == "json") {
        TrackSpec::load(key).with_context(|| format!("reading circuit {key}"))?
    } else {
        builtin_circuit(key)?.spec
    };
    Ok(Track::new(spec)?)
}

fn brain(name: &str, weights: Option<&Path>, cfg: &RunConfig) -> anyhow::Result<Brain> {
    if name == "expert" {
        return Ok(Brain::Expert(cfg.expert.clone()));
    }
    let spec = model_spec(name, cfg)?;
    let path = weights.ok_or_else(|| bad(format!("model {name} needs weights")))?;
    let weights =
        load_weights(&spec, path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Brain::Neural { spec, weights })
}

fn eval(action: EvalCmd, cfg: &RunConfig) -> anyhow::Result<()> {
    match action {
        EvalCmd::Internal {
            model,
            weights,
            data,
            split: which,
            seed,
        } => {
            let spec = model_spec(&model, cfg)?;
            let w = load_weights(&spec, &weights)
                .with_context(|| format!("loading {}", weights.display()))?;
            let ds = read_dataset(&data).with_context(|| format!("reading {}", data.display()))?;
            let idx: Vec<usize> = match which {
                SplitArg::All => (0..ds.len()).collect(),
                s => {
                    let sp = split(
                        &ds.manifest()?,
                        cfg.train.val_fraction,
                        seed.unwrap_or(cfg.train.seed),
                    )?;
                    ds.episode_samples(if matches!(s, SplitArg::Val) {
                        &sp.val
                    } else {
                        &sp.train
                    })
                }
            };
            let prepared = PreparedData::new(&spec, &ds)?;
            let m = evaluate_internal(&spec, &w, &prepared, &idx)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        EvalCmd::Episode {
            model,
            weights,
            circuit,
            line,
            road,
            walls,
            noise,
            camera_offset,
            camera_pitch_down,
            seed,
            out,
        } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(bad(format!("noise {noise} outside [0, 1]")));
            }
            let track = load_track(&circuit)?;
            let b = brain(&model, weights.as_deref(), cfg)?;
            let lateral = cfg.suite.magnitudes.lateral;
            let mut ep: EpisodeConfig = cfg.episode.clone();
            ep.variation = variation(line, road, walls);
            ep.perturbation.camera_lateral = match camera_offset {
                OffsetArg::Left => -lateral,
                OffsetArg::Right => lateral,
                OffsetArg::None => 0.0,
            };
            ep.perturbation.extra_pitch_down = camera_pitch_down;
            ep.perturbation.noise_p = noise;
            if let Some(s) = seed {
                ep.seed = s;
            }
            let mut pilot = b.pilot(&ep.variation, cfg.limits);
            let m = run_episode(pilot.as_mut(), &track, &ep)?;
            let text = serde_json::to_string_pretty(&m)? + "\n";
            match out {
                Some(p) => {
                    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn suite(kind: SuiteKind, a: SuiteArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let format = ReportFormat::from_path(&a.out)?;
    let track = load_track(&a.circuit)?;
    let mut brains = Vec::new();
    for m in &a.models {
        let w = if m == "expert" {
            None
        } else {
            let dir = a
                .weights_dir
                .as_ref()
                .ok_or_else(|| bad("--weights-dir is required for neural models"))?;
            Some(dir.join(format!("{m}.lrwt")))
        };
        brains.push(brain(m, w.as_deref(), cfg)?);
    }
    let mut sc: SuiteConfig = cfg.suite.clone();
    sc.limits = cfg.limits;
    if let Some(r) = a.repeats {
        if r == 0 {
            return Err(bad("--repeats must be at least 1"));
        }
        sc.repeats = r;
    }
    if let Some(s) = a.seed {
        sc.seed = s;
    }
    let report = match kind {
        SuiteKind::Generalization => generalization_suite(&brains, &track, &sc)?,
        SuiteKind::Robustness => robustness_suite(&brains, &track, &sc)?,
    };
    emit_report(&report, &a.out, format).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("{} cells -> {}", report.cells.len(), a.out.display());
    if report.cells.is_empty() {
        bail!("empty report");
    }
    Ok(())
}
