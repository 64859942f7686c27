use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nfbt_core::config::{ExperimentConfig, Profile};
use nfbt_core::container::{self, find, Section};
use nfbt_core::dataset::{self, Dataset};
use nfbt_core::experiment::{results_csv, summarize, sweep_points, Evaluator, Models, SweepAxis, TraceOptions};
use nfbt_core::gnn::checkpoint::{model_from_sections, trainer_from_sections, trainer_sections};
use nfbt_core::gnn::{history_csv, Aggregation, GnnModel, Trainer};
use nfbt_core::{Error, Result, Scheme};

const CONFIG_TAG: &[u8; 4] = b"CONF";

#[derive(Parser)]
#[command(name = "nfbt", version, about = "Near-field multiuser beam training experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base profile, used unless the configuration file names one.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one setting, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated schemes to evaluate (gnn, fc, exhaustive, omp).
    #[arg(long, global = true)]
    schemes: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gnn,
    Fc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Pul,
    Pdl,
    K,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset of phase-1 observations.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Number of scenarios (defaults to `train.samples`).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the angle and distance networks.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "gnn")]
        mode: Mode,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// History CSV (defaults to `<out>.history.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate the schemes on fresh test scenarios.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_enum)]
        sweep: Option<Axis>,
        /// Results CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the uplink power, downlink power and user-count sweeps.
    Sweep {
        #[command(flatten)]
        eval: EvalArgs,
        /// Directory receiving `sweep_pul.csv`, `sweep_pdl.csv` and `sweep_k.csv`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write the near-field codebook as CSV (index and polar coordinates).
    DumpCodebook {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint of the graph network.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Checkpoint of the FC ablation.
    #[arg(long)]
    fc_checkpoint: Option<PathBuf>,
    /// JSON-lines dump of every pilot observation.
    #[arg(long)]
    trace_pilots: Option<PathBuf>,
    /// JSON-lines dump of every allocation decision.
    #[arg(long)]
    trace_alloc: Option<PathBuf>,
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let base = match c.profile {
        Some(ProfileArg::Paper) => Profile::Paper,
        Some(ProfileArg::Desk) | None => Profile::Desk,
    };
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_text(&fs::read_to_string(path)?, base)?,
        None => ExperimentConfig::for_profile(base),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    for o in &c.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = &c.schemes {
        cfg.set("eval.schemes", s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_section(cfg: &ExperimentConfig) -> Section {
    Section::new(CONFIG_TAG, cfg.to_text().into_bytes())
}

fn stored_config(sections: &[Section]) -> Result<ExperimentConfig> {
    let text = std::str::from_utf8(&find(sections, CONFIG_TAG)?.payload)
        .map_err(|e| Error::Format(format!("stored configuration is not UTF-8: {e}")))?;
    ExperimentConfig::from_text(text, Profile::Paper)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn gen_data(cfg: &mut ExperimentConfig, out: &Path, samples: Option<usize>) -> Result<()> {
    if let Some(n) = samples {
        cfg.samples = n;
        cfg.validate()?;
    }
    let data = dataset::generate(cfg)?;
    data.save(out)?;
    eprintln!(
        "wrote {} scenarios ({} train / {} validation, N = {}, K = {}, profile {}) to {}",
        data.samples.len(),
        data.train_count,
        data.samples.len() - data.train_count,
        cfg.num_antennas,
        cfg.num_users,
        cfg.profile.name(),
        out.display()
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig, data: &Path, out: &Path, mode: Mode, resume: Option<&Path>, history: Option<&Path>) -> Result<()> {
    let data = Dataset::load(data)?;
    cfg.check_compatible(&data.config)?;
    let shape = data.config.model_shape();
    let (train, val) = data.splits(shape.layout_n_rf)?;
    let aggregation = match mode {
        Mode::Gnn => Aggregation::Mean,
        Mode::Fc => Aggregation::Zero,
    };
    let mut trainer = match resume {
        Some(path) => {
            let t = trainer_from_sections(&container::read_file(path)?)?;
            if t.model.aggregation != aggregation || t.model.shape() != shape {
                return Err(Error::Config("checkpoint does not match the requested mode or dataset".into()));
            }
            t
        }
        None => Trainer::new(&train, shape, aggregation, cfg.schedule, cfg.seed)?,
    };
    trainer.schedule.epochs = cfg.schedule.epochs;
    let history_path = history.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    let mut stored = data.config.clone();
    stored.schedule = trainer.schedule;
    stored.seed = trainer.seed;
    while !trainer.is_finished() {
        let r = trainer.run_epoch(&train, &val)?;
        eprintln!(
            "epoch {:>3}  lr {:.2e}  loss {:.4}  val acc angle {:.3}  dist {:.3}  overall {:.3}",
            r.epoch, r.lr, r.train_loss, r.val_acc_angle, r.val_acc_dist, r.val_acc_overall
        );
        let mut sections = trainer_sections(&trainer);
        sections.push(config_section(&stored));
        container::write_file(out, &sections)?;
        fs::write(&history_path, history_csv(&trainer.history))?;
    }
    eprintln!("best validation accuracy {:.4}; checkpoint {}", trainer.best_accuracy, out.display());
    Ok(())
}

fn load_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<GnnModel> {
    let sections = container::read_file(path)?;
    if let Ok(stored) = stored_config(&sections) {
        cfg.check_compatible(&stored)?;
    }
    model_from_sections(&sections)
}

struct Loaded {
    gnn: Option<GnnModel>,
    fc: Option<GnnModel>,
    trace: TraceOptions,
}

fn load_models(cfg: &ExperimentConfig, a: &EvalArgs) -> Result<Loaded> {
    let need = |s| cfg.schemes.contains(&s);
    let load = |p: &Option<PathBuf>, s: Scheme, flag: &str| -> Result<Option<GnnModel>> {
        match (p, need(s)) {
            (Some(p), true) => load_checkpoint(p, cfg).map(Some),
            (None, true) => Err(Error::Config(format!("scheme {s} requires {flag}"))),
            _ => Ok(None),
        }
    };
    Ok(Loaded {
        gnn: load(&a.checkpoint, Scheme::Gnn, "--checkpoint")?,
        fc: load(&a.fc_checkpoint, Scheme::Fc, "--fc-checkpoint")?,
        trace: TraceOptions { pilots: a.trace_pilots.is_some(), alloc: a.trace_alloc.is_some() },
    })
}

fn run_sweep(cfg: &ExperimentConfig, loaded: &Loaded, a: &EvalArgs, axis: Option<SweepAxis>, out: Option<&Path>) -> Result<()> {
    let models = Models { gnn: loaded.gnn.as_ref(), fc: loaded.fc.as_ref() };
    let eval = Evaluator::new(cfg, models, loaded.trace)?;
    let output = eval.run(&sweep_points(cfg, axis))?;
    write_output(out, &results_csv(cfg, &output.rows))?;
    if let Some(p) = &a.trace_pilots {
        fs::write(p, output.pilot_trace.join("\n") + "\n")?;
    }
    if let Some(p) = &a.trace_alloc {
        fs::write(p, output.alloc_trace.join("\n") + "\n")?;
    }
    eprintln!("{:<11} {:<5} {:>3} {:>8} {:>8} {:>9} {:>9} {:>8}", "scheme", "prec", "K", "P_ul", "P_dl", "rate", "eff_rate", "acc");
    for s in summarize(&output.rows) {
        eprintln!(
            "{:<11} {:<5} {:>3} {:>8.2} {:>8.2} {:>9.3} {:>9.3} {:>8.3}",
            s.scheme.name(),
            s.precoding.name(),
            s.k,
            s.p_ul_dbm,
            s.p_dl_dbm,
            s.sum_rate,
            s.eff_sum_rate,
            s.acc_overall
        );
    }
    Ok(())
}

fn axis(a: Axis) -> SweepAxis {
    match a {
        Axis::Pul => SweepAxis::PUl,
        Axis::Pdl => SweepAxis::PDl,
        Axis::K => SweepAxis::K,
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::GenData { out, samples } => gen_data(&mut cfg, &out, samples),
        Command::Train { data, out, mode, resume, history } => {
            train(&cfg, &data, &out, mode, resume.as_deref(), history.as_deref())
        }
        Command::Eval { eval, sweep, out } => {
            let loaded = load_models(&cfg, &eval)?;
            run_sweep(&cfg, &loaded, &eval, sweep.map(axis), out.as_deref())
        }
        Command::Sweep { eval, out_dir } => {
            fs::create_dir_all(&out_dir)?;
            let loaded = load_models(&cfg, &eval)?;
            for (a, name) in [(Axis::Pul, "pul"), (Axis::Pdl, "pdl"), (Axis::K, "k")] {
                let path = out_dir.join(format!("sweep_{name}.csv"));
                run_sweep(&cfg, &loaded, &eval, Some(axis(a)), Some(&path))?;
            }
            Ok(())
        }
        Command::DumpCodebook { out } => {
            let cb = cfg.near_field_codebook()?;
            write_output(out.as_deref(), &cb.to_csv())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
