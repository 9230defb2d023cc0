//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interestyle_core::synthgen::GeneratorParams;
use interestyle_core::trainloop::Ablation;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{make_dataset, Dataset};
use crate::error::Result;
use crate::eval;
use crate::fsutil::create_dir_all;
use crate::imageio::{load_image, save_image};
use crate::plot::plot_csv;

#[derive(Parser, Debug)]
#[command(name = "interestyle", version, about = "Interest-region style inversion toolkit")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Primary seed of the command (scene.seed for scene-gen; model and shuffle seeds for train).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene dataset.
    SceneGen,
    /// Train an encoder.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Ablation preset: baseline, +mask, +ind or +unf.
        #[arg(long)]
        ablation: Option<String>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Invert one PNG and dump its refinement trace.
    Invert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Masked metrics over a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-iteration latent variance over a dataset split.
    Variance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Swap a coarse, middle or fine style range from B into A.
    Mix {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        range: String,
    },
    /// Walk an inverted image along a direction found from dataset latents.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Latent dimension whose median split defines the direction.
        #[arg(long)]
        dim: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,0,3")]
        alphas: Vec<f64>,
    },
    /// Line plot of every numeric CSV column against the first.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        /// Output PNG (default: <out>/<csv stem>.png).
        #[arg(long)]
        png: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        let s = seed.to_string();
        match cli.command {
            Command::SceneGen => cfg.set("scene.seed", &s)?,
            Command::Train { .. } => {
                cfg.set("train.model_seed", &s)?;
                cfg.set("train.shuffle_seed", &s)?;
            }
            _ => {}
        }
    }
    if let Command::Train { ablation: Some(a), .. } = &cli.command {
        cfg.apply_ablation(Ablation::parse(a)?)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() {
    if let Some(n) = std::env::var("INTERESTYLE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
}

/// Checkpoint for evaluation commands, with `eval.*` taken from the command line.
fn eval_setup(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<Checkpoint> {
    create_dir_all(out)?;
    cfg.write_resolved(&out.join("config.txt"))?;
    Checkpoint::load(checkpoint)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::SceneGen => {
            create_dir_all(out)?;
            cfg.write_resolved(&out.join("config.txt"))?;
            let gen = GeneratorParams::new(cfg.generator()?)?;
            let scfg = cfg.scene()?;
            let manifest = make_dataset(scfg.count, scfg.seed, &scfg, &gen, out)?;
            println!("{}", manifest.display());
        }
        Command::Train { data, resume, .. } => {
            let path = crate::train::train(&cfg, data, out, resume.as_deref())?;
            println!("{}", path.display());
        }
        Command::Invert {
            checkpoint,
            image,
            iterations,
        } => {
            let ck = eval_setup(&cfg, checkpoint, out)?;
            let n = iterations.unwrap_or(cfg.eval()?.iterations);
            let trace = eval::invert_trace(&ck, &load_image(image)?, n)?;
            eval::dump_trace(out, &trace)?;
            println!("{}", out.join("recon.png").display());
        }
        Command::Eval { checkpoint, data } => {
            let ck = eval_setup(&cfg, checkpoint, out)?;
            let ds = Dataset::open(data)?;
            let (rows, report) = eval::masked_metrics(&ck, &ds, &cfg.eval()?)?;
            eval::write_metrics(out, &rows, &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Variance { checkpoint, data } => {
            let ck = eval_setup(&cfg, checkpoint, out)?;
            let ds = Dataset::open(data)?;
            let v = eval::variance_report(&ck, &ds, &cfg.eval()?)?;
            eval::write_variance(&out.join("variance.csv"), &v)?;
            println!("{v:?}");
        }
        Command::Mix { checkpoint, a, b, range } => {
            let ck = eval_setup(&cfg, checkpoint, out)?;
            let mix = eval::mix_report(&ck, &load_image(a)?, &load_image(b)?, range, cfg.eval()?.iterations)?;
            eval::write_mix(out, &mix)?;
            println!("{}", out.join("grid.png").display());
        }
        Command::Edit {
            checkpoint,
            data,
            image,
            dim,
            alphas,
        } => {
            let ck = eval_setup(&cfg, checkpoint, out)?;
            let ds = Dataset::open(data)?;
            let dir = eval::threshold_direction(&ds, "all", *dim)?;
            let w = eval::invert_trace(&ck, &load_image(image)?, cfg.eval()?.iterations)?.final_latent().clone();
            let strip = eval::edit_strip(&ck, &w, &dir, alphas)?;
            save_image(&strip, &out.join("edit.png"))?;
            let mut c = crate::container::ArrayContainer::new();
            c.insert_tensor(format!("direction/{}", dir.label), dir.direction.tensor());
            c.insert_tensor("w", w.tensor());
            c.save(&out.join("edit.arr"))?;
            println!("{}", out.join("edit.png").display());
        }
        Command::Plot { csv, png } => {
            let target = match png {
                Some(p) => p.clone(),
                None => {
                    create_dir_all(out)?;
                    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
                    out.join(format!("{stem}.png"))
                }
            };
            plot_csv(csv, &target)?;
            println!("{}", target.display());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    configure_threads();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
