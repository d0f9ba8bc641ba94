use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fuselab::cli::{
    cmd_eval, cmd_finetune, cmd_gen_world, cmd_inspect_weights, cmd_meta_train, CliError,
    ExperimentConfig,
};

/// Batch front end for synthetic cross-view fusion experiments.
#[derive(Parser)]
#[command(name = "fuselab", version, about)]
struct Args {
    /// Experiment configuration JSON.
    #[arg(long, global = true, default_value = "fuselab.json")]
    config: PathBuf,
    /// Override the config's world/train seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the camera rig and exported datasets.
    GenWorld,
    /// Meta-train the factorized fusion model (resumable).
    MetaTrain {
        /// Drop the second-order term of the meta-gradient.
        #[arg(long)]
        first_order: bool,
    },
    /// Adapt a checkpoint to one ordered camera pair.
    Finetune {
        /// Checkpoint base path (without extension).
        checkpoint: PathBuf,
        /// Ordered pair as "a-b" (target camera first).
        pair: String,
        /// Number of adaptation samples.
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Allow finetuning a checkpoint that was not meta-trained.
        #[arg(long)]
        allow_raw: bool,
    },
    /// Run the baseline comparison table.
    Eval {
        /// Meta-trained checkpoint base path.
        checkpoint: PathBuf,
        /// Plainly pre-trained factorized checkpoint for the affine rows.
        #[arg(long)]
        affine: Option<PathBuf>,
        /// Restrict the K schedule to a single value.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Dump warped weight maps and their epipolar oracle maps as PGMs.
    InspectWeights {
        checkpoint: PathBuf,
        /// Ordered pair as "a-b".
        pair: String,
        /// Dump every n-th target cell.
        #[arg(long, default_value_t = 37)]
        stride: usize,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = s.split('-').collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!(
            "pair must look like \"3-7\", got {s:?}"
        )));
    }
    let a = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad pair component {:?}", parts[0])))?;
    let b = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad pair component {:?}", parts[1])))?;
    Ok((a, b))
}

fn init_threads() {
    if let Ok(v) = std::env::var("FUSELAB_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn run(args: Args) -> Result<(), CliError> {
    init_threads();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.world.seed = seed;
        cfg.train.seed = seed;
    }
    match args.command {
        Command::GenWorld => {
            let manifest = cmd_gen_world(&cfg)?;
            println!(
                "world {}: {} cameras, {} ordered pairs, {} files",
                manifest.world_hash,
                manifest.n_cams,
                manifest.n_ordered_pairs,
                manifest.files.len()
            );
        }
        Command::MetaTrain { first_order } => {
            cfg.train.first_order = first_order;
            let rows = cmd_meta_train(&cfg)?;
            match rows.last() {
                Some(last) => println!(
                    "meta-trained {} iterations, final test loss {:.6}",
                    rows.len(),
                    last.test_loss
                ),
                None => println!("meta checkpoint already at the configured iteration budget"),
            }
        }
        Command::Finetune {
            checkpoint,
            pair,
            k,
            allow_raw,
        } => {
            let pair = parse_pair(&pair)?;
            let (learnable, before, after) = cmd_finetune(&cfg, &checkpoint, pair, k, allow_raw)?;
            println!("learnable parameters: {learnable}");
            println!("test loss before: {before:.6}");
            println!("test loss after:  {after:.6}");
        }
        Command::Eval {
            checkpoint,
            affine,
            k,
        } => {
            if let Some(k) = k {
                cfg.eval.k_list = vec![k];
            }
            let report = cmd_eval(&cfg, &checkpoint, affine.as_deref())?;
            print!("{}", fuselab::io::report_csv(&report));
        }
        Command::InspectWeights {
            checkpoint,
            pair,
            stride,
            out,
        } => {
            let pair = parse_pair(&pair)?;
            let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("weights"));
            let (learned, uniform) = cmd_inspect_weights(&cfg, &checkpoint, pair, stride, &out)?;
            println!("band-mass score: learned {learned:.4}, uniform {uniform:.4}");
            println!("dumps in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
