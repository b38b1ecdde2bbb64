use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cbn_core::bounds::{bounds_report, default_probes, layer_concentration, layer_spectrum_report, spectrum_csv};
use cbn_core::constructions::{
    bottleneck_witness, compose, downsample, identity_accounting, identity_network, parallel_sum,
    stride_identity_witness, unique_embedding, upsample,
};
use cbn_core::harness::checkpoint::{load_checkpoint, save_checkpoint, save_stride_network};
use cbn_core::harness::data::gen_translated_bumps;
use cbn_core::harness::experiment::{run_experiment, ExperimentConfig};
use cbn_core::harness::verify::{format_table, run_checks};
use cbn_core::{Grid, NetworkParams, PoolingKind, PoolingSpec, Signal, TAU_RANK};

#[derive(Parser)]
#[command(name = "cbn", version, about = "Cyclic CNN spectra, representation-cost bounds and constructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a JSON experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the frequency-indexed singular values of every pooled layer as CSV.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the per-layer concentration summary at this mass.
        #[arg(long)]
        mass: Option<f64>,
    },
    /// Evaluate the rank bounds of a checkpoint at channel-constant probes.
    Bounds {
        #[arg(long)]
        model: PathBuf,
        /// Experiment config whose dataset supplies the probes; constant probes otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = TAU_RANK)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an explicit witness network.
    Construct {
        #[command(subcommand)]
        which: Construct,
    },
    /// Subsample or Fourier-upsample a signal stored as JSON.
    Resample {
        #[arg(value_enum)]
        direction: Direction,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate (or load) the dataset described by a config and write it as JSON.
    Data {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Down,
    Up,
}

#[derive(Args, Clone)]
struct PoolArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    dims: usize,
    /// Blend weight of the 3-tap average; omit for no pooling.
    #[arg(long)]
    beta: Option<f64>,
}

impl PoolArgs {
    fn pooling(&self) -> cbn_core::Result<PoolingSpec> {
        let grid = Grid::new(self.n, self.dims)?;
        match self.beta {
            Some(beta) => PoolingSpec::new(PoolingKind::BlendAvg3 { beta }, grid),
            None => Ok(PoolingSpec::identity(grid)),
        }
    }
}

#[derive(Subcommand)]
enum Construct {
    /// Identity on inputs bounded by `bound`.
    Identity {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0.0)]
        bound: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Network computing the sum of two equal-depth networks.
    Parallel {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// `second o first`, glued through identity-layer biases.
    Compose {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        /// Bound on the outputs of `first`.
        #[arg(long)]
        bound: f64,
        #[arg(long)]
        out: PathBuf,
        /// Insert this many identity layers between the two networks.
        #[arg(long)]
        middle: Option<usize>,
    },
    /// Single-stage stride witness computing the identity on band-limited signals.
    Stride {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        inner_depth: usize,
        #[arg(long, default_value_t = 1.0)]
        bound: f64,
        /// Output directory for the three checkpoints and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding of translated bumps and its 3-layer inverse.
    Embedding {
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_slice(&bytes).map_err(cbn_core::Error::from)?;
    config.validate()?;
    Ok(config)
}

fn load(path: &Path) -> anyhow::Result<NetworkParams> {
    Ok(load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?.params)
}

fn construct(which: Construct) -> anyhow::Result<()> {
    match which {
        Construct::Identity {
            pool,
            c,
            depth,
            bound,
            out,
        } => {
            let pooling = pool.pooling()?;
            let net = identity_network(c, depth, &pooling, bound)?;
            let acc = identity_accounting(c, depth, &pooling, bound)?;
            save_checkpoint(&out, &net, None)?;
            let summary = json!({
                "norm_sq": net.norm_sq(),
                "weight_norm_sq": net.weight_norm_sq(),
                "m_bar": pooling.m_bar,
                "identity_layers": depth - 1,
                "identity_layer_norm_sq": acc.per_hidden_layer,
                "readout_norm_sq": acc.last_layer,
                "depth_c_m_bar": (depth * c) as f64 * pooling.m_bar,
                "accounting": acc,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Construct::Parallel { a, b, out } => {
            let (a, b) = (load(&a)?, load(&b)?);
            let net = parallel_sum(&a, &b)?;
            save_checkpoint(&out, &net, None)?;
            println!(
                "{}",
                json!({"norm_sq": net.norm_sq(), "a_norm_sq": a.norm_sq(), "b_norm_sq": b.norm_sq()})
            );
        }
        Construct::Compose {
            first,
            second,
            bound,
            out,
            middle,
        } => {
            let (g, h) = (load(&first)?, load(&second)?);
            let summary = match middle {
                Some(m) => {
                    let (net, acc) = bottleneck_witness(&g, &h, m, bound)?;
                    save_checkpoint(&out, &net, None)?;
                    serde_json::to_value(acc)?
                }
                None => {
                    let (net, acc) = compose(&g, &h, bound)?;
                    save_checkpoint(&out, &net, None)?;
                    serde_json::to_value(acc)?
                }
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Construct::Stride {
            pool,
            c,
            s,
            inner_depth,
            bound,
            out,
        } => {
            let pooling = pool.pooling()?;
            let net = stride_identity_witness(c, &pooling, s, inner_depth, bound)?;
            let manifest = save_stride_network(&out, &net)?;
            println!(
                "{}",
                json!({"manifest": manifest, "depth": net.depth(), "norm_sq": net.norm_sq()})
            );
        }
        Construct::Embedding {
            n,
            count,
            width,
            seed,
            out,
        } => {
            let data = gen_translated_bumps(count, n, width, seed)?;
            let emb = unique_embedding(data.inputs, Grid::line(n), 1, 1.0)?;
            save_checkpoint(&out, &emb.inverse, None)?;
            println!(
                "{}",
                json!({
                    "channels": emb.channels(),
                    "epsilon": emb.epsilon,
                    "max_recovery_error": emb.max_recovery_error()?,
                    "inverse_norm_sq": emb.inverse.norm_sq(),
                })
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { config, out } => {
            let config = read_config(&config)?;
            let outcome = run_experiment(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&outcome.manifest)?);
        }
        Command::Spectrum { model, out, mass } => {
            let net = load(&model)?;
            write_or_print(out.as_deref(), &spectrum_csv(&layer_spectrum_report(&net)?))?;
            if let Some(mass) = mass {
                for c in layer_concentration(&net, mass)? {
                    eprintln!(
                        "layer {}: {} entries at frequencies {:?}, non-constant mass {:.4}",
                        c.layer, c.entries_needed, c.frequencies, c.nonconstant_mass
                    );
                }
            }
        }
        Command::Bounds {
            model,
            config,
            levels,
            tau,
            out,
        } => {
            let net = load(&model)?;
            let probes = match config {
                Some(path) => default_probes(&read_config(&path)?.dataset()?.inputs, &levels),
                None => {
                    let c = net.widths()[0];
                    levels
                        .iter()
                        .map(|&v| Signal::constant(net.input_grid(), &vec![v; c]))
                        .collect()
                }
            };
            let report = bounds_report(&net, &probes, None, tau)?;
            write_or_print(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Construct { which } => construct(which)?,
        Command::Resample {
            direction,
            input,
            s,
            out,
        } => {
            let bytes = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let x: Signal = serde_json::from_slice(&bytes).map_err(cbn_core::Error::from)?;
            let y = match direction {
                Direction::Down => downsample(&x, s)?,
                Direction::Up => upsample(&x, s)?,
            };
            write_or_print(out.as_deref(), &(serde_json::to_string(&y)? + "\n"))?;
        }
        Command::Verify { fast, seed } => {
            let results = run_checks(fast, seed);
            print!("{}", format_table(&results));
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Data { config, out } => {
            let data = read_config(&config)?.dataset()?;
            std::fs::write(&out, serde_json::to_string(&data)?)?;
            eprintln!("{} samples written to {}", data.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cbn_core::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

