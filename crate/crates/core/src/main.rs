use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cann::bench::{format_table, load_config_dir, parse_scalar, reference_field, run_experiment, ExperimentConfig};
use cann::checkpoint::{Checkpoint, Metadata};
use cann::evolve::{error_norms, march, write_field_csv, MarchPlan};
use cann::network::{gradient_check, MlpParams};
use cann::problems::{catalog, generate_target, ProblemId};
use cann::stencil::{assemble_pairs, StencilKind, StencilSpec};
use cann::training::{split_set, train, Split};
use cann::{Error, Result};

/// Cell-average neural network solver for parabolic PDEs.
#[derive(Parser)]
#[command(name = "cann", version)]
struct Cli {
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network from an experiment config and save it as a checkpoint.
    Train(TrainArgs),
    /// March an initial condition with a trained network and report errors.
    Evolve(EvolveArgs),
    /// Run experiment configs (a file or every *.toml in a directory).
    Bench(BenchArgs),
    /// Compare backpropagation against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the parameters of a checkpoint.
    Export(ExportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Which entry of `meshes` to train on.
    #[arg(long, default_value_t = 0)]
    mesh_index: usize,
    /// Which entry of the time step list to train on.
    #[arg(long, default_value_t = 0)]
    dt_index: usize,
    /// Seed (defaults to the first seed of the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional loss history CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Problem key, e.g. heat2d (defaults to the checkpoint's).
    #[arg(long)]
    problem: Option<ProblemId>,
    /// Initial-condition variant to march.
    #[arg(long)]
    variant: String,
    /// Cell width, e.g. pi/16 (defaults to the checkpoint's).
    #[arg(long)]
    dx: Option<String>,
    /// Time step (defaults to the checkpoint's).
    #[arg(long)]
    dt: Option<String>,
    /// Final time, e.g. pi.
    #[arg(long)]
    final_time: String,
    /// Stencil (defaults to the checkpoint's).
    #[arg(long)]
    stencil: Option<StencilKind>,
    /// Field CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Config file or directory of configs.
    path: PathBuf,
    /// Output root; each experiment writes to `<out>/<name>`. Defaults to each config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Layer widths, e.g. 5,10,1.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 1])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Parameter perturbation.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let config = ExperimentConfig::load(&a.config)?;
    let point = config
        .run_points()?
        .into_iter()
        .find(|p| p.mesh_index == a.mesh_index && p.dt_index == a.dt_index)
        .ok_or_else(|| {
            Error::config(format!(
                "no run with mesh_index {} and dt_index {} in {}",
                a.mesh_index,
                a.dt_index,
                a.config.display()
            ))
        })?;
    let seed = a.seed.unwrap_or(config.seeds[0]);
    let spec = config.train_problem()?;
    let grid = spec.grid_for_dx(point.dx)?;
    let (t0, t1) = generate_target(&spec, &grid, point.dt, config.target_mode)?;
    let pairs = assemble_pairs(&t0, &t1, &spec.bc(), &config.stencil_spec())?;
    let set = match config.train.split {
        Split::RandomSplit { train_fraction } => split_set(&pairs, train_fraction, seed)?.0,
        Split::Full => pairs,
    };
    let mut tc = config.train.clone();
    tc.seed = seed;
    let outcome = train(&set, &tc, &MlpParams::init_with_gain(&config.sizes(), seed, config.init_gain)?)?;
    let metadata = Metadata {
        problem: Some(config.problem.key().into()),
        variant: Some(config.train_variant().into()),
        stencil: Some(config.stencil),
        dim: Some(config.problem.dim()),
        counts: Some(grid.counts().to_vec()),
        dx: Some(point.dx),
        dt: Some(point.dt),
        final_loss: Some(outcome.best_loss),
        iterations: Some(outcome.iterations),
        config_hash: Some(config.config_hash()?),
    };
    Checkpoint::new(outcome.params, Some(seed), metadata).save(&a.out)?;
    if let Some(path) = &a.loss_csv {
        outcome.history.write_csv(path)?;
    }
    println!(
        "loss {:e} after {} updates (converged: {}), checkpoint {}",
        outcome.best_loss,
        outcome.iterations,
        outcome.converged,
        a.out.display()
    );
    Ok(0)
}

fn required<T>(value: Option<T>, what: &str, path: &Path) -> Result<T> {
    value.ok_or_else(|| {
        Error::config(format!(
            "{what} not given and not recorded in checkpoint {}",
            path.display()
        ))
    })
}

fn cmd_evolve(a: EvolveArgs) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let m = &ck.metadata;
    let problem = match a.problem {
        Some(p) => p,
        None => required(m.problem.as_deref(), "--problem", &a.checkpoint)?.parse()?,
    };
    let spec = catalog(problem, &a.variant)?;
    let dx = match &a.dx {
        Some(s) => parse_scalar(s)?,
        None => required(m.dx, "--dx", &a.checkpoint)?,
    };
    let dt = match &a.dt {
        Some(s) => parse_scalar(s)?,
        None => required(m.dt, "--dt", &a.checkpoint)?,
    };
    let kind = match a.stencil {
        Some(k) => k,
        None => required(m.stencil, "--stencil", &a.checkpoint)?,
    };
    let t_final = parse_scalar(&a.final_time)?;
    let stencil = StencilSpec::new(kind, spec.dim());
    if ck.params.input_width() != stencil.input_width() {
        return Err(Error::config(format!(
            "checkpoint network takes {} inputs but the {kind} stencil in {} dimensions gives {}",
            ck.params.input_width(),
            spec.dim(),
            stencil.input_width()
        )));
    }
    let grid = spec.grid_for_dx(dx)?;
    let plan = MarchPlan::new(dt, t_final, spec.bc(), stencil)?;
    let start = spec.initial_field(&grid)?;
    let outcome = march(&ck.params, &start, &plan)?;
    let reference = reference_field(&spec, &grid, t_final)?;
    let report = error_norms(&outcome.field, &reference)?;
    if let Some(path) = &a.out {
        write_field_csv(&outcome.field, path)?;
    }
    println!(
        "{problem}/{} dx={} dt={} T={} steps={} L2={:.4e} Linf={:.4e} max-norm growth={:.3}",
        a.variant,
        dx,
        dt,
        t_final,
        plan.n_steps(),
        report.l2,
        report.linf,
        outcome.growth()
    );
    Ok(0)
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let configs = if a.path.is_dir() {
        load_config_dir(&a.path)?
    } else {
        vec![(a.path.clone(), ExperimentConfig::load(&a.path)?)]
    };
    if configs.is_empty() {
        return Err(Error::config(format!("no *.toml configs in {}", a.path.display())));
    }
    let mut code = 0;
    for (path, config) in configs {
        let out = match (&a.out, &config.output_dir) {
            (Some(root), _) => root.join(&config.name),
            (None, Some(dir)) => dir.clone(),
            (None, None) => PathBuf::from("results").join(&config.name),
        };
        eprintln!("running {} -> {}", path.display(), out.display());
        let record = run_experiment(&config, Some(&out))?;
        println!("{}", format_table(&record, &config)?);
        if code == 0 {
            code = record.exit_code();
        }
    }
    Ok(code)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let params = MlpParams::init(&a.sizes, a.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let v: Vec<f64> = (0..params.input_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream = rng.gen_range(0.5..2.0);
    let err = gradient_check(&params, &v, upstream, a.step)?;
    println!("sizes {:?} seed {}: max relative error {err:.3e}", a.sizes, a.seed);
    Ok(if err < 1e-6 { 0 } else { 1 })
}

fn cmd_export(a: ExportArgs) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    print!("{}", ck.dump());
    Ok(0)
}
