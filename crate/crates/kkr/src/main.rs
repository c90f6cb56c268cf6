//! `kkr` command line: simulate benchmark datasets, fit and run models,
//! and drive the benchmark sweeps. Results go to files; diagnostics go to
//! stderr. Exit codes: 2 config validation, 3 numeric/simulation failure,
//! 4 i/o failure.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

use kkr::config::{RunConfig, INTEGRATOR_SUBSTEPS};
use kkr::dynamics::{load_csv, sample_dataset, save_csv};
use kkr::experiments::{
    kernel_convergence, sweep, write_aggregate_csv, write_results_csv, write_slopes_csv,
};
use kkr::model::KKRModel;
use kkr::{Error, Result};

#[derive(Parser)]
#[command(name = "kkr", version, about = "Koopman kernel regression benchmark harness")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Kkr,
    Edmd,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on a dataset CSV and save it as JSON.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Input dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output model JSON path.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "kkr")]
        method: MethodArg,
    },
    /// Forecast from a saved model and write the rollout as CSV.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        /// Initial state, comma-separated (e.g. "0.3,-0.5").
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// Forecast steps beyond the initial sample.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark sweep; writes per-repetition, aggregate and slope
    /// CSVs plus a manifest echoing the resolved configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to io.out_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo convergence study of the sampled kernel.
    KernelConvergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    kkr::linalg::pin_blas_threads();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            std::process::exit(2);
        }
    }
    let outcome = match cli.command {
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Fit {
            config,
            data,
            model,
            method,
        } => cmd_fit(&config, &data, &model, method),
        Command::Forecast {
            model,
            x0,
            steps,
            out,
        } => cmd_forecast(&model, &x0, steps, &out),
        Command::Sweep { config, out } => cmd_sweep(&config, out.as_deref()),
        Command::KernelConvergence { config, out } => {
            cmd_kernel_convergence(&config, out.as_deref())
        }
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::NonFinite(_)
        | Error::DimensionMismatch(_)
        | Error::SingularGram(_)
        | Error::Overflow(_)
        | Error::NotConjugateClosed => 3,
        Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Schema(_) => 4,
    }
}

fn cmd_simulate(config_path: &Path, out: &Path) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let system_section = config.system_section()?;
    let data = config.data_section()?;
    let system = system_section.system()?;
    let observable = system_section.observable()?;
    let dataset = sample_dataset(
        &system,
        &observable,
        &system_section.init_box(),
        data.n,
        data.dt,
        data.h,
        INTEGRATOR_SUBSTEPS,
        data.seed,
    )?;
    save_csv(&dataset, out)?;
    println!(
        "wrote {} trajectories (H = {}, dt = {}) to {}",
        dataset.len(),
        dataset.horizon(),
        dataset.dt(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(config_path: &Path, data_path: &Path, model_path: &Path, method: MethodArg) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let dataset = load_csv(data_path)?;
    let kernel = config.kernel_section()?;
    let base = kernel.base()?;
    match method {
        MethodArg::Kkr => {
            let spectrum_section = config.spectrum_section()?;
            let kkr_section = config.kkr_section()?;
            let spectrum = spectrum_section.sampler.sample(
                spectrum_section.d,
                dataset.dt(),
                spectrum_section.seed,
            );
            let model = kkr::model::fit(
                &dataset,
                &spectrum,
                &base,
                kernel.normalized,
                &kkr_section.config()?,
            )?;
            model.save_json(model_path)?;
            println!(
                "fitted kkr model (N = {}, D = {}, H = {}) -> {}",
                model.n_train(),
                model.spectrum.len(),
                model.horizon,
                model_path.display()
            );
        }
        MethodArg::Edmd => {
            let edmd_section = config.edmd_section()?;
            let pairs = kkr::edmd::make_pairs(&dataset)?;
            let model = kkr::edmd::fit_pcr(&pairs, edmd_section.rank, &base, edmd_section.ridge)?;
            model.save_json(model_path)?;
            println!(
                "fitted edmd model (M = {}, rank = {}) -> {}",
                model.train_inputs.nrows(),
                model.rank,
                model_path.display()
            );
        }
    }
    Ok(())
}

fn cmd_forecast(model_path: &Path, x0_text: &str, steps: usize, out: &Path) -> Result<()> {
    let x0: Vec<f64> = x0_text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse x0 component '{s}'")))
        })
        .collect::<Result<_>>()?;
    let text = std::fs::read_to_string(model_path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let method = value
        .get("method")
        .and_then(|m| m.as_str())
        .ok_or_else(|| Error::Schema("model file has no 'method' tag".into()))?;
    let (values, max_imag, dt) = match method {
        "kkr" => {
            let model = KKRModel::from_json(&text)?;
            if x0.len() != model.state_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has dim {}, model expects {}",
                    x0.len(),
                    model.state_dim()
                )));
            }
            let fc = model.forecast(&x0, steps);
            (fc.values, fc.max_imag, model.dt)
        }
        "edmd" => {
            let model = kkr::edmd::EDMDModel::from_json(&text)?;
            if x0.len() != model.state_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "x0 has dim {}, model expects {}",
                    x0.len(),
                    model.state_dim()
                )));
            }
            let fc = model.forecast(&x0, steps);
            (fc.values, fc.max_imag, model.dt)
        }
        other => {
            return Err(Error::Schema(format!(
                "unknown model method '{other}'"
            )))
        }
    };
    let scale = values.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    if max_imag > 1e-8 * scale {
        log::warn!("discarded imaginary part up to {max_imag:.3e} (max |y| = {scale:.3e})");
    }
    let mut w = String::from("step,t,y\n");
    for (h, v) in values.iter().enumerate() {
        w.push_str(&format!("{},{:.16e},{:.16e}\n", h, h as f64 * dt, v));
    }
    std::fs::write(out, w)?;
    println!("wrote {} forecast steps to {}", values.len(), out.display());
    Ok(())
}

fn resolve_out_dir(config: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    match out {
        Some(dir) => Ok(dir.to_path_buf()),
        None => config
            .io
            .as_ref()
            .map(|io| io.out_dir.clone())
            .ok_or_else(|| {
                Error::InvalidConfig("no output directory: pass --out or set io.out_dir".into())
            }),
    }
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "kkr",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "threads": rayon::current_num_threads(),
        "config": config,
    });
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn cmd_sweep(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let dir = resolve_out_dir(&config, out)?;
    std::fs::create_dir_all(&dir)?;
    let plan = config.sweep_plan()?;
    let results = sweep(&plan)?;
    write_results_csv(&results, dir.join("results.csv"))?;
    write_aggregate_csv(&results, dir.join("aggregate.csv"))?;
    write_slopes_csv(&results, dir.join("slopes.csv"))?;
    write_manifest(&dir, "sweep", &config)?;
    for result in &results {
        println!(
            "{} {}-sweep: {} rows, slope = {:.4} (defined: {})",
            result.method,
            result.axis,
            result.rows.len(),
            result.loglog_slope,
            result.slope_defined
        );
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn cmd_kernel_convergence(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let config = RunConfig::from_path(config_path)?;
    let dir = resolve_out_dir(&config, out)?;
    std::fs::create_dir_all(&dir)?;
    let system_section = config.system_section()?;
    let data = config.data_section()?;
    let kernel = config.kernel_section()?;
    let experiment = config.experiment_section()?;
    let d_base = experiment.d_base.ok_or_else(|| {
        Error::InvalidConfig("experiment.d_base is required for kernel-convergence".into())
    })?;
    let runs = experiment.runs.unwrap_or(experiment.repetitions);

    let system = system_section.system()?;
    let observable = system_section.observable()?;
    let dataset = sample_dataset(
        &system,
        &observable,
        &system_section.init_box(),
        data.n,
        data.dt,
        data.h,
        INTEGRATOR_SUBSTEPS,
        data.seed,
    )?;
    let result = kernel_convergence(
        &dataset,
        &experiment.grid,
        d_base,
        runs,
        &kernel.base()?,
        kernel.normalized,
        experiment.master_seed,
    )?;
    result.write_csv(dir.join("kernel_convergence.csv"))?;
    write_manifest(&dir, "kernel-convergence", &config)?;
    let (slope, _, defined) = result.loglog_slope();
    println!(
        "kernel convergence over {} grid points: slope = {slope:.4} (defined: {defined})",
        result.d_grid.len()
    );
    println!("results in {}", dir.display());
    Ok(())
}
