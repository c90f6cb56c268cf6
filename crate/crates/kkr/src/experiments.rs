//! Benchmark harness: risk estimation, parameter sweeps with seeded
//! repetitions, log-log rate fits and the kernel Monte-Carlo convergence
//! study.
//!
//! # Seed scheme
//!
//! Every random draw is derived from the master seed by a counter scheme:
//! `derive_seed(master, cell, rep, role)` mixes the grid-cell index, the
//! repetition index and a role tag (`Data` for the training set,
//! `Spectrum` for eigenvalue sampling, `Split` for held-out test sets and
//! train/test splits) through a SplitMix64 finalizer. Results are merged
//! by `(cell, repetition)` key, so parallel and serial runs produce
//! identical CSVs.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::dynamics::{sample_dataset, Dataset, ObservableSpec, SystemSpec};
use crate::edmd::{fit_pcr, make_pairs, EDMDModel};
use crate::kernel::{base_block, scalar_eigen_kernel, BaseKernelSpec};
use crate::linalg::loglog_slope;
use crate::model::{fit, KKRConfig, KKRModel};
use crate::spectra::{
    mu_powers, sample_conjugate_pairs, sample_structured, sample_uniform_disk, Spectrum,
};
use crate::{Error, Result};

/// Roles of derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Data = 0,
    Spectrum = 1,
    Split = 2,
}

/// SplitMix64-style seed derivation; documented scheme for reproducibility.
pub fn derive_seed(master: u64, cell: u64, rep: u64, role: Role) -> u64 {
    let mut z = master
        ^ cell.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ rep.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (role as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kkr,
    Edmd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Kkr => write!(f, "kkr"),
            Method::Edmd => write!(f, "edmd"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    N,
    D,
    H,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::N => write!(f, "N"),
            SweepAxis::D => write!(f, "D"),
            SweepAxis::H => write!(f, "H"),
        }
    }
}

/// Anything that produces multi-step forecasts from an initial state.
pub trait Forecaster {
    fn forecast_values(&self, x0: &[f64], horizon: usize) -> Vec<f64>;
    fn method(&self) -> Method;
    fn rank(&self) -> usize;
}

impl Forecaster for KKRModel {
    fn forecast_values(&self, x0: &[f64], horizon: usize) -> Vec<f64> {
        self.forecast(x0, horizon).values
    }
    fn method(&self) -> Method {
        Method::Kkr
    }
    fn rank(&self) -> usize {
        self.spectrum.len()
    }
}

impl Forecaster for EDMDModel {
    fn forecast_values(&self, x0: &[f64], horizon: usize) -> Vec<f64> {
        self.forecast(x0, horizon).values
    }
    fn method(&self) -> Method {
        Method::Edmd
    }
    fn rank(&self) -> usize {
        self.rank
    }
}

/// Mean over trajectories of the squared Euclidean norm of the
/// length-`H+1` forecast-error vector.
pub fn risk<F: Forecaster + ?Sized>(model: &F, dataset: &Dataset) -> f64 {
    let horizon = dataset.horizon();
    let total: f64 = dataset
        .trajectories()
        .iter()
        .map(|traj| {
            let forecast = model.forecast_values(
                traj.initial_state().as_slice().expect("contiguous"),
                horizon,
            );
            traj.outputs
                .iter()
                .zip(forecast.iter())
                .map(|(y, yhat)| (y - yhat) * (y - yhat))
                .sum::<f64>()
        })
        .sum();
    total / dataset.len() as f64
}

/// Risk values of one fitted model on one train/test pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RiskReport {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub horizon: usize,
    pub seed: u64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub excess_risk: f64,
}

/// Evaluates train (empirical) risk, test risk and their absolute gap.
pub fn excess_risk<F: Forecaster + ?Sized>(
    model: &F,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> RiskReport {
    let train_risk = risk(model, train);
    let test_risk = risk(model, test);
    RiskReport {
        method: model.method(),
        n: train.len(),
        d: model.rank(),
        horizon: train.horizon(),
        seed,
        train_risk,
        test_risk,
        excess_risk: (test_risk - train_risk).abs(),
    }
}

/// Spectrum sampler selection for experiment plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSampler {
    UniformDisk,
    ConjugatePairs,
    Structured,
}

impl SpectrumSampler {
    pub fn sample(&self, count: usize, dt: f64, seed: u64) -> Spectrum {
        match self {
            SpectrumSampler::UniformDisk => sample_uniform_disk(count, dt, seed),
            SpectrumSampler::ConjugatePairs => sample_conjugate_pairs(count, dt, seed),
            SpectrumSampler::Structured => sample_structured(count, dt, seed),
        }
    }
}

/// A fully resolved sweep: one axis, fixed everything else.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub grid: Vec<usize>,
    pub system: SystemSpec,
    pub observable: ObservableSpec,
    pub init_box: Vec<(f64, f64)>,
    pub dt: f64,
    /// Horizon when the axis is not H.
    pub horizon: usize,
    /// Training size when the axis is not N.
    pub n_train: usize,
    /// KKR spectrum size when the axis is not D.
    pub d: usize,
    /// EDMD rank when the axis is not D.
    pub edmd_rank: usize,
    pub base: BaseKernelSpec,
    pub normalized: bool,
    pub sampler: SpectrumSampler,
    pub kkr: KKRConfig,
    pub edmd_ridge: f64,
    pub n_test: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub substeps: usize,
}

impl SweepPlan {
    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid must be non-empty".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        if self.repetitions < 2 {
            return Err(Error::InvalidConfig(
                "sweeps need at least two repetitions".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        Ok(())
    }
}

/// One successful repetition in a sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: usize,
    pub rep: usize,
    pub report: RiskReport,
}

/// Mean/std aggregates of one grid cell (sample std, ddof = 1).
#[derive(Debug, Clone, Copy)]
pub struct CellAggregate {
    pub axis_value: usize,
    pub count: usize,
    pub mean_train: f64,
    pub std_train: f64,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_excess: f64,
    pub std_excess: f64,
}

/// Per-method result of a sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub method: Method,
    pub axis: SweepAxis,
    pub grid: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellAggregate>,
    /// Log-log slope of the per-axis figure of merit (excess risk for the
    /// N and H axes, test risk for the D axis) against the axis value.
    pub loglog_slope: f64,
    pub slope_residual: f64,
    pub slope_defined: bool,
}

impl SweepResult {
    pub fn cell(&self, axis_value: usize) -> Option<&CellAggregate> {
        self.cells.iter().find(|c| c.axis_value == axis_value)
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (values.len() - 1) as f64;
    var.sqrt()
}

/// The per-axis figure of merit: what the corresponding benchmark figures
/// plot (excess risk over N and H, test risk over D).
pub fn axis_metric(axis: SweepAxis, cell: &CellAggregate) -> f64 {
    match axis {
        SweepAxis::N | SweepAxis::H => cell.mean_excess,
        SweepAxis::D => cell.mean_test,
    }
}

/// Runs a sweep: for every grid cell and repetition, fresh seeds for data
/// and spectrum, fit each selected method, evaluate risks. Failures are
/// recorded as missing cells rather than aborting the sweep.
pub fn sweep(plan: &SweepPlan) -> Result<Vec<SweepResult>> {
    plan.validate()?;
    plan.system.validate()?;
    plan.observable.validate(plan.system.state_dim)?;
    let jobs: Vec<(usize, usize)> = (0..plan.grid.len())
        .flat_map(|c| (0..plan.repetitions).map(move |r| (c, r)))
        .collect();

    struct JobOutput {
        cell: usize,
        rep: usize,
        kkr: Option<RiskReport>,
        edmd: Option<RiskReport>,
    }

    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|&(cell, rep)| {
            let axis_value = plan.grid[cell];
            let (n_train, d_kkr, d_edmd, horizon) = match plan.axis {
                SweepAxis::N => (axis_value, plan.d, plan.edmd_rank, plan.horizon),
                SweepAxis::D => (plan.n_train, axis_value, axis_value, plan.horizon),
                SweepAxis::H => (plan.n_train, plan.d, plan.edmd_rank, axis_value),
            };
            let data_seed = derive_seed(plan.master_seed, cell as u64, rep as u64, Role::Data);
            let spectrum_seed =
                derive_seed(plan.master_seed, cell as u64, rep as u64, Role::Spectrum);
            let test_seed = derive_seed(plan.master_seed, cell as u64, rep as u64, Role::Split);

            let mut out = JobOutput {
                cell,
                rep,
                kkr: None,
                edmd: None,
            };
            let data = (|| -> Result<(Dataset, Dataset)> {
                let train = sample_dataset(
                    &plan.system,
                    &plan.observable,
                    &plan.init_box,
                    n_train,
                    plan.dt,
                    horizon,
                    plan.substeps,
                    data_seed,
                )?;
                let test = sample_dataset(
                    &plan.system,
                    &plan.observable,
                    &plan.init_box,
                    plan.n_test,
                    plan.dt,
                    horizon,
                    plan.substeps,
                    test_seed,
                )?;
                Ok((train, test))
            })();
            let (train, test) = match data {
                Ok(pair) => pair,
                Err(e) => {
                    log::warn!("cell {axis_value} rep {rep}: data generation failed: {e}");
                    return out;
                }
            };

            if plan.methods.contains(&Method::Kkr) {
                let spectrum = plan.sampler.sample(d_kkr, plan.dt, spectrum_seed);
                match fit(&train, &spectrum, &plan.base, plan.normalized, &plan.kkr) {
                    Ok(model) => {
                        out.kkr = Some(excess_risk(&model, &train, &test, data_seed));
                    }
                    Err(e) => log::warn!("cell {axis_value} rep {rep}: kkr fit failed: {e}"),
                }
            }
            if plan.methods.contains(&Method::Edmd) {
                let result = make_pairs(&train).and_then(|pairs| {
                    let m = pairs.inputs.nrows();
                    let rank = d_edmd.min(m);
                    if rank < d_edmd {
                        log::warn!(
                            "cell {axis_value} rep {rep}: edmd rank clamped to {rank} (M = {m})"
                        );
                    }
                    fit_pcr(&pairs, rank, &plan.base, plan.edmd_ridge)
                });
                match result {
                    Ok(model) => {
                        out.edmd = Some(excess_risk(&model, &train, &test, data_seed));
                    }
                    Err(e) => log::warn!("cell {axis_value} rep {rep}: edmd fit failed: {e}"),
                }
            }
            out
        })
        .collect();

    let mut results = Vec::new();
    for method in &plan.methods {
        let mut rows: Vec<SweepRow> = outputs
            .iter()
            .filter_map(|o| {
                let report = match method {
                    Method::Kkr => o.kkr,
                    Method::Edmd => o.edmd,
                }?;
                Some(SweepRow {
                    axis_value: plan.grid[o.cell],
                    rep: o.rep,
                    report,
                })
            })
            .collect();
        rows.sort_by_key(|r| (r.axis_value, r.rep));

        let mut cells = Vec::with_capacity(plan.grid.len());
        for &axis_value in &plan.grid {
            let train: Vec<f64> = rows
                .iter()
                .filter(|r| r.axis_value == axis_value)
                .map(|r| r.report.train_risk)
                .collect();
            let test: Vec<f64> = rows
                .iter()
                .filter(|r| r.axis_value == axis_value)
                .map(|r| r.report.test_risk)
                .collect();
            let excess: Vec<f64> = rows
                .iter()
                .filter(|r| r.axis_value == axis_value)
                .map(|r| r.report.excess_risk)
                .collect();
            let count = excess.len();
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            let (m_train, m_test, m_excess) = (mean(&train), mean(&test), mean(&excess));
            cells.push(CellAggregate {
                axis_value,
                count,
                mean_train: m_train,
                std_train: sample_std(&train, m_train),
                mean_test: m_test,
                std_test: sample_std(&test, m_test),
                mean_excess: m_excess,
                std_excess: sample_std(&excess, m_excess),
            });
        }

        let xs: Vec<f64> = cells
            .iter()
            .filter(|c| c.count > 0)
            .map(|c| c.axis_value as f64)
            .collect();
        let ys: Vec<f64> = cells
            .iter()
            .filter(|c| c.count > 0)
            .map(|c| axis_metric(plan.axis, c))
            .collect();
        let (slope, residual, defined) = loglog_slope(&xs, &ys);

        results.push(SweepResult {
            method: *method,
            axis: plan.axis,
            grid: plan.grid.clone(),
            rows,
            cells,
            loglog_slope: slope,
            slope_residual: residual,
            slope_defined: defined,
        });
    }
    Ok(results)
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-repetition results CSV:
/// `method,axis,axis_value,rep,seed,train_risk,test_risk,excess_risk`.
pub fn write_results_csv<P: AsRef<Path>>(results: &[SweepResult], path: P) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "method,axis,axis_value,rep,seed,train_risk,test_risk,excess_risk"
    )?;
    for result in results {
        for row in &result.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                result.method,
                result.axis,
                row.axis_value,
                row.rep,
                row.report.seed,
                fmt_float(row.report.train_risk),
                fmt_float(row.report.test_risk),
                fmt_float(row.report.excess_risk)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aggregate CSV: `method,axis,axis_value,mean,std,count`, where mean/std
/// refer to the per-axis figure of merit (excess risk for N/H, test risk
/// for D).
pub fn write_aggregate_csv<P: AsRef<Path>>(results: &[SweepResult], path: P) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "method,axis,axis_value,mean,std,count")?;
    for result in results {
        for cell in &result.cells {
            let (mean, std) = match result.axis {
                SweepAxis::N | SweepAxis::H => (cell.mean_excess, cell.std_excess),
                SweepAxis::D => (cell.mean_test, cell.std_test),
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                result.method,
                result.axis,
                cell.axis_value,
                fmt_float(mean),
                fmt_float(std),
                cell.count
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Slope summary CSV: `method,axis,slope,residual,cells,defined`.
pub fn write_slopes_csv<P: AsRef<Path>>(results: &[SweepResult], path: P) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "method,axis,slope,residual,cells,defined")?;
    for result in results {
        let cells = result.cells.iter().filter(|c| c.count > 0).count();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            result.method,
            result.axis,
            fmt_float(result.loglog_slope),
            fmt_float(result.slope_residual),
            cells,
            result.slope_defined
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Result of the kernel Monte-Carlo convergence study.
#[derive(Debug, Clone)]
pub struct KernelConvergenceResult {
    pub d_grid: Vec<usize>,
    pub d_base: usize,
    pub runs: usize,
    pub points: usize,
    /// Mean (over runs) of the pair-averaged Frobenius-norm difference.
    pub mean: Vec<f64>,
    /// Sample std over runs.
    pub std: Vec<f64>,
}

impl KernelConvergenceResult {
    /// Std of the run mean, `std / sqrt(runs)`.
    pub fn std_of_mean(&self) -> Vec<f64> {
        self.std
            .iter()
            .map(|s| s / (self.runs as f64).sqrt())
            .collect()
    }

    pub fn loglog_slope(&self) -> (f64, f64, bool) {
        let xs: Vec<f64> = self.d_grid.iter().map(|d| *d as f64).collect();
        loglog_slope(&xs, &self.mean)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "d,mean,std,runs")?;
        for (i, d) in self.d_grid.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                d,
                fmt_float(self.mean[i]),
                fmt_float(self.std[i]),
                self.runs
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum of matrix eigenfunction kernels over a spectrum for one base-kernel
/// block (evaluated through the shared scalar contraction).
pub fn eigen_kernel_sum(
    block: &Array2<f64>,
    spectrum: &Spectrum,
    normalized: bool,
) -> Result<Array2<Complex64>> {
    let h1 = block.nrows();
    let mut acc = Array2::from_elem((h1, h1), Complex64::new(0.0, 0.0));
    for mu in &spectrum.mus {
        let mp = mu_powers(*mu, h1 - 1);
        let s = scalar_eigen_kernel(block.view(), &mp, &mp, normalized)?;
        for r in 0..h1 {
            let pr = mp.powers[r] * s;
            for c in 0..h1 {
                acc[[r, c]] += pr * mp.powers[c].conj();
            }
        }
    }
    Ok(acc)
}

/// Frobenius norm of `A - scale * B`.
pub fn frobenius_diff(a: &Array2<Complex64>, b: &Array2<Complex64>, scale: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y * scale).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Monte-Carlo convergence of sampled Koopman kernels.
///
/// Trajectory pairs are taken from the dataset (`(0,1), (2,3), ...`). A
/// baseline kernel is built from `d_base` eigenvalues; each run samples
/// one eigenvalue sequence of length `max(d_grid)` and reports, at every
/// grid size `D`, the pair-averaged Frobenius distance between the
/// baseline and the partial sum rescaled by `d_base / D` (both sides then
/// estimate the same disk-averaged kernel up to Monte-Carlo error).
pub fn kernel_convergence(
    dataset: &Dataset,
    d_grid: &[usize],
    d_base: usize,
    runs: usize,
    base: &BaseKernelSpec,
    normalized: bool,
    seed: u64,
) -> Result<KernelConvergenceResult> {
    if d_grid.is_empty() || d_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "d_grid must be non-empty and strictly increasing".into(),
        ));
    }
    let d_max = *d_grid.last().expect("non-empty");
    if d_base < d_max {
        return Err(Error::InvalidConfig(format!(
            "d_base ({d_base}) must be at least max(d_grid) ({d_max})"
        )));
    }
    if d_base < 10 * d_max {
        log::warn!(
            "d_base = {d_base} is below 10 x max(d_grid) = {}; the baseline's own \
             Monte-Carlo error will flatten the top of the curve",
            10 * d_max
        );
    }
    if dataset.len() < 2 {
        return Err(Error::InvalidConfig(
            "kernel convergence needs at least two trajectories".into(),
        ));
    }
    if runs < 1 {
        return Err(Error::InvalidConfig("runs must be >= 1".into()));
    }
    let points = dataset.len() / 2;
    let trajs = dataset.trajectories();
    let blocks: Vec<Array2<f64>> = (0..points)
        .map(|p| base_block(&trajs[2 * p], &trajs[2 * p + 1], base))
        .collect();

    // baseline: one large spectrum shared by all runs
    let baseline_seed = derive_seed(seed, u64::MAX, 0, Role::Spectrum);
    let baseline = sample_uniform_disk(d_base, dataset.dt(), baseline_seed);
    let baseline_kernels: Vec<Array2<Complex64>> = blocks
        .par_iter()
        .map(|b| eigen_kernel_sum(b, &baseline, normalized))
        .collect::<Result<_>>()?;

    // per run: incremental partial sums snapshotted at the grid sizes
    let per_run: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let run_seed = derive_seed(seed, 0, run as u64, Role::Spectrum);
            let sequence = sample_uniform_disk(d_max, dataset.dt(), run_seed);
            let h1 = dataset.horizon() + 1;
            let mut partials: Vec<Array2<Complex64>> = blocks
                .iter()
                .map(|_| Array2::from_elem((h1, h1), Complex64::new(0.0, 0.0)))
                .collect();
            let mut grid_iter = d_grid.iter().peekable();
            let mut values = Vec::with_capacity(d_grid.len());
            for (j, mu) in sequence.mus.iter().enumerate() {
                let mp = mu_powers(*mu, h1 - 1);
                for (block, partial) in blocks.iter().zip(partials.iter_mut()) {
                    let s = scalar_eigen_kernel(block.view(), &mp, &mp, normalized)?;
                    for r in 0..h1 {
                        let pr = mp.powers[r] * s;
                        for c in 0..h1 {
                            partial[[r, c]] += pr * mp.powers[c].conj();
                        }
                    }
                }
                while let Some(&&d) = grid_iter.peek() {
                    if d != j + 1 {
                        break;
                    }
                    grid_iter.next();
                    let scale = d_base as f64 / d as f64;
                    let avg = partials
                        .iter()
                        .zip(baseline_kernels.iter())
                        .map(|(partial, base_k)| frobenius_diff(base_k, partial, scale))
                        .sum::<f64>()
                        / points as f64;
                    values.push(avg);
                }
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;

    let mut mean = Vec::with_capacity(d_grid.len());
    let mut std = Vec::with_capacity(d_grid.len());
    for i in 0..d_grid.len() {
        let values: Vec<f64> = per_run.iter().map(|r| r[i]).collect();
        let m = values.iter().sum::<f64>() / values.len() as f64;
        mean.push(m);
        std.push(sample_std(&values, m));
    }
    Ok(KernelConvergenceResult {
        d_grid: d_grid.to_vec(),
        d_base,
        runs,
        points,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pin_blas_threads;
    use approx::assert_abs_diff_eq;

    struct ZeroForecaster;
    impl Forecaster for ZeroForecaster {
        fn forecast_values(&self, _x0: &[f64], horizon: usize) -> Vec<f64> {
            vec![0.0; horizon + 1]
        }
        fn method(&self) -> Method {
            Method::Kkr
        }
        fn rank(&self) -> usize {
            0
        }
    }

    struct OracleForecaster(Dataset);
    impl Forecaster for OracleForecaster {
        fn forecast_values(&self, x0: &[f64], horizon: usize) -> Vec<f64> {
            // replay the matching trajectory
            let traj = self
                .0
                .trajectories()
                .iter()
                .find(|t| t.initial_state().as_slice().unwrap() == x0)
                .expect("known initial state");
            traj.outputs.iter().take(horizon + 1).cloned().collect()
        }
        fn method(&self) -> Method {
            Method::Kkr
        }
        fn rank(&self) -> usize {
            0
        }
    }

    fn bistable_dataset(n: usize, h: usize, seed: u64) -> Dataset {
        sample_dataset(
            &SystemSpec::bistable(4.0, -16.0),
            &ObservableSpec::coordinate(0),
            &[(-1.0, 1.0)],
            n,
            1.0 / 14.0,
            h,
            10,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn derive_seed_is_stable_and_role_sensitive() {
        let a = derive_seed(42, 0, 0, Role::Data);
        let b = derive_seed(42, 0, 0, Role::Data);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, 0, 0, Role::Spectrum));
        assert_ne!(a, derive_seed(42, 0, 0, Role::Split));
        assert_ne!(a, derive_seed(42, 1, 0, Role::Data));
        assert_ne!(a, derive_seed(42, 0, 1, Role::Data));
        assert_ne!(a, derive_seed(43, 0, 0, Role::Data));
    }

    #[test]
    fn risk_trivial_values() {
        let ds = bistable_dataset(3, 4, 1);
        let perfect = OracleForecaster(ds.clone());
        assert_eq!(risk(&perfect, &ds), 0.0);

        // zero forecaster on y = 1, H = 1, N = 1 gives ||(1,1)||^2 = 2
        use ndarray::array;
        let traj =
            crate::dynamics::Trajectory::new(0, 0.1, array![[1.0], [1.0]], array![1.0, 1.0])
                .unwrap();
        let ds1 = Dataset::new(vec![traj]).unwrap();
        assert_eq!(risk(&ZeroForecaster, &ds1), 2.0);
    }

    #[test]
    fn risk_permutation_invariant() {
        let ds = bistable_dataset(5, 4, 3);
        let mut reversed = ds.trajectories().to_vec();
        reversed.reverse();
        let ds_rev = Dataset::new(reversed).unwrap();
        let a = risk(&ZeroForecaster, &ds);
        let b = risk(&ZeroForecaster, &ds_rev);
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        assert!(a >= 0.0);
    }

    #[test]
    fn excess_risk_same_sets_is_zero() {
        let ds = bistable_dataset(4, 3, 5);
        let report = excess_risk(&ZeroForecaster, &ds, &ds, 7);
        assert_eq!(report.excess_risk, 0.0);
        assert_eq!(report.train_risk, report.test_risk);
        assert_eq!(report.n, 4);
        assert_eq!(report.horizon, 3);
    }

    fn tiny_plan(grid: Vec<usize>, axis: SweepAxis) -> SweepPlan {
        SweepPlan {
            axis,
            grid,
            system: SystemSpec::bistable(4.0, -16.0),
            observable: ObservableSpec::coordinate(0),
            init_box: vec![(-1.0, 1.0)],
            dt: 1.0 / 14.0,
            horizon: 6,
            n_train: 6,
            d: 8,
            edmd_rank: 4,
            base: BaseKernelSpec::Rbf { length_scale: 0.05 },
            normalized: true,
            sampler: SpectrumSampler::UniformDisk,
            kkr: KKRConfig::default(),
            edmd_ridge: 1e-8,
            n_test: 10,
            repetitions: 3,
            master_seed: 99,
            methods: vec![Method::Kkr, Method::Edmd],
            substeps: 10,
        }
    }

    #[test]
    fn sweep_produces_full_grid_and_is_reproducible() {
        pin_blas_threads();
        let plan = tiny_plan(vec![4, 8], SweepAxis::N);
        let a = sweep(&plan).unwrap();
        let b = sweep(&plan).unwrap();
        assert_eq!(a.len(), 2);
        for (ra, rb) in a.iter().zip(b.iter()) {
            assert_eq!(ra.rows.len(), rb.rows.len());
            assert_eq!(ra.rows.len(), 2 * 3);
            for (x, y) in ra.rows.iter().zip(rb.rows.iter()) {
                assert_eq!(x.report.train_risk, y.report.train_risk);
                assert_eq!(x.report.test_risk, y.report.test_risk);
            }
            assert_eq!(ra.loglog_slope, rb.loglog_slope);
        }
    }

    #[test]
    fn sweep_csvs_are_deterministic() {
        pin_blas_threads();
        let plan = tiny_plan(vec![3, 6], SweepAxis::D);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("r1.csv");
        let p2 = dir.path().join("r2.csv");
        let results = sweep(&plan).unwrap();
        write_results_csv(&results, &p1).unwrap();
        let results2 = sweep(&plan).unwrap();
        write_results_csv(&results2, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "results CSV must be byte-identical across runs"
        );
        let agg = dir.path().join("agg.csv");
        write_aggregate_csv(&results, &agg).unwrap();
        let text = std::fs::read_to_string(&agg).unwrap();
        assert!(text.starts_with("method,axis,axis_value,mean,std,count\n"));
        let slopes = dir.path().join("slopes.csv");
        write_slopes_csv(&results, &slopes).unwrap();
        assert!(std::fs::read_to_string(&slopes)
            .unwrap()
            .starts_with("method,axis,slope,residual,cells,defined\n"));
    }

    #[test]
    fn single_point_grid_slope_is_flagged_undefined() {
        pin_blas_threads();
        let mut plan = tiny_plan(vec![5], SweepAxis::N);
        plan.methods = vec![Method::Kkr];
        let results = sweep(&plan).unwrap();
        assert!(!results[0].slope_defined);
        assert!(results[0].loglog_slope.is_nan());
    }

    #[test]
    fn h_axis_varies_horizon() {
        pin_blas_threads();
        let mut plan = tiny_plan(vec![2, 4], SweepAxis::H);
        plan.methods = vec![Method::Kkr];
        let results = sweep(&plan).unwrap();
        for row in &results[0].rows {
            assert_eq!(row.report.horizon, row.axis_value);
        }
    }

    #[test]
    fn kernel_convergence_identical_spectrum_zero_difference() {
        let ds = bistable_dataset(2, 4, 11);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let block = base_block(&ds.trajectories()[0], &ds.trajectories()[1], &base);
        let spectrum = sample_uniform_disk(50, ds.dt(), 13);
        let a = eigen_kernel_sum(&block, &spectrum, true).unwrap();
        let b = eigen_kernel_sum(&block, &spectrum, true).unwrap();
        assert_eq!(frobenius_diff(&a, &b, 1.0), 0.0);
    }

    #[test]
    fn kernel_convergence_grid_and_validation() {
        pin_blas_threads();
        let ds = bistable_dataset(4, 5, 17);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let result = kernel_convergence(&ds, &[2, 4, 8], 200, 4, &base, true, 23).unwrap();
        assert_eq!(result.d_grid, vec![2, 4, 8]);
        assert_eq!(result.mean.len(), 3);
        assert_eq!(result.points, 2);
        assert!(result.mean.iter().all(|m| *m > 0.0));
        // means shrink with D overall
        assert!(result.mean[2] < result.mean[0]);

        let err = kernel_convergence(&ds, &[8, 4], 200, 4, &base, true, 23).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = kernel_convergence(&ds, &[4, 8], 4, 4, &base, true, 23).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn kernel_convergence_reproducible_and_std_scales() {
        pin_blas_threads();
        let ds = bistable_dataset(2, 4, 19);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let r1 = kernel_convergence(&ds, &[4], 400, 60, &base, true, 29).unwrap();
        let r2 = kernel_convergence(&ds, &[4], 400, 60, &base, true, 29).unwrap();
        assert_eq!(r1.mean, r2.mean);
        assert_eq!(r1.std, r2.std);

        // doubling runs shrinks the std of the mean by about sqrt(2); the
        // first 60 runs are a prefix of the 120-run sequence
        let r_half = kernel_convergence(&ds, &[4], 400, 60, &base, true, 29).unwrap();
        let r_full = kernel_convergence(&ds, &[4], 400, 120, &base, true, 29).unwrap();
        let ratio = r_half.std_of_mean()[0] / r_full.std_of_mean()[0];
        assert!(
            (1.1..=1.9).contains(&ratio),
            "std-of-mean ratio {ratio} far from sqrt(2)"
        );
    }
}
