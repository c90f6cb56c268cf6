//! The KKR estimator: regularized least squares over the Koopman kernel,
//! eigenfunction pullback to state space, and LTI rollout forecasts.
//!
//! Fitting solves `(G + gamma I) beta = y` for the stacked targets, then
//! recovers per-eigenvalue coefficient vectors
//! `alpha_j = (k_00 + eps I)^-1 k_mu_j s_j` with
//! `s_j[i] = sum_h conj(mu_j^h) beta[i (H+1) + h]`, so that the learned
//! eigenfunctions evaluate anywhere in state space through the base
//! kernel. A forecast is then `y[h] = Re sum_j mu_j^h phi_j(x0)` — matrix
//! powers of a diagonal system, nothing else.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dynamics::Dataset;
use crate::kernel::{assemble_gram_parts, BaseKernelSpec};
use crate::linalg::{complexify, relative_residual, solve_refined, HermitianSolver};
use crate::spectra::Spectrum;
use crate::{Error, Result};

/// How complex forecasts are mapped to real outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realify {
    /// Take the real part, reporting the discarded imaginary magnitude.
    RealPart,
    /// Refuse to fit unless the spectrum is closed under conjugation
    /// (which makes forecasts real up to rounding).
    RequireConjugateClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KKRConfig {
    /// Ridge parameter of the regularized least squares problem.
    pub gamma: f64,
    /// Jitter added to the initial-condition Gram before inversion;
    /// `None` resolves to `1e-10 * N` at fit time.
    pub jitter: Option<f64>,
    pub realify: Realify,
}

impl Default for KKRConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            jitter: None,
            realify: Realify::RealPart,
        }
    }
}

impl KKRConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if let Some(j) = self.jitter {
            if !(j.is_finite() && j >= 0.0) {
                return Err(Error::InvalidConfig(format!("jitter must be >= 0, got {j}")));
            }
        }
        Ok(())
    }
}

/// A fitted KKR model.
#[derive(Debug, Clone)]
pub struct KKRModel {
    /// Configuration with the jitter resolved to the value actually used.
    pub config: KKRConfig,
    pub normalized: bool,
    pub base: BaseKernelSpec,
    pub spectrum: Spectrum,
    /// Representer coefficients, length `N (H+1)`, trajectory-major.
    pub beta: Array1<Complex64>,
    /// Pullback coefficients, row `j` holds `alpha_j` (shape `D x N`).
    pub alphas: Array2<Complex64>,
    /// Training initial conditions, `N x d`.
    pub x0s: Array2<f64>,
    pub dt: f64,
    pub horizon: usize,
}

/// A real forecast plus the magnitude of the discarded imaginary part.
#[derive(Debug, Clone)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub max_imag: f64,
}

/// The explicit LTI form of a forecast: diagonal dynamics `Lambda`,
/// initial features `phi0` and the extended observability matrix `Gamma`
/// with rows `1^T Lambda^h`.
#[derive(Debug, Clone)]
pub struct LTIPredictor {
    pub lambda: Vec<Complex64>,
    pub phi0: Vec<Complex64>,
    /// `(H'+1) x D`, `gamma[[h, j]] = mu_j^h`.
    pub gamma: Array2<Complex64>,
}

impl LTIPredictor {
    pub fn from_parts(lambda: Vec<Complex64>, phi0: Vec<Complex64>, horizon: usize) -> Self {
        let d = lambda.len();
        assert_eq!(phi0.len(), d);
        let mut gamma = Array2::from_elem((horizon + 1, d), Complex64::new(1.0, 0.0));
        for h in 1..=horizon {
            for j in 0..d {
                let prev = gamma[[h - 1, j]];
                gamma[[h, j]] = prev * lambda[j];
            }
        }
        Self {
            lambda,
            phi0,
            gamma,
        }
    }

    /// `Gamma phi0` evaluated by rolling `z <- Lambda z`.
    pub fn rollout_complex(&self) -> Vec<Complex64> {
        let horizon = self.gamma.nrows() - 1;
        let mut z = self.phi0.clone();
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(z.iter().sum());
        for _ in 1..=horizon {
            for (zj, mu) in z.iter_mut().zip(self.lambda.iter()) {
                *zj *= *mu;
            }
            out.push(z.iter().sum());
        }
        out
    }

    pub fn rollout(&self) -> Forecast {
        realify(&self.rollout_complex())
    }
}

fn realify(values: &[Complex64]) -> Forecast {
    let max_imag = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Forecast {
        values: values.iter().map(|z| z.re).collect(),
        max_imag,
    }
}

/// Fits the KKR estimator on a dataset.
///
/// `normalized` selects the pullback-weight convention of the kernel (the
/// unit-norm default or the raw printed form).
pub fn fit(
    dataset: &Dataset,
    spectrum: &Spectrum,
    base: &BaseKernelSpec,
    normalized: bool,
    config: &KKRConfig,
) -> Result<KKRModel> {
    config.validate()?;
    base.validate()?;
    if spectrum.is_empty() {
        return Err(Error::InvalidConfig("spectrum must be non-empty".into()));
    }
    if (spectrum.dt - dataset.dt()).abs() > 1e-12 * dataset.dt().abs().max(1.0) {
        return Err(Error::DimensionMismatch(format!(
            "spectrum dt {} does not match dataset dt {}",
            spectrum.dt,
            dataset.dt()
        )));
    }
    if config.realify == Realify::RequireConjugateClosed
        && !(spectrum.conjugate_closed || spectrum.is_conjugate_closed(1e-12))
    {
        return Err(Error::NotConjugateClosed);
    }

    let n = dataset.len();
    let h1 = dataset.horizon() + 1;
    let parts = assemble_gram_parts(dataset, spectrum, base, normalized)?;

    // (G + gamma I) beta = y
    let mut regularized = parts.gram.matrix.clone();
    for i in 0..regularized.nrows() {
        regularized[[i, i]] += Complex64::new(config.gamma, 0.0);
    }
    let y: Array1<Complex64> = dataset
        .stacked_outputs()
        .mapv(|v| Complex64::new(v, 0.0));
    let solver = HermitianSolver::factor(&regularized)?;
    let (mut beta, mut residual) = solve_refined(&solver, &regularized, &y, 1e-9, 6)?;
    if residual > 1e-8 {
        if matches!(solver, HermitianSolver::Cholesky(_)) {
            log::warn!(
                "refined cholesky solve left relative residual {residual:.3e}; \
                 retrying via eigensolve"
            );
            let fallback = HermitianSolver::factor_eigen(&regularized)?;
            (beta, residual) = solve_refined(&fallback, &regularized, &y, 1e-9, 6)?;
        }
        if residual > 1e-8 {
            return Err(Error::SingularGram(format!(
                "representer residual {residual:.3e} exceeds 1e-8; \
                 increase gamma or reduce the horizon"
            )));
        }
    }

    // alpha_j = (k00 + eps I)^-1 k_mu_j s_j, one factorization for all j
    let x0s = dataset.initial_states();
    let eps = config.jitter.unwrap_or(1e-10 * n as f64);
    let mut k00 = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = base.eval(
                x0s.row(i).as_slice().expect("contiguous"),
                x0s.row(j).as_slice().expect("contiguous"),
            );
            k00[[i, j]] = v;
            k00[[j, i]] = v;
        }
    }
    let mut k00c = complexify(&k00);
    for i in 0..n {
        k00c[[i, i]] += Complex64::new(eps, 0.0);
    }
    let k00_solver = HermitianSolver::factor(&k00c)?;

    let d = spectrum.len();
    let mut alphas = Array2::from_elem((d, n), Complex64::new(0.0, 0.0));
    for j in 0..d {
        let mp = &parts.powers[j];
        let mut s = Array1::from_elem(n, Complex64::new(0.0, 0.0));
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for h in 0..h1 {
                acc += mp.powers[h].conj() * beta[i * h1 + h];
            }
            s[i] = acc;
        }
        let t = parts.scalar_kernels[j].dot(&s);
        let alpha = k00_solver.solve(&t)?;
        alphas.row_mut(j).assign(&alpha);
    }

    if beta.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        || alphas.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::NonFinite("fitted coefficients contain NaN/Inf".into()));
    }

    Ok(KKRModel {
        config: KKRConfig {
            gamma: config.gamma,
            jitter: Some(eps),
            realify: config.realify,
        },
        normalized,
        base: base.clone(),
        spectrum: spectrum.clone(),
        beta,
        alphas,
        x0s,
        dt: dataset.dt(),
        horizon: dataset.horizon(),
    })
}

impl KKRModel {
    pub fn n_train(&self) -> usize {
        self.x0s.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.x0s.ncols()
    }

    /// Evaluates the learned eigenfunctions at a state:
    /// `phi_j(x0) = sum_i k(x0, X0[i]) alpha_j[i]`.
    pub fn eigenfunctions_at(&self, x0: &[f64]) -> Array1<Complex64> {
        assert_eq!(x0.len(), self.state_dim(), "state dimension mismatch");
        let k_vec: Array1<Complex64> = Array1::from_iter((0..self.n_train()).map(|i| {
            Complex64::new(
                self.base
                    .eval(x0, self.x0s.row(i).as_slice().expect("contiguous")),
                0.0,
            )
        }));
        self.alphas.dot(&k_vec)
    }

    /// The explicit LTI predictor for a given initial state and horizon.
    pub fn predictor(&self, x0: &[f64], horizon: usize) -> LTIPredictor {
        LTIPredictor::from_parts(
            self.spectrum.mus.clone(),
            self.eigenfunctions_at(x0).to_vec(),
            horizon,
        )
    }

    /// Complex forecast `[sum_j mu_j^h phi_j(x0)]_h` for `h = 0..=horizon`.
    pub fn forecast_complex(&self, x0: &[f64], horizon: usize) -> Vec<Complex64> {
        if horizon > self.horizon {
            log::warn!(
                "forecast horizon {horizon} exceeds the training horizon {}; \
                 the non-recurrence guarantee only covers the training window",
                self.horizon
            );
        }
        let phi = self.eigenfunctions_at(x0);
        let mut z = phi.to_vec();
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(z.iter().sum());
        for _ in 1..=horizon {
            for (zj, mu) in z.iter_mut().zip(self.spectrum.mus.iter()) {
                *zj *= *mu;
            }
            out.push(z.iter().sum());
        }
        out
    }

    /// Real forecast plus the discarded imaginary magnitude.
    pub fn forecast(&self, x0: &[f64], horizon: usize) -> Forecast {
        realify(&self.forecast_complex(x0, horizon))
    }
}

/// Reconstruction and feature-linearity diagnostics on a dataset.
#[derive(Debug, Clone)]
pub struct LinearityReport {
    /// Per trajectory: `max_h |y[h] - yhat[h]|`.
    pub per_trajectory_residual: Vec<f64>,
    /// `max |z[h+1] - Lambda z[h]|` over the rollout; zero by construction
    /// of the predictor.
    pub feature_propagation_defect: f64,
}

impl LinearityReport {
    pub fn max_residual(&self) -> f64 {
        self.per_trajectory_residual
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// Checks output reconstruction per trajectory and the (definitionally
/// exact) linearity of the feature rollout.
pub fn linearity_check(model: &KKRModel, dataset: &Dataset) -> Result<LinearityReport> {
    if (dataset.dt() - model.dt).abs() > 1e-12 || dataset.horizon() != model.horizon {
        return Err(Error::DimensionMismatch(
            "dataset dt/H do not match the model".into(),
        ));
    }
    let mut residuals = Vec::with_capacity(dataset.len());
    let mut defect: f64 = 0.0;
    for traj in dataset.trajectories() {
        let x0 = traj.initial_state();
        let x0 = x0.as_slice().expect("contiguous");
        let fc = model.forecast(x0, model.horizon);
        let res = traj
            .outputs
            .iter()
            .zip(fc.values.iter())
            .map(|(y, yhat)| (y - yhat).abs())
            .fold(0.0, f64::max);
        residuals.push(res);

        // replay the rollout and compare every step to Lambda * previous
        let phi = model.eigenfunctions_at(x0);
        let mut states = Vec::with_capacity(model.horizon + 1);
        states.push(phi.to_vec());
        for h in 1..=model.horizon {
            let prev = &states[h - 1];
            let next: Vec<Complex64> = prev
                .iter()
                .zip(model.spectrum.mus.iter())
                .map(|(z, mu)| z * mu)
                .collect();
            states.push(next);
        }
        for h in 0..model.horizon {
            for (j, mu) in model.spectrum.mus.iter().enumerate() {
                defect = defect.max((states[h + 1][j] - states[h][j] * mu).norm());
            }
        }
    }
    Ok(LinearityReport {
        per_trajectory_residual: residuals,
        feature_propagation_defect: defect,
    })
}

// ---------------------------------------------------------------------------
// JSON serialization: complex arrays stored as re/im lists; numbers are
// written in shortest-round-trip decimal so loading restores exact bits.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ComplexListJson {
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ComplexMatrixJson {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumJson {
    dt: f64,
    conjugate_closed: bool,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KKRModelJson {
    method: String,
    config: KKRConfig,
    normalized: bool,
    base: BaseKernelSpec,
    spectrum: SpectrumJson,
    x0: Vec<Vec<f64>>,
    beta: ComplexListJson,
    alphas: ComplexMatrixJson,
    dt: f64,
    horizon: usize,
}

impl KKRModel {
    pub fn to_json(&self) -> Result<String> {
        let json = KKRModelJson {
            method: "kkr".to_string(),
            config: self.config,
            normalized: self.normalized,
            base: self.base.clone(),
            spectrum: SpectrumJson {
                dt: self.spectrum.dt,
                conjugate_closed: self.spectrum.conjugate_closed,
                re: self.spectrum.mus.iter().map(|m| m.re).collect(),
                im: self.spectrum.mus.iter().map(|m| m.im).collect(),
            },
            x0: self
                .x0s
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            beta: ComplexListJson {
                re: self.beta.iter().map(|z| z.re).collect(),
                im: self.beta.iter().map(|z| z.im).collect(),
            },
            alphas: ComplexMatrixJson {
                re: self
                    .alphas
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|z| z.re).collect())
                    .collect(),
                im: self
                    .alphas
                    .rows()
                    .into_iter()
                    .map(|r| r.iter().map(|z| z.im).collect())
                    .collect(),
            },
            dt: self.dt,
            horizon: self.horizon,
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: KKRModelJson = serde_json::from_str(text)?;
        if json.method != "kkr" {
            return Err(Error::Schema(format!(
                "expected a kkr model, found method '{}'",
                json.method
            )));
        }
        if json.spectrum.re.len() != json.spectrum.im.len() {
            return Err(Error::Schema("spectrum re/im length mismatch".into()));
        }
        let mus: Vec<Complex64> = json
            .spectrum
            .re
            .iter()
            .zip(json.spectrum.im.iter())
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        let d = mus.len();
        let n = json.x0.len();
        if n == 0 {
            return Err(Error::Schema("model has no training points".into()));
        }
        let state_dim = json.x0[0].len();
        let mut x0s = Array2::zeros((n, state_dim));
        for (i, row) in json.x0.iter().enumerate() {
            if row.len() != state_dim {
                return Err(Error::Schema("ragged x0 matrix".into()));
            }
            x0s.row_mut(i).assign(&ArrayView1::from(&row[..]));
        }
        if json.beta.re.len() != json.beta.im.len()
            || json.beta.re.len() != n * (json.horizon + 1)
        {
            return Err(Error::Schema("beta length mismatch".into()));
        }
        let beta = Array1::from_iter(
            json.beta
                .re
                .iter()
                .zip(json.beta.im.iter())
                .map(|(&re, &im)| Complex64::new(re, im)),
        );
        if json.alphas.re.len() != d || json.alphas.im.len() != d {
            return Err(Error::Schema("alphas row count mismatch".into()));
        }
        let mut alphas = Array2::from_elem((d, n), Complex64::new(0.0, 0.0));
        for j in 0..d {
            if json.alphas.re[j].len() != n || json.alphas.im[j].len() != n {
                return Err(Error::Schema("alphas column count mismatch".into()));
            }
            for i in 0..n {
                alphas[[j, i]] = Complex64::new(json.alphas.re[j][i], json.alphas.im[j][i]);
            }
        }
        Ok(KKRModel {
            config: json.config,
            normalized: json.normalized,
            base: json.base,
            spectrum: Spectrum::new(mus, json.spectrum.dt, json.spectrum.conjugate_closed),
            beta,
            alphas,
            x0s,
            dt: json.dt,
            horizon: json.horizon,
        })
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
