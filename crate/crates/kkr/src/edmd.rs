//! Kernel EDMD baseline via principal component regression (PCR).
//!
//! Trajectories are split into one-step pairs `(x_h, x_{h+1})`; the input
//! Gram is reduced to its top principal components, the one-step operator
//! is projected into that subspace and eigendecomposed, and the output is
//! regressed on the resulting eigenfunctions. Forecasts follow the mode
//! decomposition `y[h] = Re sum_j c_j mu_j^h phi_j(x0)`.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::Eig;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dynamics::Dataset;
use crate::kernel::BaseKernelSpec;
use crate::linalg::HermitianSolver;
use crate::model::Forecast;
use crate::{Error, Result};

/// One-step snapshot pairs with outputs at the inputs.
#[derive(Debug, Clone)]
pub struct SnapshotPairs {
    /// `M x d` inputs.
    pub inputs: Array2<f64>,
    /// `M x d` successors (the time-shift of `inputs` within each trajectory).
    pub successors: Array2<f64>,
    /// Outputs at the inputs, length `M`.
    pub outputs: Array1<f64>,
    pub dt: f64,
}

/// Splits every trajectory into its `H` consecutive one-step pairs,
/// in trajectory order (`M = N H`).
pub fn make_pairs(dataset: &Dataset) -> Result<SnapshotPairs> {
    let h = dataset.horizon();
    if h < 1 {
        return Err(Error::InvalidConfig(
            "one-step pairs require a horizon of at least 1".into(),
        ));
    }
    let n = dataset.len();
    let d = dataset.state_dim();
    let m = n * h;
    let mut inputs = Array2::zeros((m, d));
    let mut successors = Array2::zeros((m, d));
    let mut outputs = Array1::zeros(m);
    let mut row = 0;
    for traj in dataset.trajectories() {
        for step in 0..h {
            inputs.row_mut(row).assign(&traj.states.row(step));
            successors.row_mut(row).assign(&traj.states.row(step + 1));
            outputs[row] = traj.outputs[step];
            row += 1;
        }
    }
    Ok(SnapshotPairs {
        inputs,
        successors,
        outputs,
        dt: dataset.dt(),
    })
}

/// A fitted kernel-PCR model.
#[derive(Debug, Clone)]
pub struct EDMDModel {
    /// Retained rank (may be lower than requested if the Gram spectrum
    /// collapsed).
    pub rank: usize,
    /// Operator eigenvalues.
    pub eigenvalues: Vec<Complex64>,
    /// `M x D` evaluation weights: `phi_j(x) = k(x, X) projection[:, j]`.
    pub projection: Array2<Complex64>,
    /// Output regression coefficients (modes).
    pub modes: Array1<Complex64>,
    pub base: BaseKernelSpec,
    /// Training inputs, `M x d`.
    pub train_inputs: Array2<f64>,
    pub dt: f64,
}

/// Fits kernel PCR on one-step pairs.
///
/// The input Gram `G_X` is eigendecomposed and the top `rank` components
/// are retained (components with eigenvalues below `1e-12` of the largest
/// are dropped with a warning). The reduced operator
/// `T = S^-1/2 U^T A U S^-1/2` with `A[i, j] = k(x+_i, x_j)` is
/// eigendecomposed, and modes are fit by ridge regression of the outputs
/// on the eigenfunctions at the inputs.
pub fn fit_pcr(
    pairs: &SnapshotPairs,
    rank: usize,
    base: &BaseKernelSpec,
    ridge: f64,
) -> Result<EDMDModel> {
    base.validate()?;
    let m = pairs.inputs.nrows();
    if rank < 1 || rank > m {
        return Err(Error::InvalidConfig(format!(
            "rank must be in [1, {m}], got {rank}"
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }

    let gram = |a: &Array2<f64>, b: &Array2<f64>| -> Array2<f64> {
        let (ra, rb) = (a.nrows(), b.nrows());
        let mut out = Array2::zeros((ra, rb));
        for i in 0..ra {
            let xi = a.row(i);
            let xi = xi.as_slice().expect("contiguous");
            for j in 0..rb {
                out[[i, j]] = base.eval(xi, b.row(j).as_slice().expect("contiguous"));
            }
        }
        out
    };

    let g_x = gram(&pairs.inputs, &pairs.inputs);
    let (values, vectors) = crate::linalg::eigh_sym(&g_x)?;
    // eigh returns ascending order; take the top `rank` from the back
    let sigma_max = values[m - 1];
    if sigma_max <= 0.0 {
        return Err(Error::SingularGram("input Gram has no positive spectrum".into()));
    }
    let mut keep: Vec<usize> = (0..rank).map(|k| m - 1 - k).collect();
    let cutoff = 1e-12 * sigma_max;
    let retained = keep
        .iter()
        .position(|&idx| values[idx] < cutoff)
        .unwrap_or(rank);
    if retained < rank {
        log::warn!(
            "requested rank {rank} but only {retained} principal components \
             exceed the spectral cutoff; reducing"
        );
        keep.truncate(retained.max(1));
    }
    let d_eff = keep.len();

    // U S^-1/2 restricted to the retained components, M x d_eff
    let mut basis = Array2::zeros((m, d_eff));
    for (col, &idx) in keep.iter().enumerate() {
        let scale = 1.0 / values[idx].sqrt();
        for r in 0..m {
            basis[[r, col]] = vectors[[r, idx]] * scale;
        }
    }

    let a = gram(&pairs.successors, &pairs.inputs);
    // T = basis^T A basis
    let t = basis.t().dot(&a).dot(&basis);
    let (eigenvalues, eigvecs) = t
        .eig()
        .map_err(|e| Error::SingularGram(format!("reduced operator eigendecomposition: {e}")))?;

    // projection = basis * W, so phi_j(x) = k(x, X) projection[:, j]
    let basis_c = basis.mapv(|v| Complex64::new(v, 0.0));
    let projection = basis_c.dot(&eigvecs);

    // eigenfunctions at the inputs and ridge regression of the outputs
    let phi = g_x.mapv(|v| Complex64::new(v, 0.0)).dot(&projection);
    let phi_h = phi.t().mapv(|z| z.conj());
    let mut normal = phi_h.dot(&phi);
    for i in 0..d_eff {
        normal[[i, i]] += Complex64::new(ridge, 0.0);
    }
    let rhs = phi_h.dot(&pairs.outputs.mapv(|v| Complex64::new(v, 0.0)));
    let modes = HermitianSolver::factor(&normal)?.solve(&rhs)?;

    Ok(EDMDModel {
        rank: d_eff,
        eigenvalues: eigenvalues.to_vec(),
        projection,
        modes,
        base: base.clone(),
        train_inputs: pairs.inputs.clone(),
        dt: pairs.dt,
    })
}

impl EDMDModel {
    pub fn state_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    /// `phi_j(x) = k(x, X) projection[:, j]`.
    pub fn eigenfunctions_at(&self, x: &[f64]) -> Array1<Complex64> {
        assert_eq!(x.len(), self.state_dim(), "state dimension mismatch");
        let k_vec: Array1<Complex64> = Array1::from_iter(
            self.train_inputs
                .rows()
                .into_iter()
                .map(|row| Complex64::new(self.base.eval(x, row.as_slice().unwrap()), 0.0)),
        );
        self.projection.t().dot(&k_vec)
    }

    /// Complex mode-decomposition forecast.
    pub fn forecast_complex(&self, x0: &[f64], horizon: usize) -> Vec<Complex64> {
        let phi = self.eigenfunctions_at(x0);
        let mut z: Vec<Complex64> = phi
            .iter()
            .zip(self.modes.iter())
            .map(|(p, c)| p * c)
            .collect();
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(z.iter().sum());
        for _ in 1..=horizon {
            for (zj, mu) in z.iter_mut().zip(self.eigenvalues.iter()) {
                *zj *= *mu;
            }
            out.push(z.iter().sum());
        }
        out
    }

    /// Real forecast `y[h] = Re sum_j c_j mu_j^h phi_j(x0)`.
    pub fn forecast(&self, x0: &[f64], horizon: usize) -> Forecast {
        let complex = self.forecast_complex(x0, horizon);
        let max_imag = complex.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        Forecast {
            values: complex.iter().map(|z| z.re).collect(),
            max_imag,
        }
    }

}

/// One-step regression residual against explicit targets.
pub fn training_residual(model: &EDMDModel, outputs: &Array1<f64>) -> f64 {
    let m = model.train_inputs.nrows();
    assert_eq!(outputs.len(), m);
    let mut residual = 0.0f64;
    for i in 0..m {
        let x = model.train_inputs.row(i);
        let phi = model.eigenfunctions_at(x.as_slice().unwrap());
        let fitted: Complex64 = phi
            .iter()
            .zip(model.modes.iter())
            .map(|(p, c)| p * c)
            .sum();
        residual += (outputs[i] - fitted.re).powi(2);
    }
    residual.sqrt()
}

// ---------------------------------------------------------------------------
// JSON serialization, mirroring the KKR model scheme.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EDMDModelJson {
    method: String,
    rank: usize,
    eigenvalues_re: Vec<f64>,
    eigenvalues_im: Vec<f64>,
    projection_re: Vec<Vec<f64>>,
    projection_im: Vec<Vec<f64>>,
    modes_re: Vec<f64>,
    modes_im: Vec<f64>,
    base: BaseKernelSpec,
    train_inputs: Vec<Vec<f64>>,
    dt: f64,
}

impl EDMDModel {
    pub fn to_json(&self) -> Result<String> {
        let json = EDMDModelJson {
            method: "edmd".to_string(),
            rank: self.rank,
            eigenvalues_re: self.eigenvalues.iter().map(|z| z.re).collect(),
            eigenvalues_im: self.eigenvalues.iter().map(|z| z.im).collect(),
            projection_re: self
                .projection
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|z| z.re).collect())
                .collect(),
            projection_im: self
                .projection
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|z| z.im).collect())
                .collect(),
            modes_re: self.modes.iter().map(|z| z.re).collect(),
            modes_im: self.modes.iter().map(|z| z.im).collect(),
            base: self.base.clone(),
            train_inputs: self
                .train_inputs
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            dt: self.dt,
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: EDMDModelJson = serde_json::from_str(text)?;
        if json.method != "edmd" {
            return Err(Error::Schema(format!(
                "expected an edmd model, found method '{}'",
                json.method
            )));
        }
        let d = json.eigenvalues_re.len();
        let m = json.train_inputs.len();
        if m == 0 || d == 0 {
            return Err(Error::Schema("empty edmd model".into()));
        }
        let state_dim = json.train_inputs[0].len();
        let mut train_inputs = Array2::zeros((m, state_dim));
        for (i, row) in json.train_inputs.iter().enumerate() {
            if row.len() != state_dim {
                return Err(Error::Schema("ragged train_inputs".into()));
            }
            train_inputs
                .row_mut(i)
                .assign(&ArrayView1::from(&row[..]));
        }
        let mut projection = Array2::from_elem((m, d), Complex64::new(0.0, 0.0));
        if json.projection_re.len() != m || json.projection_im.len() != m {
            return Err(Error::Schema("projection row count mismatch".into()));
        }
        for i in 0..m {
            if json.projection_re[i].len() != d || json.projection_im[i].len() != d {
                return Err(Error::Schema("projection column count mismatch".into()));
            }
            for j in 0..d {
                projection[[i, j]] =
                    Complex64::new(json.projection_re[i][j], json.projection_im[i][j]);
            }
        }
        Ok(EDMDModel {
            rank: json.rank,
            eigenvalues: json
                .eigenvalues_re
                .iter()
                .zip(json.eigenvalues_im.iter())
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect(),
            projection,
            modes: Array1::from_iter(
                json.modes_re
                    .iter()
                    .zip(json.modes_im.iter())
                    .map(|(&re, &im)| Complex64::new(re, im)),
            ),
            base: json.base,
            train_inputs,
            dt: json.dt,
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
