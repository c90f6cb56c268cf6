//! Benchmark dynamical systems, trajectory integration and datasets.
//!
//! Trajectories are uniformly time-sampled state paths with a scalar
//! observable attached; a [`Dataset`] is a collection of trajectories
//! sharing the sampling step `dt` and horizon `H`. Generation is fully
//! deterministic per seed, with one RNG stream per trajectory index.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Right-hand side of a user-supplied system: writes `dx/dt` into `out`.
pub type CustomRhs = fn(&[f64], &mut [f64]);

/// User-supplied scalar observable.
pub type CustomObservable = fn(&[f64]) -> f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Bistable,
    VanDerPol,
    Custom,
}

/// A benchmark system: a named vector field plus its coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub state_dim: usize,
    /// Only populated for `Custom` systems built in code; not serializable.
    #[serde(skip)]
    custom_rhs: Option<CustomRhs>,
}

impl SystemSpec {
    /// Scalar bi-stable system `dx/dt = a x + b x^3`.
    ///
    /// Note: with the benchmark coefficients a = 4, b = -16 the stable
    /// fixed points sit at x = ±1/2 (where a + b x^2 = 0).
    pub fn bistable(a: f64, b: f64) -> Self {
        let mut params = BTreeMap::new();
        params.insert("a".to_string(), a);
        params.insert("b".to_string(), b);
        Self {
            kind: SystemKind::Bistable,
            params,
            state_dim: 1,
            custom_rhs: None,
        }
    }

    /// Van der Pol oscillator `x'' = 2 x' (1 - 5 x^2) - 0.8 x` as a
    /// first-order system in (x, v).
    pub fn van_der_pol() -> Self {
        Self {
            kind: SystemKind::VanDerPol,
            params: BTreeMap::new(),
            state_dim: 2,
            custom_rhs: None,
        }
    }

    /// A system with a caller-provided vector field.
    pub fn custom(state_dim: usize, rhs: CustomRhs) -> Self {
        Self {
            kind: SystemKind::Custom,
            params: BTreeMap::new(),
            state_dim,
            custom_rhs: Some(rhs),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SystemKind::Bistable => {
                if self.state_dim != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "bistable system has state_dim 1, got {}",
                        self.state_dim
                    )));
                }
                for key in ["a", "b"] {
                    if !self.params.contains_key(key) {
                        return Err(Error::InvalidConfig(format!(
                            "bistable system requires parameter '{key}'"
                        )));
                    }
                }
            }
            SystemKind::VanDerPol => {
                if self.state_dim != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "van der pol system has state_dim 2, got {}",
                        self.state_dim
                    )));
                }
            }
            SystemKind::Custom => {
                if self.custom_rhs.is_none() {
                    return Err(Error::InvalidConfig(
                        "custom system has no vector field attached".to_string(),
                    ));
                }
                if self.state_dim == 0 {
                    return Err(Error::InvalidConfig("state_dim must be positive".into()));
                }
            }
        }
        if self.params.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "system parameters must be finite".to_string(),
            ));
        }
        Ok(())
    }

    /// Evaluates the vector field at `x`, writing into `out`.
    pub fn eval_rhs(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            SystemKind::Bistable => {
                let a = self.params["a"];
                let b = self.params["b"];
                out[0] = bistable_rhs(x[0], a, b);
            }
            SystemKind::VanDerPol => {
                let (dx, dv) = vanderpol_rhs((x[0], x[1]));
                out[0] = dx;
                out[1] = dv;
            }
            SystemKind::Custom => {
                let rhs = self
                    .custom_rhs
                    .expect("custom system validated before integration");
                rhs(x, out);
            }
        }
    }
}

/// `dx/dt = a x + b x^3`.
pub fn bistable_rhs(x: f64, a: f64, b: f64) -> f64 {
    a * x + b * x * x * x
}

/// Van der Pol RHS: `(x, v) -> (v, 2 v (1 - 5 x^2) - 0.8 x)`.
pub fn vanderpol_rhs(state: (f64, f64)) -> (f64, f64) {
    let (x, v) = state;
    (v, 2.0 * v * (1.0 - 5.0 * x * x) - 0.8 * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    Coordinate { index: usize },
    Norm,
    Custom,
}

/// Scalar quantity of interest `y = q(x)` attached to trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    #[serde(default)]
    pub description: String,
    #[serde(skip)]
    custom: Option<CustomObservable>,
}

impl ObservableSpec {
    pub fn coordinate(index: usize) -> Self {
        Self {
            kind: ObservableKind::Coordinate { index },
            description: format!("state coordinate {index}"),
            custom: None,
        }
    }

    pub fn norm() -> Self {
        Self {
            kind: ObservableKind::Norm,
            description: "euclidean state norm".to_string(),
            custom: None,
        }
    }

    pub fn custom(f: CustomObservable, description: &str) -> Self {
        Self {
            kind: ObservableKind::Custom,
            description: description.to_string(),
            custom: Some(f),
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        match self.kind {
            ObservableKind::Coordinate { index } => {
                if index >= state_dim {
                    return Err(Error::InvalidConfig(format!(
                        "observable coordinate {index} out of range for state_dim {state_dim}"
                    )));
                }
            }
            ObservableKind::Custom => {
                if self.custom.is_none() {
                    return Err(Error::InvalidConfig(
                        "custom observable has no function attached".to_string(),
                    ));
                }
            }
            ObservableKind::Norm => {}
        }
        Ok(())
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        match self.kind {
            ObservableKind::Coordinate { index } => state[index],
            ObservableKind::Norm => state.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ObservableKind::Custom => (self.custom.expect("validated"))(state),
        }
    }
}

impl Default for ObservableSpec {
    fn default() -> Self {
        Self::coordinate(0)
    }
}

/// A uniformly sampled state path with scalar outputs.
///
/// `states` has shape `(H+1) x d`; `outputs` has length `H+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub dt: f64,
    pub states: Array2<f64>,
    pub outputs: Array1<f64>,
}

impl Trajectory {
    /// Builds a trajectory from raw parts, checking finiteness and shapes.
    pub fn new(id: usize, dt: f64, states: Array2<f64>, outputs: Array1<f64>) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(Error::Schema("trajectory has no samples".to_string()));
        }
        if states.nrows() != outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} states vs {} outputs",
                states.nrows(),
                outputs.len()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) || outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory {id} contains NaN/Inf")));
        }
        Ok(Self {
            id,
            dt,
            states,
            outputs,
        })
    }

    /// Builds a trajectory from states, computing outputs with `observable`
    /// so that `outputs[h] = q(states[h])` holds by construction.
    pub fn from_states(
        id: usize,
        dt: f64,
        states: Array2<f64>,
        observable: &ObservableSpec,
    ) -> Result<Self> {
        let outputs = Array1::from_iter(
            states
                .rows()
                .into_iter()
                .map(|row| observable.eval(row.as_slice().expect("contiguous row"))),
        );
        Self::new(id, dt, states, outputs)
    }

    /// Number of steps H (one less than the number of samples).
    pub fn horizon(&self) -> usize {
        self.states.nrows() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn initial_state(&self) -> ArrayView1<'_, f64> {
        self.states.row(0)
    }
}

/// A collection of trajectories sharing `dt`, horizon and state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::Schema("dataset must contain at least one trajectory".into()))?;
        let (dt, h, d) = (first.dt, first.horizon(), first.state_dim());
        for t in &trajectories {
            if t.dt != dt || t.horizon() != h || t.state_dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory {} has (dt={}, H={}, d={}), expected (dt={dt}, H={h}, d={d})",
                    t.id,
                    t.dt,
                    t.horizon(),
                    t.state_dim()
                )));
            }
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].dt
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].horizon()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories[0].state_dim()
    }

    /// N x d matrix of initial conditions.
    pub fn initial_states(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.state_dim()));
        for (i, t) in self.trajectories.iter().enumerate() {
            out.row_mut(i).assign(&t.initial_state());
        }
        out
    }

    /// Stacked outputs in trajectory-major order, length `N (H+1)`.
    pub fn stacked_outputs(&self) -> Array1<f64> {
        let h1 = self.horizon() + 1;
        let mut out = Array1::zeros(self.len() * h1);
        for (i, t) in self.trajectories.iter().enumerate() {
            out.slice_mut(ndarray::s![i * h1..(i + 1) * h1])
                .assign(&t.outputs);
        }
        out
    }

    /// Deterministic random split into `n_first` and the rest.
    pub fn random_split(&self, n_first: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n_first == 0 || n_first >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "split size {n_first} out of range for {} trajectories",
                self.len()
            )));
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..indices.len()).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let pick = |idx: &[usize]| -> Result<Dataset> {
            Dataset::new(idx.iter().map(|&i| self.trajectories[i].clone()).collect())
        };
        Ok((pick(&indices[..n_first])?, pick(&indices[n_first..])?))
    }
}

/// Classical RK4 with `substeps` internal stages per output sample.
///
/// `states[0] = x0`; fails with [`Error::NonFinite`] if any intermediate
/// state leaves the finite range.
pub fn integrate(
    system: &SystemSpec,
    observable: &ObservableSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Trajectory> {
    system.validate()?;
    observable.validate(system.state_dim)?;
    if x0.len() != system.state_dim {
        return Err(Error::DimensionMismatch(format!(
            "x0 has dim {}, system expects {}",
            x0.len(),
            system.state_dim
        )));
    }
    if dt <= 0.0 || steps < 1 || substeps < 1 {
        return Err(Error::InvalidConfig(
            "integrate requires dt > 0, steps >= 1, substeps >= 1".to_string(),
        ));
    }
    let d = system.state_dim;
    let mut states = Array2::zeros((steps + 1, d));
    states.row_mut(0).assign(&ArrayView1::from(x0));

    let h = dt / substeps as f64;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];

    for step in 1..=steps {
        for _ in 0..substeps {
            system.eval_rhs(&x, &mut k1);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            system.eval_rhs(&tmp, &mut k2);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            system.eval_rhs(&tmp, &mut k3);
            for i in 0..d {
                tmp[i] = x[i] + h * k3[i];
            }
            system.eval_rhs(&tmp, &mut k4);
            for i in 0..d {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "integration diverged at output step {step}"
                )));
            }
        }
        states.row_mut(step).assign(&ArrayView1::from(&x[..]));
    }
    Trajectory::from_states(0, dt, states, observable)
}

/// Samples `n` trajectories with initial conditions uniform over an
/// axis-aligned box. Deterministic per seed: trajectory `i` uses RNG
/// stream `i` of a ChaCha8 generator seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn sample_dataset(
    system: &SystemSpec,
    observable: &ObservableSpec,
    init_box: &[(f64, f64)],
    n: usize,
    dt: f64,
    steps: usize,
    substeps: usize,
    seed: u64,
) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::InvalidConfig("dataset size must be >= 1".to_string()));
    }
    if init_box.len() != system.state_dim {
        return Err(Error::DimensionMismatch(format!(
            "init box has dim {}, system expects {}",
            init_box.len(),
            system.state_dim
        )));
    }
    for &(lo, hi) in init_box {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig(format!(
                "invalid init box interval [{lo}, {hi}]"
            )));
        }
    }
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let x0: Vec<f64> = init_box
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
            .collect();
        let mut traj = integrate(system, observable, &x0, dt, steps, substeps)?;
        traj.id = i;
        trajectories.push(traj);
    }
    Dataset::new(trajectories)
}

/// Returns `false` iff two distinct samples are closer than `tol` in the
/// Euclidean norm, i.e. the sampled path revisits itself.
pub fn check_nonrecurrence(traj: &Trajectory, tol: f64) -> bool {
    let n = traj.states.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let dist2: f64 = traj
                .states
                .row(a)
                .iter()
                .zip(traj.states.row(b).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if dist2.sqrt() < tol {
                return false;
            }
        }
    }
    true
}

fn format_float(v: f64) -> String {
    // 17 significant digits: enough for exact f64 round-trips.
    format!("{v:.16e}")
}

/// Writes a dataset as CSV with header `traj_id,t,x0,...,x{d-1},y`,
/// rows sorted by (traj_id, t); floats carry 17 significant digits.
pub fn save_csv<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let d = dataset.state_dim();
    let mut header = String::from("traj_id,t");
    for i in 0..d {
        write!(header, ",x{i}").expect("string write");
    }
    header.push_str(",y");
    writeln!(w, "{header}")?;
    for traj in dataset.trajectories() {
        for h in 0..=traj.horizon() {
            let t = h as f64 * traj.dt;
            let mut line = format!("{},{}", traj.id, format_float(t));
            for v in traj.states.row(h) {
                write!(line, ",{}", format_float(*v)).expect("string write");
            }
            write!(line, ",{}", format_float(traj.outputs[h])).expect("string write");
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a dataset written by [`save_csv`] (or any file matching the same
/// schema). The sampling step is recovered from the `t` column.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || headers.len() < 4 {
        return Err(Error::Schema(format!(
            "expected header traj_id,t,x0,...,y with >= 4 columns, got {} columns",
            headers.len()
        )));
    }
    let d = headers.len() - 3;
    if &headers[0] != "traj_id" || &headers[1] != "t" || &headers[headers.len() - 1] != "y" {
        return Err(Error::Schema(
            "header must be traj_id,t,x0,...,x{d-1},y".to_string(),
        ));
    }
    for i in 0..d {
        if headers[2 + i] != format!("x{i}") {
            return Err(Error::Schema(format!(
                "state column {} is named '{}', expected 'x{i}'",
                2 + i,
                &headers[2 + i]
            )));
        }
    }

    struct Raw {
        id: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        outputs: Vec<f64>,
    }
    let mut groups: Vec<Raw> = Vec::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let line = rec_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Schema(format!(
                "line {line}: row has {} columns, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse '{raw}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-finite value '{raw}'"),
                });
            }
            Ok(v)
        };
        let id: usize = record
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                line,
                msg: "cannot parse traj_id".to_string(),
            })?;
        let t = parse(1)?;
        let y = parse(headers.len() - 1)?;
        let mut row = Vec::with_capacity(d);
        for i in 0..d {
            row.push(parse(2 + i)?);
        }

        match groups.last_mut() {
            Some(g) if g.id == id => {
                g.times.push(t);
                g.states.extend_from_slice(&row);
                g.outputs.push(y);
            }
            _ => {
                if groups.iter().any(|g| g.id == id) {
                    return Err(Error::Schema(format!(
                        "line {line}: rows for traj_id {id} are not contiguous"
                    )));
                }
                groups.push(Raw {
                    id,
                    times: vec![t],
                    states: row,
                    outputs: vec![y],
                });
            }
        }
    }
    if groups.is_empty() {
        return Err(Error::Schema("file contains no data rows".to_string()));
    }

    let mut trajectories = Vec::with_capacity(groups.len());
    for g in groups {
        if g.times.len() < 2 {
            return Err(Error::Schema(format!(
                "trajectory {} has fewer than 2 samples",
                g.id
            )));
        }
        let dt = g.times[1] - g.times[0];
        if dt <= 0.0 {
            return Err(Error::Schema(format!(
                "trajectory {}: non-increasing time column",
                g.id
            )));
        }
        for (h, &t) in g.times.iter().enumerate() {
            let expected = h as f64 * dt;
            if (t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::Schema(format!(
                    "trajectory {}: non-uniform sampling at step {h}",
                    g.id
                )));
            }
        }
        let rows = g.outputs.len();
        let states = Array2::from_shape_vec((rows, d), g.states)
            .map_err(|e| Error::Schema(e.to_string()))?;
        trajectories.push(Trajectory::new(
            g.id,
            dt,
            states,
            Array1::from_vec(g.outputs),
        )?);
    }
    Dataset::new(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// High-accuracy reference: step-doubling adaptive RK4, independent of
    /// the production integrator path.
    fn reference_integrate(system: &SystemSpec, x0: &[f64], t_end: f64) -> Vec<f64> {
        fn rk4_step(system: &SystemSpec, x: &[f64], h: f64) -> Vec<f64> {
            let d = x.len();
            let mut k1 = vec![0.0; d];
            let mut k2 = vec![0.0; d];
            let mut k3 = vec![0.0; d];
            let mut k4 = vec![0.0; d];
            let mut tmp = vec![0.0; d];
            system.eval_rhs(x, &mut k1);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            system.eval_rhs(&tmp, &mut k2);
            for i in 0..d {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            system.eval_rhs(&tmp, &mut k3);
            for i in 0..d {
                tmp[i] = x[i] + h * k3[i];
            }
            system.eval_rhs(&tmp, &mut k4);
            (0..d)
                .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
        let mut t = 0.0;
        let mut x = x0.to_vec();
        let mut h = t_end / 64.0;
        let tol = 1e-13;
        while t < t_end {
            let h_eff = h.min(t_end - t);
            let full = rk4_step(system, &x, h_eff);
            let half = rk4_step(system, &rk4_step(system, &x, 0.5 * h_eff), 0.5 * h_eff);
            let err: f64 = full
                .iter()
                .zip(half.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err < tol {
                x = half;
                t += h_eff;
                if err < tol / 32.0 {
                    h *= 2.0;
                }
            } else {
                h *= 0.5;
            }
        }
        x
    }

    #[test]
    fn bistable_rhs_values() {
        assert_eq!(bistable_rhs(0.0, 4.0, -16.0), 0.0);
        assert_eq!(bistable_rhs(0.5, 4.0, -16.0), 0.0); // analytic fixed point
        assert_eq!(bistable_rhs(1.0, 4.0, -16.0), -12.0);
    }

    #[test]
    fn vanderpol_rhs_values() {
        assert_eq!(vanderpol_rhs((0.0, 0.0)), (0.0, 0.0));
        assert_eq!(vanderpol_rhs((1.0, 0.0)), (0.0, -0.8));
        assert_eq!(vanderpol_rhs((0.0, 1.0)), (1.0, 2.0));
    }

    fn zero_field(_x: &[f64], out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = 0.0;
        }
    }

    fn linear_decay(x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }

    #[test]
    fn integrate_zero_field_is_constant() {
        let system = SystemSpec::custom(3, zero_field);
        let obs = ObservableSpec::norm();
        let traj = integrate(&system, &obs, &[1.0, -2.0, 0.5], 0.1, 7, 3).unwrap();
        for h in 0..=7 {
            assert_eq!(traj.states.row(h).to_vec(), vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn integrate_linear_decay_matches_exponential() {
        let system = SystemSpec::custom(1, linear_decay);
        let obs = ObservableSpec::coordinate(0);
        let traj = integrate(&system, &obs, &[1.0], 0.1, 1, 10).unwrap();
        assert_abs_diff_eq!(traj.states[[1, 0]], (-0.1f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn integrate_bistable_monotone_to_half() {
        let system = SystemSpec::bistable(4.0, -16.0);
        let obs = ObservableSpec::coordinate(0);
        let dt = 1.0 / 14.0;
        let traj = integrate(&system, &obs, &[0.6], dt, 14, 10).unwrap();
        // monotone approach to the stable fixed point 0.5 from above
        for h in 0..14 {
            assert!(traj.states[[h + 1, 0]] < traj.states[[h, 0]]);
            assert!(traj.states[[h + 1, 0]] > 0.5);
        }
        // against the independent adaptive reference at every sample
        for h in 1..=14 {
            let reference = reference_integrate(&system, &[0.6], h as f64 * dt);
            assert!((traj.states[[h, 0]] - reference[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn rk4_order_check() {
        // halving dt reduces the endpoint error by ~2^4
        let system = SystemSpec::custom(1, linear_decay);
        let obs = ObservableSpec::coordinate(0);
        let exact = (-1.0f64).exp();
        let run = |substeps: usize| {
            let traj = integrate(&system, &obs, &[1.0], 1.0, 1, substeps).unwrap();
            (traj.states[[1, 0]] - exact).abs()
        };
        let e1 = run(4);
        let e2 = run(8);
        let ratio = e1 / e2;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "error ratio {ratio} outside [12, 20]"
        );
    }

    #[test]
    fn integrate_reports_divergence() {
        fn blow_up(x: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[0] * x[0];
        }
        let system = SystemSpec::custom(1, blow_up);
        let obs = ObservableSpec::coordinate(0);
        let err = integrate(&system, &obs, &[10.0], 10.0, 5, 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn sample_degenerate_box() {
        let system = SystemSpec::bistable(4.0, -16.0);
        let obs = ObservableSpec::coordinate(0);
        let ds = sample_dataset(&system, &obs, &[(0.3, 0.3)], 1, 0.1, 4, 10, 7).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.trajectories()[0].states[[0, 0]], 0.3);
    }

    #[test]
    fn sample_deterministic_per_seed() {
        let system = SystemSpec::van_der_pol();
        let obs = ObservableSpec::coordinate(0);
        let box2 = [(-1.0, 1.0), (-1.0, 1.0)];
        let a = sample_dataset(&system, &obs, &box2, 5, 0.05, 10, 10, 42).unwrap();
        let b = sample_dataset(&system, &obs, &box2, 5, 0.05, 10, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&system, &obs, &box2, 5, 0.05, 10, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bistable_dataset_stays_bounded() {
        let system = SystemSpec::bistable(4.0, -16.0);
        let obs = ObservableSpec::coordinate(0);
        let ds =
            sample_dataset(&system, &obs, &[(-1.0, 1.0)], 50, 1.0 / 14.0, 14, 10, 123).unwrap();
        assert_eq!(ds.len(), 50);
        for t in ds.trajectories() {
            assert!(t.states.iter().all(|v| v.abs() <= 1.5));
        }
    }

    #[test]
    fn observable_consistency_for_generated_data() {
        let system = SystemSpec::van_der_pol();
        let obs = ObservableSpec::coordinate(0);
        let ds = sample_dataset(
            &system,
            &obs,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            8,
            1.0 / 14.0,
            14,
            10,
            5,
        )
        .unwrap();
        for t in ds.trajectories() {
            for h in 0..=t.horizon() {
                assert_eq!(t.outputs[h], t.states[[h, 0]]);
            }
        }
    }

    #[test]
    fn nonrecurrence_basics() {
        let constant = Trajectory::new(
            0,
            0.1,
            Array2::zeros((3, 1)),
            Array1::zeros(3),
        )
        .unwrap();
        assert!(!check_nonrecurrence(&constant, 1e-6));

        let monotone = Trajectory::new(
            0,
            0.1,
            Array2::from_shape_vec((3, 1), vec![0.0, 0.1, 0.2]).unwrap(),
            Array1::zeros(3),
        )
        .unwrap();
        assert!(check_nonrecurrence(&monotone, 1e-6));
    }

    #[test]
    fn nonrecurrence_on_bistable_benchmark() {
        let system = SystemSpec::bistable(4.0, -16.0);
        let obs = ObservableSpec::coordinate(0);
        let ds =
            sample_dataset(&system, &obs, &[(-1.0, 1.0)], 50, 1.0 / 14.0, 14, 10, 2024).unwrap();
        for t in ds.trajectories() {
            assert!(check_nonrecurrence(t, 1e-9), "trajectory {} recurrent", t.id);
        }
    }

    #[test]
    fn vanderpol_limit_cycle_is_recurrent() {
        let system = SystemSpec::van_der_pol();
        let obs = ObservableSpec::coordinate(0);
        // settle onto the limit cycle, then sample densely for a window
        // that certainly contains more than one full revolution
        let settle = integrate(&system, &obs, &[0.5, 0.0], 1.0, 30, 200).unwrap();
        let on_cycle = settle.states.row(30).to_vec();
        let loop_traj = integrate(&system, &obs, &on_cycle, 0.005, 4000, 4).unwrap();
        assert!(!check_nonrecurrence(&loop_traj, 0.02));
        // a short arc of the same cycle does not revisit itself
        let arc = integrate(&system, &obs, &on_cycle, 0.005, 100, 4).unwrap();
        assert!(check_nonrecurrence(&arc, 1e-6));
    }

    #[test]
    fn csv_round_trip_identity() {
        let system = SystemSpec::van_der_pol();
        let obs = ObservableSpec::coordinate(0);
        let ds = sample_dataset(
            &system,
            &obs,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            4,
            1.0 / 14.0,
            14,
            10,
            99,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn csv_empty_file_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_bad_number_is_parse_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "traj_id,t,x0,y\n0,0.0,1.0,1.0\n0,0.1,oops,1.0\n").unwrap();
        match load_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_inconsistent_columns_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "traj_id,t,x0,y\n0,0.0,1.0,1.0\n0,0.1,1.0\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Schema(_))));
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_any_dataset(seed in 0u64..1000, n in 1usize..4, steps in 1usize..6) {
            let system = SystemSpec::bistable(4.0, -16.0);
            let obs = ObservableSpec::coordinate(0);
            let ds = sample_dataset(&system, &obs, &[(-1.0, 1.0)], n, 0.07, steps, 5, seed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("pt.csv");
            save_csv(&ds, &path).unwrap();
            let loaded = load_csv(&path).unwrap();
            proptest::prop_assert_eq!(ds, loaded);
        }
    }
}
