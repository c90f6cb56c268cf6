//! Base, eigenfunction and Koopman kernels plus block Gram assembly.
//!
//! For an eigenvalue `mu` with power vector `p = [mu^0 .. mu^H]` and
//! pullback weights `w`, the eigenfunction kernel between two trajectories
//! is the rank-one-in-time matrix `p p^H * k_mu(x, x')`, where the scalar
//! factor contracts the base-kernel block `B[m, n] = k(x(t_m), x'(t_n))`
//! with the weights. Summing over a sampled spectrum yields the Koopman
//! kernel; stacking all trajectory pairs yields the `N(H+1) x N(H+1)`
//! Hermitian PSD block Gram.
//!
//! Two scalar conventions are supported: the default contracts unit-norm
//! pullback weights (`w^H B w'`), the `normalized = false` variant keeps
//! the raw `1/(H+1)^2 sum mu^-m B[m,n] conj(mu)^-n` form, which can
//! overflow for |mu| << 1 and is retained for literal reproduction and
//! testing.

use ndarray::{s, Array2, Array4, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dataset, Trajectory};
use crate::spectra::{mu_powers, MuPowers, Spectrum};
use crate::{Error, Result};

/// Gaussian RBF `exp(-||x - x'||^2 / (2 l^2))`.
pub fn rbf(x: &[f64], y: &[f64], length_scale: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let sq_dist: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (-sq_dist / (2.0 * length_scale * length_scale)).exp()
}

/// Base (state-space) kernel configuration.
///
/// `Rbf` is the benchmark default. `Linear` (`k(x, x') = <x, x'>`) exists
/// for analytic baseline checks where eigenvalues are known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKernelSpec {
    Rbf { length_scale: f64 },
    Linear,
}

impl BaseKernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let BaseKernelSpec::Rbf { length_scale } = self {
            if !(length_scale.is_finite() && *length_scale > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "rbf length scale must be > 0, got {length_scale}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            BaseKernelSpec::Rbf { length_scale } => rbf(x, y, *length_scale),
            BaseKernelSpec::Linear => x.iter().zip(y.iter()).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Cache of all base-kernel evaluations of a dataset:
/// `values[i, i', m, n] = k(x_i(t_m), x_i'(t_n))`.
#[derive(Debug, Clone)]
pub struct BaseGramTensor {
    pub values: Array4<f64>,
}

impl BaseGramTensor {
    /// Evaluates the base kernel once for every sample pair
    /// (`O(N^2 (H+1)^2)` evaluations, symmetric halves shared).
    pub fn compute(dataset: &Dataset, base: &BaseKernelSpec) -> Self {
        let n = dataset.len();
        let h1 = dataset.horizon() + 1;
        let trajs = dataset.trajectories();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .collect();
        let blocks: Vec<((usize, usize), Array2<f64>)> = pairs
            .into_par_iter()
            .map(|(i, j)| ((i, j), base_block(&trajs[i], &trajs[j], base)))
            .collect();
        let mut values = Array4::zeros((n, n, h1, h1));
        for ((i, j), block) in blocks {
            values.slice_mut(s![i, j, .., ..]).assign(&block);
            if i != j {
                values.slice_mut(s![j, i, .., ..]).assign(&block.t());
            }
        }
        Self { values }
    }

    pub fn block(&self, i: usize, j: usize) -> ArrayView2<'_, f64> {
        self.values.slice(s![i, j, .., ..])
    }
}

/// `B[m, n] = k(a(t_m), b(t_n))` for one trajectory pair.
pub fn base_block(a: &Trajectory, b: &Trajectory, base: &BaseKernelSpec) -> Array2<f64> {
    let h1 = a.horizon() + 1;
    assert_eq!(b.horizon() + 1, h1, "trajectories must share the horizon");
    let mut block = Array2::zeros((h1, h1));
    for m in 0..h1 {
        let xm = a.states.row(m);
        let xm = xm.as_slice().expect("contiguous row");
        for nn in 0..h1 {
            let xn = b.states.row(nn);
            block[[m, nn]] = base.eval(xm, xn.as_slice().expect("contiguous row"));
        }
    }
    block
}

/// Scalar eigenfunction-kernel factor for one eigenvalue.
///
/// `normalized = true` (the default everywhere): `w^H B w'` with the
/// unit-norm pullback weights of `w`/`w2`. `normalized = false`: the raw
/// `1/(H+1)^2 sum_m sum_n mu^-m B[m,n] conj(mu')^-n`; overflow for small
/// |mu| is reported as an error rather than silently saturated.
pub fn scalar_eigen_kernel(
    k_block: ArrayView2<'_, f64>,
    w: &MuPowers,
    w2: &MuPowers,
    normalized: bool,
) -> Result<Complex64> {
    let h1 = k_block.nrows();
    assert_eq!(k_block.ncols(), h1, "kernel block must be square");
    assert_eq!(w.pullback_weights.len(), h1, "weight/block shape mismatch");
    assert_eq!(w2.pullback_weights.len(), h1, "weight/block shape mismatch");
    if normalized {
        Ok(contract_weights(
            k_block,
            &w.pullback_weights,
            &w2.pullback_weights,
        ))
    } else {
        let inv1 = Complex64::new(1.0, 0.0) / w.mu;
        let inv2 = (Complex64::new(1.0, 0.0) / w2.mu).conj();
        let mut left = Vec::with_capacity(h1);
        let mut right = Vec::with_capacity(h1);
        let mut l = Complex64::new(1.0, 0.0);
        let mut r = Complex64::new(1.0, 0.0);
        for _ in 0..h1 {
            left.push(l);
            right.push(r);
            l *= inv1;
            r *= inv2;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..h1 {
            let mut row = Complex64::new(0.0, 0.0);
            for nn in 0..h1 {
                row += k_block[[m, nn]] * right[nn];
            }
            acc += left[m] * row;
        }
        let value = acc / (h1 as f64 * h1 as f64);
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::Overflow(format!(
                "unnormalized eigenfunction kernel overflowed for mu = {} (|mu| = {:.3e})",
                w.mu,
                w.mu.norm()
            )));
        }
        Ok(value)
    }
}

/// `sum_m conj(w[m]) sum_n B[m, n] w2[n]`.
fn contract_weights(
    k_block: ArrayView2<'_, f64>,
    w: &[Complex64],
    w2: &[Complex64],
) -> Complex64 {
    let h1 = k_block.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in 0..h1 {
        let row = k_block.row(m);
        let row = row.as_slice().expect("contiguous row");
        let mut inner = Complex64::new(0.0, 0.0);
        for (bv, wv) in row.iter().zip(w2.iter()) {
            inner += *bv * *wv;
        }
        acc += w[m].conj() * inner;
    }
    acc
}

/// Matrix eigenfunction kernel: `p p^H` times the (normalized) scalar
/// factor, rank one in time.
pub fn matrix_eigen_kernel(
    a: &Trajectory,
    b: &Trajectory,
    mp: &MuPowers,
    base: &BaseKernelSpec,
) -> Array2<Complex64> {
    let block = base_block(a, b, base);
    let s = scalar_eigen_kernel(block.view(), mp, mp, true).expect("normalized mode is total");
    rank_one_in_time(&mp.powers, s)
}

fn rank_one_in_time(powers: &[Complex64], scalar: Complex64) -> Array2<Complex64> {
    let h1 = powers.len();
    let mut out = Array2::from_elem((h1, h1), Complex64::new(0.0, 0.0));
    for r in 0..h1 {
        let pr = powers[r] * scalar;
        for c in 0..h1 {
            out[[r, c]] = pr * powers[c].conj();
        }
    }
    out
}

/// Koopman kernel of one trajectory pair: sum of the matrix eigenfunction
/// kernels over the spectrum.
pub fn koopman_kernel(
    a: &Trajectory,
    b: &Trajectory,
    spectrum: &Spectrum,
    base: &BaseKernelSpec,
) -> Array2<Complex64> {
    let h1 = a.horizon() + 1;
    let mut out = Array2::from_elem((h1, h1), Complex64::new(0.0, 0.0));
    for mu in &spectrum.mus {
        let mp = mu_powers(*mu, h1 - 1);
        out += &matrix_eigen_kernel(a, b, &mp, base);
    }
    out
}

/// The `N(H+1) x N(H+1)` block Gram of the matrix Koopman kernel.
///
/// Block layout is trajectory-major: row index `i (H+1) + h`.
#[derive(Debug, Clone)]
pub struct KoopmanGram {
    pub matrix: Array2<Complex64>,
    pub spectrum: Spectrum,
    pub normalized: bool,
    pub n: usize,
    pub horizon: usize,
}

impl KoopmanGram {
    pub fn dim(&self) -> usize {
        self.n * (self.horizon + 1)
    }

    /// Max-norm distance to the conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.matrix;
        let mut worst: f64 = 0.0;
        for r in 0..g.nrows() {
            for c in r..g.ncols() {
                worst = worst.max((g[[r, c]] - g[[c, r]].conj()).norm());
            }
        }
        worst
    }

    /// Largest imaginary part in absolute value.
    pub fn max_imag(&self) -> f64 {
        self.matrix.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// Per-eigenvalue intermediates kept around for the estimator: the scalar
/// kernel matrices `k_mu[i, i']` and the power structures.
pub struct GramParts {
    pub gram: KoopmanGram,
    pub scalar_kernels: Vec<Array2<Complex64>>,
    pub powers: Vec<MuPowers>,
}

/// Assembles the block Gram: evaluates the [`BaseGramTensor`] once, then
/// contracts it per eigenvalue and accumulates the rank-one time blocks.
pub fn assemble_gram(
    dataset: &Dataset,
    spectrum: &Spectrum,
    base: &BaseKernelSpec,
    normalized: bool,
) -> Result<KoopmanGram> {
    Ok(assemble_gram_parts(dataset, spectrum, base, normalized)?.gram)
}

/// As [`assemble_gram`], additionally returning the per-eigenvalue scalar
/// kernel matrices needed to pull eigenfunctions back to state space.
pub fn assemble_gram_parts(
    dataset: &Dataset,
    spectrum: &Spectrum,
    base: &BaseKernelSpec,
    normalized: bool,
) -> Result<GramParts> {
    if dataset.is_empty() {
        return Err(Error::Schema(
            "cannot assemble a Gram from an empty dataset".into(),
        ));
    }
    base.validate()?;
    let n = dataset.len();
    let h = dataset.horizon();
    let h1 = h + 1;
    let d_count = spectrum.len();

    let tensor = BaseGramTensor::compute(dataset, base);
    let powers: Vec<MuPowers> = spectrum.mus.iter().map(|mu| mu_powers(*mu, h)).collect();

    // scalar kernels per eigenvalue, every (i <= i') pair in parallel
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .collect();
    let per_pair: Vec<((usize, usize), Vec<Complex64>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let block = tensor.block(i, j);
            let mut scalars = Vec::with_capacity(d_count);
            for mp in &powers {
                let s = scalar_eigen_kernel(block, mp, mp, normalized)?;
                scalars.push(s);
            }
            Ok(((i, j), scalars))
        })
        .collect::<Result<_>>()?;

    let zero = Complex64::new(0.0, 0.0);
    let mut scalar_kernels = vec![Array2::from_elem((n, n), zero); d_count];
    for ((i, j), scalars) in &per_pair {
        for (jdx, s) in scalars.iter().enumerate() {
            scalar_kernels[jdx][[*i, *j]] = *s;
            if i != j {
                // swapping the trajectories conjugates the scalar factor
                scalar_kernels[jdx][[*j, *i]] = s.conj();
            }
        }
    }

    // accumulate blocks: G[(i,h),(i',h')] = sum_j p_j[h] conj(p_j[h']) s_j[i,i']
    let blocks: Vec<((usize, usize), Array2<Complex64>)> = per_pair
        .par_iter()
        .map(|((i, j), scalars)| {
            let mut block = Array2::from_elem((h1, h1), zero);
            for (mp, s) in powers.iter().zip(scalars.iter()) {
                for r in 0..h1 {
                    let pr = mp.powers[r] * *s;
                    for c in 0..h1 {
                        block[[r, c]] += pr * mp.powers[c].conj();
                    }
                }
            }
            ((*i, *j), block)
        })
        .collect();

    let dim = n * h1;
    let mut matrix = Array2::from_elem((dim, dim), zero);
    for ((i, j), block) in blocks {
        for r in 0..h1 {
            for c in 0..h1 {
                matrix[[i * h1 + r, j * h1 + c]] = block[[r, c]];
                if i != j {
                    matrix[[j * h1 + c, i * h1 + r]] = block[[r, c]].conj();
                }
            }
        }
    }

    Ok(GramParts {
        gram: KoopmanGram {
            matrix,
            spectrum: spectrum.clone(),
            normalized,
            n,
            horizon: h,
        },
        scalar_kernels,
        powers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_dataset, ObservableSpec, SystemSpec};
    use crate::spectra::{sample_conjugate_pairs, sample_uniform_disk};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn vdp_dataset(n: usize, h: usize, seed: u64) -> Dataset {
        sample_dataset(
            &SystemSpec::van_der_pol(),
            &ObservableSpec::coordinate(0),
            &[(-1.0, 1.0), (-1.0, 1.0)],
            n,
            1.0 / 14.0,
            h,
            10,
            seed,
        )
        .unwrap()
    }

    /// Brute-force Gram oracle: naive loops straight from the definition,
    /// no base-kernel caching, pullback weights normalized from the raw
    /// `mu^-h` form.
    fn oracle_gram(
        dataset: &Dataset,
        spectrum: &Spectrum,
        base: &BaseKernelSpec,
        normalized: bool,
    ) -> Array2<Complex64> {
        let n = dataset.len();
        let h1 = dataset.horizon() + 1;
        let trajs = dataset.trajectories();
        let mut g = Array2::from_elem((n * h1, n * h1), Complex64::new(0.0, 0.0));
        for mu in &spectrum.mus {
            let powers: Vec<Complex64> = (0..h1).map(|h| mu.powi(h as i32)).collect();
            let weights: Vec<Complex64> = if normalized {
                let raw: Vec<Complex64> = (0..h1).map(|h| mu.powi(-(h as i32))).collect();
                let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                raw.into_iter().map(|z| z / norm).collect()
            } else {
                Vec::new()
            };
            for i in 0..n {
                for ip in 0..n {
                    let mut s = Complex64::new(0.0, 0.0);
                    for m in 0..h1 {
                        for nn in 0..h1 {
                            let k = base.eval(
                                trajs[i].states.row(m).as_slice().unwrap(),
                                trajs[ip].states.row(nn).as_slice().unwrap(),
                            );
                            if normalized {
                                s += weights[m].conj() * k * weights[nn];
                            } else {
                                s += mu.powi(-(m as i32)) * k * mu.conj().powi(-(nn as i32));
                            }
                        }
                    }
                    if !normalized {
                        s /= (h1 * h1) as f64;
                    }
                    for r in 0..h1 {
                        for c in 0..h1 {
                            g[[i * h1 + r, ip * h1 + c]] += powers[r] * powers[c].conj() * s;
                        }
                    }
                }
            }
        }
        g
    }

    #[test]
    fn rbf_values() {
        let x = [0.3, -0.2];
        assert_eq!(rbf(&x, &x, 0.05), 1.0);
        assert_abs_diff_eq!(rbf(&[0.0], &[0.05], 0.05), (-0.5f64).exp(), epsilon = 1e-15);
        assert!(rbf(&[0.0], &[100.0], 0.05) < 1e-300);
    }

    #[test]
    fn scalar_kernel_h0_equals_block_entry() {
        let block = Array2::from_elem((1, 1), 0.7);
        let mp = mu_powers(Complex64::new(0.4, 0.3), 0);
        for normalized in [true, false] {
            let s = scalar_eigen_kernel(block.view(), &mp, &mp, normalized).unwrap();
            assert_abs_diff_eq!(s.re, 0.7, epsilon = 1e-15);
            assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_kernel_ones_block_mu_one() {
        let block = Array2::from_elem((2, 2), 1.0);
        let mp = mu_powers(Complex64::new(1.0, 0.0), 1);
        let norm = scalar_eigen_kernel(block.view(), &mp, &mp, true).unwrap();
        assert_abs_diff_eq!(norm.re, 2.0, epsilon = 1e-14);
        let raw = scalar_eigen_kernel(block.view(), &mp, &mp, false).unwrap();
        assert_abs_diff_eq!(raw.re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn unnormalized_overflow_is_reported() {
        let block = Array2::from_elem((40, 40), 1.0);
        let mp = mu_powers(Complex64::new(1e-12, 0.0), 39);
        let err = scalar_eigen_kernel(block.view(), &mp, &mp, false).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
    }

    #[test]
    fn matrix_kernel_constant_base_mu_one() {
        let ds = vdp_dataset(2, 1, 1);
        let trajs = ds.trajectories();
        // a near-constant base kernel: RBF with an enormous length scale
        let base = BaseKernelSpec::Rbf { length_scale: 1e12 };
        let mp = mu_powers(Complex64::new(1.0, 0.0), 1);
        let m = matrix_eigen_kernel(&trajs[0], &trajs[1], &mp, &base);
        for v in m.iter() {
            assert_abs_diff_eq!((v - m[[0, 0]]).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn matrix_kernel_is_rank_one_in_time() {
        let ds = vdp_dataset(2, 3, 2);
        let trajs = ds.trajectories();
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let mp = mu_powers(Complex64::new(0.3, 0.5), 3);
        let m = matrix_eigen_kernel(&trajs[0], &trajs[1], &mp, &base);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // every 2x2 minor of a rank-one matrix vanishes
        for r1 in 0..4 {
            for r2 in (r1 + 1)..4 {
                for c1 in 0..4 {
                    for c2 in (c1 + 1)..4 {
                        let minor = m[[r1, c1]] * m[[r2, c2]] - m[[r1, c2]] * m[[r2, c1]];
                        assert!(minor.norm() <= 1e-10 * scale * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_kernel_hermitian_under_swap() {
        let ds = vdp_dataset(2, 3, 3);
        let trajs = ds.trajectories();
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        for mu in sample_uniform_disk(5, 1.0 / 14.0, 17).mus {
            let mp = mu_powers(mu, 3);
            let ab = matrix_eigen_kernel(&trajs[0], &trajs[1], &mp, &base);
            let ba = matrix_eigen_kernel(&trajs[1], &trajs[0], &mp, &base);
            for r in 0..4 {
                for c in 0..4 {
                    assert_abs_diff_eq!(
                        (ab[[r, c]] - ba[[c, r]].conj()).norm(),
                        0.0,
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn koopman_kernel_single_eigenvalue() {
        let ds = vdp_dataset(2, 2, 4);
        let trajs = ds.trajectories();
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let spectrum = Spectrum::new(vec![Complex64::new(0.2, -0.4)], ds.dt(), false);
        let kk = koopman_kernel(&trajs[0], &trajs[1], &spectrum, &base);
        let me = matrix_eigen_kernel(&trajs[0], &trajs[1], &mu_powers(spectrum.mus[0], 2), &base);
        for (a, b) in kk.iter().zip(me.iter()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn conjugate_closed_spectrum_gives_real_gram() {
        let ds = vdp_dataset(3, 4, 5);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let spectrum = sample_conjugate_pairs(6, ds.dt(), 21);
        let gram = assemble_gram(&ds, &spectrum, &base, true).unwrap();
        assert!(gram.max_imag() <= 1e-10);
        assert!(gram.hermitian_defect() <= 1e-10);
    }

    #[test]
    fn gram_matches_bruteforce_oracle() {
        let base = BaseKernelSpec::Rbf { length_scale: 0.2 };
        for (n, h, d, seed) in [(2usize, 2usize, 1usize, 31u64), (3, 2, 2, 32), (4, 3, 3, 33)] {
            let ds = vdp_dataset(n, h, seed);
            let spectrum = sample_uniform_disk(d, ds.dt(), seed + 100);
            for normalized in [true, false] {
                let gram = assemble_gram(&ds, &spectrum, &base, normalized).unwrap();
                let oracle = oracle_gram(&ds, &spectrum, &base, normalized);
                let scale = oracle.iter().map(|z| z.norm()).fold(1.0, f64::max);
                for (a, b) in gram.matrix.iter().zip(oracle.iter()) {
                    assert!(
                        (a - b).norm() <= 1e-12 * scale,
                        "cached vs oracle mismatch: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn gram_matches_naive_per_pair_assembly() {
        let ds = vdp_dataset(3, 2, 6);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let spectrum = sample_uniform_disk(2, ds.dt(), 41);
        let gram = assemble_gram(&ds, &spectrum, &base, true).unwrap();
        let h1 = 3;
        let trajs = ds.trajectories();
        for i in 0..3 {
            for j in 0..3 {
                let block = koopman_kernel(&trajs[i], &trajs[j], &spectrum, &base);
                for r in 0..h1 {
                    for c in 0..h1 {
                        let got = gram.matrix[[i * h1 + r, j * h1 + c]];
                        assert!((got - block[[r, c]]).norm() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn trivial_gram_single_sample() {
        let ds = sample_dataset(
            &SystemSpec::bistable(4.0, -16.0),
            &ObservableSpec::coordinate(0),
            &[(0.4, 0.4)],
            1,
            0.1,
            1,
            5,
            0,
        )
        .unwrap();
        // restrict to H = 0 by keeping only the initial sample
        let traj = &ds.trajectories()[0];
        let one = crate::dynamics::Trajectory::new(
            0,
            traj.dt,
            traj.states.slice(s![0..1, ..]).to_owned(),
            Array1::from_vec(vec![traj.outputs[0]]),
        )
        .unwrap();
        let ds1 = Dataset::new(vec![one]).unwrap();
        let base = BaseKernelSpec::Rbf { length_scale: 0.05 };
        let spectrum = Spectrum::new(vec![Complex64::new(0.7, 0.1)], 0.1, false);
        let gram = assemble_gram(&ds1, &spectrum, &base, true).unwrap();
        assert_eq!(gram.dim(), 1);
        assert_abs_diff_eq!(gram.matrix[[0, 0]].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gram.matrix[[0, 0]].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gram_hermitian_psd_on_benchmark() {
        use ndarray_linalg::{Eigh, UPLO};
        crate::linalg::pin_blas_threads();
        let ds = vdp_dataset(6, 8, 7);
        let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
        let spectrum = sample_uniform_disk(12, ds.dt(), 77);
        let gram = assemble_gram(&ds, &spectrum, &base, true).unwrap();
        assert!(gram.hermitian_defect() <= 1e-10);
        let (vals, _) = gram.matrix.eigh(UPLO::Lower).unwrap();
        let trace: f64 = gram.matrix.diag().iter().map(|z| z.re).sum();
        let floor = -1e-8 * trace / gram.dim() as f64;
        assert!(
            vals.iter().all(|v| *v >= floor),
            "min eigenvalue {} below {floor}",
            vals.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn scalar_kernel_bounded_by_h_plus_one(seed in 0u64..200, h in 0usize..12) {
            // |k_mu| <= H+1 for the RBF base with unit-norm weights
            let ds = vdp_dataset(2, h.max(1), seed);
            let base = BaseKernelSpec::Rbf { length_scale: 0.1 };
            let block = base_block(&ds.trajectories()[0], &ds.trajectories()[1], &base);
            let mu = sample_uniform_disk(1, ds.dt(), seed).mus[0];
            let mp = mu_powers(mu, h.max(1));
            let s = scalar_eigen_kernel(block.view(), &mp, &mp, true).unwrap();
            proptest::prop_assert!(s.norm() <= (h.max(1) + 1) as f64 + 1e-9);
        }
    }
}
