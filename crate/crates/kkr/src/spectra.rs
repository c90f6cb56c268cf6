//! Discrete-time eigenvalue sets and their time-power structures.
//!
//! Eigenvalues live on the closed unit disk (continuous-time rates map in
//! via `mu = exp(lambda * dt)`). Each `mu` induces a power vector
//! `[mu^0, ..., mu^H]` and a unit-norm pullback weight vector proportional
//! to `(mu^-h)_h`, computed in a form that cannot overflow for small |mu|.

use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A multiset of discrete-time eigenvalues with the sampling step they
/// refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub mus: Vec<Complex64>,
    pub dt: f64,
    pub conjugate_closed: bool,
}

impl Spectrum {
    pub fn new(mus: Vec<Complex64>, dt: f64, conjugate_closed: bool) -> Self {
        Self {
            mus,
            dt,
            conjugate_closed,
        }
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    /// Checks the disk bound (up to `radius`) and, when flagged, closure
    /// under conjugation as multisets.
    pub fn validate(&self, radius: f64) -> Result<()> {
        if self.mus.is_empty() {
            return Err(Error::InvalidConfig("spectrum must be non-empty".into()));
        }
        for mu in &self.mus {
            if !mu.re.is_finite() || !mu.im.is_finite() {
                return Err(Error::NonFinite("spectrum contains NaN/Inf".into()));
            }
            if mu.norm() > radius + 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "eigenvalue {mu} outside the radius-{radius} disk"
                )));
            }
        }
        if self.conjugate_closed && !self.is_conjugate_closed(1e-12) {
            return Err(Error::NotConjugateClosed);
        }
        Ok(())
    }

    /// Multiset equality of `{mu}` and `{conj(mu)}` up to `tol`.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        let mut remaining: Vec<Complex64> = self.mus.clone();
        for mu in &self.mus {
            let target = mu.conj();
            match remaining
                .iter()
                .position(|c| (c - target).norm() <= tol)
            {
                Some(pos) => {
                    remaining.swap_remove(pos);
                }
                None => return false,
            }
        }
        remaining.is_empty()
    }

    /// Writes the eigenvalues as `re,im` CSV rows.
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "re,im")?;
        for mu in &self.mus {
            writeln!(w, "{:.16e},{:.16e}", mu.re, mu.im)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv<P: AsRef<Path>>(path: P, dt: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let mut mus = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            let get = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: "expected re,im floats".to_string(),
                    })
            };
            mus.push(Complex64::new(get(0)?, get(1)?));
        }
        if mus.is_empty() {
            return Err(Error::Schema("spectrum file has no rows".into()));
        }
        let closed = Spectrum {
            mus: mus.clone(),
            dt,
            conjugate_closed: false,
        }
        .is_conjugate_closed(1e-12);
        Ok(Spectrum {
            mus,
            dt,
            conjugate_closed: closed,
        })
    }
}

/// `count` i.i.d. draws uniform in area over the closed unit disk.
pub fn sample_uniform_disk(count: usize, dt: f64, seed: u64) -> Spectrum {
    sample_uniform_disk_with_radius(count, dt, 1.0, seed)
}

/// Area-uniform draws from a disk of the given radius (`r = radius sqrt(u)`,
/// `theta = 2 pi v`).
pub fn sample_uniform_disk_with_radius(count: usize, dt: f64, radius: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mus = (0..count)
        .map(|_| {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let r = radius * u.sqrt();
            let theta = 2.0 * std::f64::consts::PI * v;
            Complex64::from_polar(r, theta)
        })
        .collect();
    Spectrum::new(mus, dt, false)
}

/// Conjugate-closed sampler: `count/2` pairs area-uniform in the upper
/// half-disk plus, for odd `count`, one real eigenvalue uniform on [-1, 1].
pub fn sample_conjugate_pairs(count: usize, dt: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mus = Vec::with_capacity(count);
    for _ in 0..count / 2 {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        let r = u.sqrt();
        let theta = std::f64::consts::PI * v;
        let mu = Complex64::from_polar(r, theta);
        mus.push(mu);
        mus.push(mu.conj());
    }
    if count % 2 == 1 {
        let x: f64 = rng.gen_range(-1.0..1.0);
        mus.push(Complex64::new(x, 0.0));
    }
    Spectrum::new(mus, dt, true)
}

/// Structured sampler for transient-plus-oscillation regimes: continuous
/// rates drawn uniformly from the three branches `{+i a, -i a, -a}` with
/// `a` uniform on [0, 1], mapped through `mu = exp(lambda dt)`. Imaginary
/// branches are emitted as conjugate pairs so the result is closed.
pub fn sample_structured(count: usize, dt: f64, seed: u64) -> Spectrum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mus = Vec::with_capacity(count);
    while mus.len() < count {
        let a: f64 = rng.gen();
        let remaining = count - mus.len();
        // branch probabilities 1/3 each; an imaginary draw yields both
        // members of the pair, so draw "pair" with probability 2/3
        let pick_pair = remaining >= 2 && rng.gen::<f64>() < 2.0 / 3.0;
        if pick_pair {
            let mu = (Complex64::new(0.0, a) * dt).exp();
            mus.push(mu);
            mus.push(mu.conj());
        } else {
            mus.push(Complex64::new((-a * dt).exp(), 0.0));
        }
    }
    Spectrum::new(mus, dt, true)
}

/// Time powers and pullback weights of one eigenvalue over `H+1` steps.
#[derive(Debug, Clone)]
pub struct MuPowers {
    pub mu: Complex64,
    /// `powers[h] = mu^h`, built by successive multiplication.
    pub powers: Vec<Complex64>,
    /// Unit-norm vector proportional to `(mu^-h)_h`; the indicator at the
    /// final step for `mu = 0`.
    pub pullback_weights: Vec<Complex64>,
}

/// Computes powers and stabilized pullback weights.
///
/// The weights are evaluated as the normalization of `(mu^(H-h))_h`, which
/// spans the same direction as `(mu^-h)_h` (the two differ by the scalar
/// `mu^-H`) yet never overflows on the unit disk. As `mu -> 0` the weight
/// vector tends to the indicator at the final step.
pub fn mu_powers(mu: Complex64, horizon: usize) -> MuPowers {
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(Complex64::new(1.0, 0.0));
    for h in 1..=horizon {
        let next = powers[h - 1] * mu;
        powers.push(next);
    }

    let mut weights = vec![Complex64::new(0.0, 0.0); horizon + 1];
    if mu.norm() == 0.0 {
        weights[horizon] = Complex64::new(1.0, 0.0);
    } else {
        // v[h] = mu^(H-h), accumulated from the final step backwards
        weights[horizon] = Complex64::new(1.0, 0.0);
        for h in (0..horizon).rev() {
            weights[h] = weights[h + 1] * mu;
        }
        let norm: f64 = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        for w in weights.iter_mut() {
            *w /= norm;
        }
    }
    MuPowers {
        mu,
        powers,
        pullback_weights: weights,
    }
}
