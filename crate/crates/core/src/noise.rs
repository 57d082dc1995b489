//! Seeded space-time white noise in Fourier modes and the exact Ornstein–Uhlenbeck step.
//!
//! Increments are addressed by `(seed, stream, step, mode)`: the ChaCha stream is chosen from
//! the ensemble member and purpose, and mode `k` of base step `n` always reads the four words
//! starting at `n·2^40 + 4k`. The same seed therefore produces the same mode-`k` increments on
//! every grid, and coarser time steps are sums of the finer ones.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, Mollifier, SpectralField};

const STEP_STRIDE: u128 = 1 << 40;

/// What a stream of draws is used for. Each purpose gets its own ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Main,
    BurnIn,
    Init,
}

impl Purpose {
    fn offset(self) -> u64 {
        match self {
            Purpose::Main => 0,
            Purpose::BurnIn => 1,
            Purpose::Init => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    /// All increments and initial draws are zero.
    Zero,
}

/// Lazily generated white-noise increments `ΔŴ_n(k)` with `Var = dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    grid: GridSpec,
    base_dt: f64,
    base_steps: usize,
    aggregate: usize,
    seed: u64,
    member: u64,
    purpose: Purpose,
    kind: NoiseKind,
}

impl NoisePath {
    pub fn new(grid: GridSpec, dt: f64, n_steps: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            grid,
            base_dt: dt,
            base_steps: n_steps,
            aggregate: 1,
            seed,
            member: 0,
            purpose: Purpose::Main,
            kind: NoiseKind::Gaussian,
        })
    }

    /// A path whose increments are all zero.
    pub fn zero(grid: GridSpec, dt: f64, n_steps: usize) -> Result<Self> {
        Ok(Self { kind: NoiseKind::Zero, ..Self::new(grid, dt, n_steps, 0)? })
    }

    /// Independent path for ensemble member `member`.
    pub fn for_member(&self, member: u64) -> Self {
        Self { member, ..self.clone() }
    }

    /// Path with the same time grid drawn from the stream reserved for `purpose`.
    pub fn for_purpose(&self, purpose: Purpose, n_steps: usize) -> Self {
        Self { purpose, base_steps: n_steps * self.aggregate, ..self.clone() }
    }

    /// Same noise on a grid with a different number of modes.
    pub fn on_grid(&self, grid: GridSpec) -> Self {
        Self { grid, ..self.clone() }
    }

    /// Sums `factor` consecutive increments: the same Brownian path at time step `factor·dt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps() % factor != 0 {
            return Err(Error::Config(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps()
            )));
        }
        Ok(Self { aggregate: self.aggregate * factor, ..self.clone() })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.base_dt * self.aggregate as f64
    }

    pub fn n_steps(&self) -> usize {
        self.base_steps / self.aggregate
    }

    pub fn horizon(&self) -> f64 {
        self.dt() * self.n_steps() as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn member(&self) -> u64 {
        self.member
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    fn stream(&self, purpose: Purpose) -> u64 {
        self.member * 4 + purpose.offset()
    }

    fn rng(&self, purpose: Purpose, word: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream(purpose));
        rng.set_word_pos(word);
        rng
    }

    /// `ΔŴ_n`, real-symmetric with a real zero mode.
    pub fn increment(&self, n: usize) -> Result<SpectralField> {
        if n >= self.n_steps() {
            return Err(Error::StepOutOfRange { step: n, n_steps: self.n_steps() });
        }
        let mut out = SpectralField::zeros(self.grid);
        if self.kind == NoiseKind::Zero {
            return Ok(out);
        }
        let k_max = self.grid.k_max() as usize;
        let n_modes = self.grid.n_modes();
        let scale = (0.5 * self.base_dt).sqrt();
        let c = out.coeffs_mut();
        for step in n * self.aggregate..(n + 1) * self.aggregate {
            let mut rng = self.rng(self.purpose, step as u128 * STEP_STRIDE);
            let (a, _) = normal_pair(&mut rng);
            c[0].re += a * self.base_dt.sqrt();
            for k in 1..=k_max {
                let (a, b) = normal_pair(&mut rng);
                c[k] += Complex64::new(a * scale, b * scale);
            }
        }
        for k in 1..=k_max {
            c[n_modes - k] = c[k].conj();
        }
        Ok(out)
    }

    /// `φ(εk) ΔŴ_n(k)`.
    pub fn mollified_increment(&self, n: usize, m: &Mollifier) -> Result<SpectralField> {
        Ok(self.increment(n)?.mollify(m))
    }

    /// Standard complex Gaussians `z_k` with `E|z_k|² = 1` (real `N(0,1)` at `k = 0`), drawn
    /// from the initialisation stream. Independent of `dt` and of the grid size.
    pub fn initial_normals(&self) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        if self.kind == NoiseKind::Zero {
            return out;
        }
        let mut rng = self.rng(Purpose::Init, 0);
        let k_max = self.grid.k_max() as usize;
        let n_modes = self.grid.n_modes();
        let c = out.coeffs_mut();
        c[0].re = normal_pair(&mut rng).0;
        let s = 0.5f64.sqrt();
        for k in 1..=k_max {
            let (a, b) = normal_pair(&mut rng);
            c[k] = Complex64::new(a * s, b * s);
            c[n_modes - k] = c[k].conj();
        }
        out
    }

    /// JSON-ready summary of this path.
    pub fn manifest(&self, m: &Mollifier) -> NoiseManifest {
        NoiseManifest {
            seed: self.seed,
            dt: self.dt(),
            n_steps: self.n_steps(),
            n_modes: self.grid.n_modes(),
            eps: m.eps(),
            profile: m.name(),
            member: self.member,
            kind: self.kind,
        }
    }
}

pub fn sample_noise_path(grid: GridSpec, dt: f64, n_steps: usize, seed: u64) -> Result<NoisePath> {
    NoisePath::new(grid, dt, n_steps, seed)
}

pub fn mollified_increment(path: &NoisePath, n: usize, m: &Mollifier) -> Result<SpectralField> {
    path.mollified_increment(n, m)
}

/// Noise configuration recorded in run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseManifest {
    pub seed: u64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_modes: usize,
    pub eps: f64,
    pub profile: String,
    pub member: u64,
    pub kind: NoiseKind,
}

/// Box–Muller from four consecutive 32-bit words.
fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

// ORNSTEIN–UHLENBECK
// ================================================================================================

/// Per-mode state of `X^I`: exact OU on `k ≠ 0`, Brownian motion on the zero mode.
#[derive(Clone, Debug)]
pub struct StationaryLinearState {
    x: SpectralField,
    decay: Vec<f64>,
    gain: Vec<f64>,
    dt: f64,
}

impl StationaryLinearState {
    /// State started at zero.
    pub fn zero(grid: GridSpec, m: &Mollifier, dt: f64) -> Self {
        let decay = grid.table(|k| (-2.0 * PI * PI * (k * k) as f64 * dt).exp());
        let gain = grid.table(|k| {
            let phi = m.at(k);
            if k == 0 {
                return phi;
            }
            let z = 4.0 * PI * PI * (k * k) as f64 * dt;
            phi * (-(-z).exp_m1() / z).sqrt()
        });
        Self { x: SpectralField::zeros(grid), decay, gain, dt }
    }

    /// Nonzero modes drawn from the stationary law `Var = φ(εk)²/(4π²k²)`; zero mode at 0.
    pub fn stationary(path: &NoisePath, m: &Mollifier) -> Self {
        let mut s = Self::zero(path.grid(), m, path.dt());
        let sd = path.grid().table(|k| {
            if k == 0 {
                0.0
            } else {
                m.at(k) / (2.0 * PI * k.abs() as f64)
            }
        });
        s.x = path.initial_normals().scale_by(&sd);
        s
    }

    pub fn field(&self) -> &SpectralField {
        &self.x
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Zeroes the zero mode, keeping the stationary part only.
    pub fn reset_zero_mode(&mut self) {
        self.x.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    }

    /// Advances by one step using the raw increment `ΔŴ_n`.
    pub fn step(&mut self, incr: &SpectralField) -> Result<()> {
        if incr.grid() != self.x.grid() {
            return Err(Error::GridMismatch(self.x.grid().n_modes(), incr.grid().n_modes()));
        }
        let c = self.x.coeffs_mut();
        for (i, (x, w)) in c.iter_mut().zip(incr.coeffs()).enumerate() {
            *x = *x * self.decay[i] + w * self.gain[i];
        }
        Ok(())
    }
}

/// Functional form of [`StationaryLinearState::step`].
pub fn ou_step(
    state: &StationaryLinearState,
    incr: &SpectralField,
) -> Result<StationaryLinearState> {
    let mut next = state.clone();
    next.step(incr)?;
    Ok(next)
}

// TESTS
// ================================================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn symmetry_and_determinism() {
        let p = sample_noise_path(grid(32), 1e-3, 10, 7).unwrap();
        for n in 0..10 {
            let a = p.increment(n).unwrap();
            assert_eq!(a.symmetry_defect(), 0.0);
            assert_eq!(a, p.increment(n).unwrap());
        }
        let q = sample_noise_path(grid(32), 1e-3, 10, 7).unwrap();
        assert_eq!(p.increment(3).unwrap(), q.increment(3).unwrap());
        assert!(p.increment(10).is_err());
        assert_ne!(p.increment(0).unwrap(), p.for_member(1).increment(0).unwrap());
    }

    #[test]
    fn grid_and_time_coupling() {
        let fine = sample_noise_path(grid(64), 1e-3, 8, 3).unwrap();
        let small = fine.on_grid(grid(16));
        let (a, b) = (fine.increment(2).unwrap(), small.increment(2).unwrap());
        for k in -7..=7 {
            assert_eq!(a.coeff(k), b.coeff(k));
        }
        let coarse = fine.coarsen(2).unwrap();
        assert_eq!(coarse.n_steps(), 4);
        assert!((coarse.dt() - 2e-3).abs() < 1e-18);
        let sum = &fine.increment(2).unwrap() + &fine.increment(3).unwrap();
        assert!((&coarse.increment(1).unwrap() - &sum).max_coeff() < 1e-16);
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn increment_variance() {
        let dt = 0.01;
        let n = 20_000;
        let p = sample_noise_path(grid(8), dt, n, 11).unwrap();
        let mut s = [0.0; 4];
        for i in 0..n {
            let w = p.increment(i).unwrap();
            s[0] += w.coeff(0).re.powi(2);
            s[1] += w.coeff(1).re.powi(2);
            s[2] += w.coeff(2).im.powi(2);
            s[3] += w.coeff(1).re * w.coeff(2).re;
        }
        let v: Vec<f64> = s.iter().map(|x| x / n as f64).collect();
        assert!((v[0] / dt - 1.0).abs() < 0.05);
        assert!((v[1] / (dt / 2.0) - 1.0).abs() < 0.05);
        assert!((v[2] / (dt / 2.0) - 1.0).abs() < 0.05);
        assert!(v[3].abs() / (dt / 2.0) < 0.05);
    }

    #[test]
    fn zero_path() {
        let p = NoisePath::zero(grid(16), 0.1, 3).unwrap();
        assert_eq!(p.increment(1).unwrap().max_coeff(), 0.0);
        assert_eq!(p.initial_normals().max_coeff(), 0.0);
    }

    #[test]
    fn ou_decay_without_noise() {
        let g = grid(16);
        let m = Mollifier::bump2(0.25).unwrap();
        let p = sample_noise_path(g, 1e-3, 1, 5).unwrap();
        let mut s = StationaryLinearState::stationary(&p, &m);
        let before = s.field().clone();
        s.step(&SpectralField::zeros(g)).unwrap();
        for k in 1..=g.k_max() {
            let want = before.coeff(k) * (-2.0 * PI * PI * (k * k) as f64 * 1e-3).exp();
            assert!((s.field().coeff(k) - want).norm() < 1e-15);
        }
    }

    #[test]
    fn ou_gain_matches_variance() {
        let g = grid(16);
        let m = Mollifier::bump2(0.25).unwrap();
        let dt = 0.003;
        let s = StationaryLinearState::zero(g, &m, dt);
        for k in 1..=g.k_max() {
            let i = g.index_of(k).unwrap();
            let lam = 4.0 * PI * PI * (k * k) as f64;
            let want = m.at(k).powi(2) * (1.0 - (-lam * dt).exp()) / lam;
            assert!((s.gain[i].powi(2) * dt - want).abs() <= 1e-15 * want.max(1e-300));
        }
    }
}
