//! Periodic grids, Fourier coefficients, Fourier multipliers and alias-free products.
//!
//! Coefficients follow the convention `c_k = ∫_𝕋 e^{-2πikx} u(x) dx`, so the forward FFT is
//! divided by `N`. Fields are stored in FFT order with the Nyquist slot held at zero.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// GRID
// ================================================================================================

/// Uniform grid on the unit torus with `N` sample points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n_modes: usize,
}

impl GridSpec {
    /// `n_modes` must be a power of two and at least 8.
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes < 8 || !n_modes.is_power_of_two() {
            return Err(Error::InvalidGrid(n_modes));
        }
        Ok(Self { n_modes })
    }

    pub fn n_modes(self) -> usize {
        self.n_modes
    }

    /// Largest represented wavenumber, `N/2 - 1`.
    pub fn k_max(self) -> i64 {
        (self.n_modes / 2) as i64 - 1
    }

    pub fn nyquist_index(self) -> usize {
        self.n_modes / 2
    }

    /// Wavenumber stored at FFT slot `idx`. The Nyquist slot reports `N/2`.
    pub fn wavenumber(self, idx: usize) -> i64 {
        if idx <= self.n_modes / 2 {
            idx as i64
        } else {
            idx as i64 - self.n_modes as i64
        }
    }

    /// FFT slot of wavenumber `k`, if `|k| <= k_max`.
    pub fn index_of(self, k: i64) -> Option<usize> {
        if k.abs() > self.k_max() {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((self.n_modes as i64 + k) as usize)
        }
    }

    /// Iterates `(slot, k)` over represented modes, skipping Nyquist.
    pub fn modes(self) -> impl Iterator<Item = (usize, i64)> {
        let ny = self.nyquist_index();
        (0..self.n_modes)
            .filter(move |&i| i != ny)
            .map(move |i| (i, self.wavenumber(i)))
    }

    /// Sample points `x_j = j / N`.
    pub fn points(self) -> Vec<f64> {
        let n = self.n_modes as f64;
        (0..self.n_modes).map(|j| j as f64 / n).collect()
    }

    /// Tabulates a real multiplier in FFT order; the Nyquist slot is zero.
    pub fn table(self, m: impl Fn(i64) -> f64) -> Vec<f64> {
        let ny = self.nyquist_index();
        (0..self.n_modes)
            .map(|i| if i == ny { 0.0 } else { m(self.wavenumber(i)) })
            .collect()
    }

    fn check(self, other: GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(self.n_modes, other.n_modes));
        }
        Ok(())
    }
}

/// Validating constructor, equivalent to [`GridSpec::new`].
pub fn make_grid(n_modes: usize) -> Result<GridSpec> {
    GridSpec::new(n_modes)
}

/// `e^{-2π²k²t}`.
pub fn heat_factor(k: i64, t: f64) -> f64 {
    let k = k as f64;
    (-2.0 * PI * PI * k * k * t).exp()
}

/// Heat multiplier table for time `t`.
pub fn heat_table(grid: GridSpec, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(grid.table(|k| heat_factor(k, t)))
}

// FFT PLANS
// ================================================================================================

struct Plan {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

#[derive(Default)]
struct PlanCache {
    planner: Option<FftPlanner<f64>>,
    plans: HashMap<usize, Plan>,
}

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(PlanCache::default());
}

/// Unnormalised in-place transform: forward uses `e^{-2πijk/n}`, inverse `e^{+2πijk/n}`.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    PLANS.with(|cell| {
        let mut cache = cell.borrow_mut();
        let PlanCache { planner, plans } = &mut *cache;
        let plan = plans.entry(n).or_insert_with(|| {
            let planner = planner.get_or_insert_with(FftPlanner::new);
            Plan {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
                scratch: Vec::new(),
            }
        });
        let fft = if inverse { &plan.inv } else { &plan.fwd };
        let need = fft.get_inplace_scratch_len();
        if plan.scratch.len() < need {
            plan.scratch.resize(need, ZERO);
        }
        fft.process_with_scratch(buf, &mut plan.scratch[..need]);
    });
}

// SPECTRAL FIELD
// ================================================================================================

/// A real periodic function stored by its Fourier coefficients in FFT order.
#[derive(Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("n_modes", &self.grid.n_modes)
            .field("mean", &self.mean())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, coeffs: vec![ZERO; grid.n_modes] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Builds a real field from coefficients in FFT order, projecting onto real symmetry.
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n_modes {
            return Err(Error::GridMismatch(grid.n_modes, coeffs.len()));
        }
        let mut f = Self { grid, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// Builds a real field from `c(k)` for `k = 0..=k_max`; negative modes are conjugates.
    pub fn from_positive_modes(grid: GridSpec, mut c: impl FnMut(i64) -> Complex64) -> Self {
        let n = grid.n_modes;
        let mut coeffs = vec![ZERO; n];
        coeffs[0] = Complex64::new(c(0).re, 0.0);
        for k in 1..=grid.k_max() {
            let v = c(k);
            coeffs[k as usize] = v;
            coeffs[n - k as usize] = v.conj();
        }
        Self { grid, coeffs }
    }

    /// Forward transform of `N` real samples at `x_j = j/N`.
    pub fn from_real(grid: GridSpec, values: &[f64]) -> Result<Self> {
        if values.len() != grid.n_modes {
            return Err(Error::GridMismatch(grid.n_modes, values.len()));
        }
        let n = grid.n_modes;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(&mut buf, false);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        Self::from_coeffs(grid, buf)
    }

    /// Wraps stored coefficients without symmetrizing.
    pub(crate) fn from_raw(grid: GridSpec, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.n_modes);
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of wavenumber `k`; zero outside the represented band.
    pub fn coeff(&self, k: i64) -> Complex64 {
        self.grid.index_of(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Spatial mean, the zero-mode coefficient.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Samples on the `N`-point grid.
    pub fn to_real(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        buf[self.grid.nyquist_index()] = ZERO;
        fft_in_place(&mut buf, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Samples on the `2N`-point grid used for alias-free products.
    pub fn to_padded(&self) -> Vec<f64> {
        let mut buf = self.padded_coeffs();
        fft_in_place(&mut buf, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Padded samples of two fields computed with one complex transform.
    pub fn to_padded_pair(a: &Self, b: &Self) -> Result<(Vec<f64>, Vec<f64>)> {
        a.grid.check(b.grid)?;
        let pa = a.padded_coeffs();
        let pb = b.padded_coeffs();
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = pa.iter().zip(&pb).map(|(x, y)| x + i * y).collect();
        fft_in_place(&mut buf, true);
        Ok(buf.into_iter().map(|c| (c.re, c.im)).unzip())
    }

    /// Projects `2N` real samples onto the grid's mode band.
    pub fn from_padded(grid: GridSpec, values: &[f64]) -> Result<Self> {
        let m = 2 * grid.n_modes;
        if values.len() != m {
            return Err(Error::GridMismatch(m, values.len()));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(&mut buf, false);
        let scale = 1.0 / m as f64;
        let mut out = Self::zeros(grid);
        for (i, k) in grid.modes() {
            out.coeffs[i] = buf[wrap(k, m)] * scale;
        }
        out.symmetrize();
        Ok(out)
    }

    /// Projects two sets of `2N` real samples with one complex transform.
    pub fn from_padded_pair(grid: GridSpec, u: &[f64], v: &[f64]) -> Result<(Self, Self)> {
        let m = 2 * grid.n_modes;
        if u.len() != m || v.len() != m {
            return Err(Error::GridMismatch(m, u.len().min(v.len())));
        }
        let mut buf: Vec<Complex64> =
            u.iter().zip(v).map(|(&a, &b)| Complex64::new(a, b)).collect();
        fft_in_place(&mut buf, false);
        let scale = 0.5 / m as f64;
        let mut a = Self::zeros(grid);
        let mut b = Self::zeros(grid);
        for (i, k) in grid.modes() {
            let x = buf[wrap(k, m)];
            let y = buf[wrap(-k, m)].conj();
            a.coeffs[i] = (x + y) * scale;
            let d = (x - y) * scale;
            b.coeffs[i] = Complex64::new(d.im, -d.re);
        }
        a.symmetrize();
        b.symmetrize();
        Ok((a, b))
    }

    fn padded_coeffs(&self) -> Vec<Complex64> {
        let m = 2 * self.grid.n_modes;
        let mut buf = vec![ZERO; m];
        for (i, k) in self.grid.modes() {
            buf[wrap(k, m)] = self.coeffs[i];
        }
        buf
    }

    /// Enforces `c_{-k} = conj(c_k)`, a real zero mode and a zero Nyquist slot.
    pub fn symmetrize(&mut self) {
        let n = self.grid.n_modes;
        self.coeffs[0].im = 0.0;
        self.coeffs[n / 2] = ZERO;
        for k in 1..n / 2 {
            let a = self.coeffs[k];
            let b = self.coeffs[n - k].conj();
            let avg = (a + b) * 0.5;
            self.coeffs[k] = avg;
            self.coeffs[n - k] = avg.conj();
        }
    }

    /// Largest deviation from real symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.n_modes;
        let mut d = self.coeffs[0].im.abs().max(self.coeffs[n / 2].norm());
        for k in 1..n / 2 {
            d = d.max((self.coeffs[k] - self.coeffs[n - k].conj()).norm());
        }
        d
    }

    /// `c'_k = m(k) c_k`.
    pub fn apply_multiplier(&self, m: impl Fn(i64) -> Complex64) -> Self {
        let mut out = self.clone();
        for (i, k) in self.grid.modes() {
            out.coeffs[i] *= m(k);
        }
        out
    }

    /// Multiplies by a real table in FFT order.
    pub fn scale_by(&self, table: &[f64]) -> Self {
        let mut out = self.clone();
        out.scale_by_in_place(table);
        out
    }

    pub fn scale_by_in_place(&mut self, table: &[f64]) {
        debug_assert_eq!(table.len(), self.coeffs.len());
        self.coeffs.iter_mut().zip(table).for_each(|(c, &m)| *c *= m);
    }

    /// Heat semigroup `P_t`.
    pub fn heat(&self, t: f64) -> Result<Self> {
        Ok(self.scale_by(&heat_table(self.grid, t)?))
    }

    /// `φ(εD)`.
    pub fn mollify(&self, m: &Mollifier) -> Self {
        self.scale_by(&m.table(self.grid))
    }

    /// Convolution with `η₂^ε`, the multiplier `φ(εk)²`.
    pub fn eta2_convolve(&self, m: &Mollifier) -> Self {
        self.scale_by(&m.table_sq(self.grid))
    }

    /// `∂_x`, the multiplier `2πik`.
    pub fn derivative(&self) -> Self {
        self.apply_multiplier(|k| Complex64::new(0.0, 2.0 * PI * k as f64))
    }

    /// Alias-free product, exact on the represented modes.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let (a, b) = Self::to_padded_pair(self, other)?;
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_padded(self.grid, &prod)
    }

    /// Alias-free square.
    pub fn square(&self) -> Self {
        let a = self.to_padded();
        let sq: Vec<f64> = a.iter().map(|x| x * x).collect();
        Self::from_padded(self.grid, &sq).expect("padded length matches grid")
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(x, y)| *x += y * a);
    }

    pub fn add_constant(&mut self, c: f64) {
        self.coeffs[0].re += c;
    }

    /// `Σ_k |c_k|²`, equal to the spatial mean square.
    pub fn mean_square(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Maximum of `|u|` over the `N` grid points.
    pub fn sup_norm(&self) -> f64 {
        self.to_real().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Free-function form of [`SpectralField::apply_multiplier`].
pub fn apply_multiplier(f: &SpectralField, m: impl Fn(i64) -> Complex64) -> SpectralField {
    f.apply_multiplier(m)
}

pub fn heat_semigroup(f: &SpectralField, t: f64) -> Result<SpectralField> {
    f.heat(t)
}

pub fn mollify(f: &SpectralField, m: &Mollifier) -> SpectralField {
    f.mollify(m)
}

pub fn eta2_convolve(f: &SpectralField, m: &Mollifier) -> SpectralField {
    f.eta2_convolve(m)
}

pub fn derivative(f: &SpectralField) -> SpectralField {
    f.derivative()
}

pub fn pointwise_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.product(g)
}

fn wrap(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.add_scaled(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.add_scaled(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self * -1.0
    }
}

// MOLLIFIER
// ================================================================================================

/// Bump profile `φ` with `φ(0) = 1` and support in `(-R, R)`.
#[derive(Clone, Debug)]
pub enum Profile {
    /// `exp(1 - 1/(1 - (x/2)²))` on `|x| < 2`.
    Bump2,
    /// Indicator of `|x| < radius`. Not smooth; used to switch the mollifier off inside a band.
    Flat { radius: f64 },
    /// User supplied profile.
    Custom { name: String, radius: f64, f: fn(f64) -> f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Bump2 => bump2(x),
            Profile::Flat { radius } => {
                if x.abs() < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Custom { radius, f, .. } => {
                if x.abs() < *radius {
                    f(x)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Profile::Bump2 => 2.0,
            Profile::Flat { radius } | Profile::Custom { radius, .. } => *radius,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Profile::Bump2 => "bump2".into(),
            Profile::Flat { radius } => format!("flat:{radius}"),
            Profile::Custom { name, .. } => name.clone(),
        }
    }

    /// Parses `bump2` or `flat:R`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bump2" => Ok(Profile::Bump2),
            _ => match s.strip_prefix("flat:").map(str::parse::<f64>) {
                Some(Ok(radius)) if radius > 0.0 => Ok(Profile::Flat { radius }),
                _ => Err(Error::InvalidMollifier(format!("unknown profile '{s}'"))),
            },
        }
    }
}

fn bump2(x: f64) -> f64 {
    let y = 0.5 * x;
    let d = 1.0 - y * y;
    if d <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / d).exp()
    }
}

/// A profile at scale `ε`: the multiplier `φ(εk)`.
#[derive(Clone, Debug)]
pub struct Mollifier {
    profile: Profile,
    eps: f64,
    even: bool,
}

impl Mollifier {
    /// Validates `ε > 0`, `φ(0) = 1`, evenness and support on a sample set.
    pub fn new(profile: Profile, eps: f64) -> Result<Self> {
        let m = Self::new_allow_odd(profile, eps)?;
        if !m.even {
            return Err(Error::InvalidMollifier(format!("{} is not even", m.profile.name())));
        }
        Ok(m)
    }

    /// As [`Mollifier::new`] but accepts profiles that are not even. Operations whose
    /// derivation needs evenness reject such mollifiers.
    pub fn new_allow_odd(profile: Profile, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidMollifier(format!("eps must be positive, got {eps}")));
        }
        let r = profile.radius();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidMollifier(format!("bad support radius {r}")));
        }
        if (profile.eval(0.0) - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidMollifier("phi(0) must equal 1".into()));
        }
        let samples = sample_points(r);
        if samples.iter().any(|&x| !profile.eval(x).is_finite()) {
            return Err(Error::InvalidMollifier("profile is not finite".into()));
        }
        if samples
            .iter()
            .any(|&x| profile.eval(r * (1.0 + x.abs())) != 0.0 || profile.eval(-r) != 0.0)
        {
            return Err(Error::InvalidMollifier("profile does not vanish outside R".into()));
        }
        let even = samples.iter().all(|&x| profile.eval(x) == profile.eval(-x));
        Ok(Self { profile, eps, even })
    }

    pub fn bump2(eps: f64) -> Result<Self> {
        Self::new(Profile::Bump2, eps)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn name(&self) -> String {
        self.profile.name()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn support_radius(&self) -> f64 {
        self.profile.radius()
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    /// Same profile at another scale.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new_allow_odd(self.profile.clone(), eps)
    }

    /// `φ(x)`.
    pub fn phi(&self, x: f64) -> f64 {
        self.profile.eval(x)
    }

    /// `φ(εk)`.
    pub fn at(&self, k: i64) -> f64 {
        self.profile.eval(self.eps * k as f64)
    }

    /// `R/ε`; every mode with `|k| ≥ R/ε` is annihilated.
    pub fn support_modes(&self) -> f64 {
        self.support_radius() / self.eps
    }

    /// Largest `k` for which the loop bound `0..=k` covers the support.
    pub fn k_support(&self) -> i64 {
        self.support_modes().floor() as i64
    }

    /// Requires `R/ε ≤ N/2`, so that `φ(εD)` output is exactly band-limited on the grid.
    pub fn check_grid(&self, grid: GridSpec) -> Result<()> {
        let half = grid.n_modes / 2;
        let support = self.support_modes();
        if support > half as f64 * (1.0 + 1e-12) {
            return Err(Error::IncompatibleGrid { support, half });
        }
        Ok(())
    }

    /// `φ(εk)` in FFT order.
    pub fn table(&self, grid: GridSpec) -> Vec<f64> {
        grid.table(|k| self.at(k))
    }

    /// `φ(εk)²` in FFT order.
    pub fn table_sq(&self, grid: GridSpec) -> Vec<f64> {
        grid.table(|k| self.at(k).powi(2))
    }
}

fn sample_points(r: f64) -> Vec<f64> {
    (0..=257).map(|i| r * (i as f64 / 256.0) * 1.000_000_1).collect()
}

// FIELD FILES
// ================================================================================================

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct FieldHeader {
    n_modes: usize,
    layout: String,
    dtype: String,
    symmetry: String,
}

impl FieldHeader {
    fn new(n_modes: usize) -> Self {
        Self {
            n_modes,
            layout: "fft-order".into(),
            dtype: "f64le-interleaved-complex".into(),
            symmetry: "real".into(),
        }
    }
}

/// Writes a JSON header line followed by `2N` little-endian doubles.
pub fn write_field<W: Write>(mut w: W, f: &SpectralField) -> Result<()> {
    serde_json::to_writer(&mut w, &FieldHeader::new(f.grid.n_modes))?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(16 * f.coeffs.len());
    for c in &f.coeffs {
        bytes.extend_from_slice(&c.re.to_le_bytes());
        bytes.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a field written by [`write_field`]; coefficients are restored bit for bit.
pub fn read_field<R: BufRead>(mut r: R) -> Result<SpectralField> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    if header != FieldHeader::new(header.n_modes) {
        return Err(Error::Format(format!("unsupported header {line}")));
    }
    let grid = GridSpec::new(header.n_modes)?;
    let mut bytes = vec![0u8; 16 * grid.n_modes];
    r.read_exact(&mut bytes)?;
    let coeffs = bytes
        .chunks_exact(16)
        .map(|b| {
            let re = f64::from_le_bytes(b[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(b[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Ok(SpectralField { grid, coeffs })
}

pub fn save_field(path: impl AsRef<Path>, f: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<SpectralField> {
    read_field(BufReader::new(File::open(path)?))
}

// TESTS
// ================================================================================================
