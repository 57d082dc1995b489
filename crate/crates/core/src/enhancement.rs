//! The driving-term tuple `(X^I, X^Y, X^W, X^B, X^D, X^K, X^C)` built from one noise path.
//!
//! Components on nonconstant modes are started from an approximately stationary state (exact
//! stationary draw for `X^I`, a burn-in run for the nonlinear ones); the zero modes start at 0 at
//! `t = 0`. Nonlinear sources are evaluated at the start of each step and propagated with
//! exponential Euler, `X_{n+1} = P_dt (X_n + dt·S_n)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{besov_norm, path_norm, Blocks, DyadicPartition, NormSpec, PathNormSpec};
use crate::error::{Error, Result};
use crate::noise::{NoiseManifest, NoisePath, Purpose, StationaryLinearState};
use crate::par;
use crate::path::{load_path, save_path, FieldPath};
use crate::renorm::{RenormSet, Scheme};
use crate::spectral::{heat_table, GridSpec, Mollifier, Profile, SpectralField};

/// Regularity used for the norm report.
pub const NORM_ALPHA: f64 = 0.4;

/// Maximum number of samples entering the time-Hölder part of a norm.
pub const HOLDER_SAMPLES: usize = 41;

/// Default burn-in time before `t = 0`.
pub const DEFAULT_BURN_IN: f64 = 1.0;

const NAMES: [&str; 7] = ["x_i", "x_y", "x_w", "x_b", "x_d", "x_k", "x_c"];

#[derive(Clone, Debug)]
pub struct Enhancement {
    pub scheme: Scheme,
    pub mollifier: Mollifier,
    pub consts: RenormSet,
    pub burn_in: f64,
    pub noise: NoiseManifest,
    pub x_i: FieldPath,
    pub x_y: FieldPath,
    pub x_w: FieldPath,
    pub x_b: FieldPath,
    pub x_d: FieldPath,
    pub x_k: FieldPath,
    pub x_c: FieldPath,
}

impl Enhancement {
    pub fn grid(&self) -> GridSpec {
        self.x_i.grid()
    }

    pub fn dt(&self) -> f64 {
        self.x_i.dt()
    }

    pub fn n_steps(&self) -> usize {
        self.x_i.n_steps()
    }

    /// Components in the order `I, Y, W, B, D, K, C`.
    pub fn components(&self) -> [(&'static str, &FieldPath); 7] {
        let p = [&self.x_i, &self.x_y, &self.x_w, &self.x_b, &self.x_d, &self.x_k, &self.x_c];
        std::array::from_fn(|i| (NAMES[i], p[i]))
    }

    /// `(c^C, c^B, c^D)` for this scheme.
    pub fn constants(&self) -> (f64, f64, f64) {
        let (b, d) = self.consts.resonant_pair(self.scheme);
        (self.c_c(), b, d)
    }

    fn c_c(&self) -> f64 {
        match self.scheme {
            Scheme::Plain => self.consts.c_c,
            Scheme::Fq => self.consts.ct_c,
        }
    }

    /// Writes one path file per component and `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (name, p) in self.components() {
            let file = format!("{name}.path");
            save_path(dir.join(&file), p)?;
            files.push(file);
        }
        let manifest = EnhancementManifest {
            scheme: self.scheme,
            profile: self.mollifier.name(),
            eps: self.mollifier.eps(),
            burn_in: self.burn_in,
            noise: self.noise.clone(),
            constants: self.consts.clone(),
            files: files.clone(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        files.push("manifest.json".into());
        Ok(files)
    }

    /// Reads a directory written by [`Enhancement::save`]. The profile must be parseable.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let m: EnhancementManifest = serde_json::from_str(&text)?;
        let mollifier = Mollifier::new(Profile::parse(&m.profile)?, m.eps)?;
        let mut paths = Vec::with_capacity(7);
        for name in NAMES {
            paths.push(load_path(dir.join(format!("{name}.path")))?);
        }
        for p in &paths[1..] {
            paths[0].check_aligned(p)?;
        }
        let mut it = paths.into_iter();
        let mut next = || it.next().expect("seven components");
        Ok(Self {
            scheme: m.scheme,
            mollifier,
            consts: m.constants,
            burn_in: m.burn_in,
            noise: m.noise,
            x_i: next(),
            x_y: next(),
            x_w: next(),
            x_b: next(),
            x_d: next(),
            x_k: next(),
            x_c: next(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnhancementManifest {
    pub scheme: Scheme,
    pub profile: String,
    pub eps: f64,
    pub burn_in: f64,
    pub noise: NoiseManifest,
    pub constants: RenormSet,
    pub files: Vec<String>,
}

// CONSTRUCTION
// ================================================================================================

/// Source terms and the linear propagator shared by construction and the residual check.
struct Stepper {
    scheme: Scheme,
    dt: f64,
    heat: Vec<f64>,
    eta2: Vec<f64>,
    c_v: f64,
    c_c: f64,
}

impl Stepper {
    fn new(grid: GridSpec, dt: f64, m: &Mollifier, consts: &RenormSet, scheme: Scheme) -> Result<Self> {
        let c_c = match scheme {
            Scheme::Plain => consts.c_c,
            Scheme::Fq => consts.ct_c,
        };
        Ok(Self {
            scheme,
            dt,
            heat: heat_table(grid, dt)?,
            eta2: m.table_sq(grid),
            c_v: consts.c_v,
            c_c,
        })
    }

    /// Sources of `X^Y`, `X^W`, `X^K` at the state `(X^I, X^Y)`.
    fn sources(
        &self,
        x_i: &SpectralField,
        x_y: &SpectralField,
    ) -> Result<(SpectralField, SpectralField, SpectralField)> {
        let grid = x_i.grid();
        let d_i = x_i.derivative();
        let d_y = x_y.derivative();
        let (pi, py) = SpectralField::to_padded_pair(&d_i, &d_y)?;
        let sq: Vec<f64> = pi.iter().map(|a| a * a).collect();
        let cross: Vec<f64> = pi.iter().zip(&py).map(|(a, b)| a * b).collect();
        let (mut s_y, mut s_w) = SpectralField::from_padded_pair(grid, &sq, &cross)?;
        s_y.add_constant(-self.c_v);
        s_y = &s_y * 0.5;
        s_w.add_scaled(-self.c_c, &d_i);
        let mut s_k = d_i;
        if self.scheme == Scheme::Fq {
            for s in [&mut s_y, &mut s_w, &mut s_k] {
                s.scale_by_in_place(&self.eta2);
            }
        }
        Ok((s_y, s_w, s_k))
    }

    /// `P_dt (x + dt·s)`.
    fn propagate(&self, x: &SpectralField, s: &SpectralField) -> SpectralField {
        let mut out = x.clone();
        out.add_scaled(self.dt, s);
        out.scale_by_in_place(&self.heat);
        out
    }
}

struct State {
    x_i: StationaryLinearState,
    x_y: SpectralField,
    x_w: SpectralField,
    x_k: SpectralField,
}

impl State {
    fn advance(&mut self, st: &Stepper, incr: &SpectralField) -> Result<()> {
        let (s_y, s_w, s_k) = st.sources(self.x_i.field(), &self.x_y)?;
        self.x_i.step(incr)?;
        self.x_y = st.propagate(&self.x_y, &s_y);
        self.x_w = st.propagate(&self.x_w, &s_w);
        self.x_k = st.propagate(&self.x_k, &s_k);
        Ok(())
    }

    fn reset_zero_modes(&mut self) {
        self.x_i.reset_zero_mode();
        for f in [&mut self.x_y, &mut self.x_w, &mut self.x_k] {
            f.add_constant(-f.mean());
        }
    }
}

fn check_inputs(path: &NoisePath, m: &Mollifier, consts: &RenormSet) -> Result<()> {
    m.check_grid(path.grid())?;
    if !consts.matches(m) {
        return Err(Error::ConstantsMismatch(format!(
            "constants for {} at eps={} but mollifier {} at eps={}",
            consts.profile,
            consts.eps,
            m.name(),
            m.eps()
        )));
    }
    Ok(())
}

/// Builds the driving terms on `t_n = n·dt`, `n = 0..=n_steps`, from the path's increments.
///
/// `burn_in` (a time) is spent evolving the nonlinear components from zero with the path's
/// burn-in stream before the zero modes are reset at `t = 0`.
pub fn build_enhancement(
    path: &NoisePath,
    m: &Mollifier,
    consts: &RenormSet,
    scheme: Scheme,
    burn_in: f64,
) -> Result<Enhancement> {
    check_inputs(path, m, consts)?;
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::Config(format!("burn-in must be nonnegative, got {burn_in}")));
    }
    let grid = path.grid();
    let dt = path.dt();
    let st = Stepper::new(grid, dt, m, consts, scheme)?;
    let mut state = State {
        x_i: StationaryLinearState::stationary(path, m),
        x_y: SpectralField::zeros(grid),
        x_w: SpectralField::zeros(grid),
        x_k: SpectralField::zeros(grid),
    };

    let n_burn = (burn_in / dt).round() as usize;
    if n_burn > 0 {
        let burn = path.for_purpose(Purpose::BurnIn, n_burn);
        for s in 0..n_burn {
            state.advance(&st, &burn.increment(s)?)?;
        }
    }
    state.reset_zero_modes();

    let n = path.n_steps();
    let mut xi = Vec::with_capacity(n + 1);
    let mut xy = Vec::with_capacity(n + 1);
    let mut xw = Vec::with_capacity(n + 1);
    let mut xk = Vec::with_capacity(n + 1);
    for s in 0..=n {
        xi.push(state.x_i.field().clone());
        xy.push(state.x_y.clone());
        xw.push(state.x_w.clone());
        xk.push(state.x_k.clone());
        if s < n {
            state.advance(&st, &path.increment(s)?)?;
        }
    }

    let c_c = st.c_c;
    let (c_b, c_d) = consts.resonant_pair(scheme);
    let part = DyadicPartition::new(grid)?;
    let derived = par::map_indexed(n + 1, |s| {
        derived_terms(&xi[s], &xy[s], &xw[s], &xk[s], (c_c, c_b, c_d), &part)
    });
    let mut xb = Vec::with_capacity(n + 1);
    let mut xd = Vec::with_capacity(n + 1);
    let mut xc = Vec::with_capacity(n + 1);
    for r in derived {
        let (b, d, c) = r?;
        xb.push(b);
        xd.push(d);
        xc.push(c);
    }

    Ok(Enhancement {
        scheme,
        mollifier: m.clone(),
        consts: consts.clone(),
        burn_in,
        noise: path.manifest(m),
        x_i: FieldPath::new(dt, xi)?,
        x_y: FieldPath::new(dt, xy)?,
        x_w: FieldPath::new(dt, xw)?,
        x_b: FieldPath::new(dt, xb)?,
        x_d: FieldPath::new(dt, xd)?,
        x_k: FieldPath::new(dt, xk)?,
        x_c: FieldPath::new(dt, xc)?,
    })
}

/// `X^B = ½((∂X^Y)² − c^B)`, `X^D = ∂X^W ⊙ ∂X^I − c^C ∂X^Y − c^D`, `X^C = ∂X^K ⊙ ∂X^I − c^C`.
fn derived_terms(
    x_i: &SpectralField,
    x_y: &SpectralField,
    x_w: &SpectralField,
    x_k: &SpectralField,
    (c_c, c_b, c_d): (f64, f64, f64),
    part: &DyadicPartition,
) -> Result<(SpectralField, SpectralField, SpectralField)> {
    let grid = x_i.grid();
    let bi = Blocks::new(&x_i.derivative(), part)?;
    let d_y = x_y.derivative();

    let mut b = d_y.square();
    b.add_constant(-c_b);
    let b = &b * 0.5;

    let mut d = SpectralField::from_padded(grid, &Blocks::new(&x_w.derivative(), part)?.resonant(&bi))?;
    d.add_scaled(-c_c, &d_y);
    d.add_constant(-c_d);

    let mut c = SpectralField::from_padded(grid, &Blocks::new(&x_k.derivative(), part)?.resonant(&bi))?;
    c.add_constant(-c_c);
    Ok((b, d, c))
}

/// `a_t ⊙ b_t − c` at every sample.
pub fn renormalized_resonant(
    a: &FieldPath,
    b: &FieldPath,
    c: f64,
    part: &DyadicPartition,
) -> Result<FieldPath> {
    a.check_aligned(b)?;
    let out = par::map_indexed(a.len(), |n| {
        crate::dyadic::resonant(a.at(n), b.at(n), part).map(|mut r| {
            r.add_constant(-c);
            r
        })
    });
    FieldPath::new(a.dt(), out.into_iter().collect::<Result<Vec<_>>>()?)
}

/// `∂_x` applied at every sample.
pub fn derivative_path(p: &FieldPath) -> FieldPath {
    p.map(SpectralField::derivative)
}

/// Largest coefficient of `X_{n+1} − P_dt(X_n + dt·S_n)` over `Y, W, K` and all steps.
pub fn mild_residual(e: &Enhancement) -> Result<f64> {
    let st = Stepper::new(e.grid(), e.dt(), &e.mollifier, &e.consts, e.scheme)?;
    let res = par::map_indexed(e.n_steps(), |n| -> Result<f64> {
        let (s_y, s_w, s_k) = st.sources(e.x_i.at(n), e.x_y.at(n))?;
        let mut r: f64 = 0.0;
        for (x, s) in [(&e.x_y, &s_y), (&e.x_w, &s_w), (&e.x_k, &s_k)] {
            r = r.max((x.at(n + 1) - &st.propagate(x.at(n), s)).max_coeff());
        }
        Ok(r)
    });
    res.into_iter().try_fold(0.0, |m: f64, r| Ok(m.max(r?)))
}

// NORMS
// ================================================================================================

/// The seven components of `‖𝕏‖_T` at regularity `α`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnhancementNorms {
    pub alpha: f64,
    /// `sup_t ‖X^I‖_α`.
    pub i: f64,
    /// `sup_t ‖X^Y‖_{2α}`.
    pub y: f64,
    /// `sup_t ‖X^W‖_{α+1}` plus the `¼`-Hölder seminorm in `𝒞^{α+½}`.
    pub w: f64,
    /// `sup_t ‖X^B‖_{2α−1}`.
    pub b: f64,
    /// `sup_t ‖X^D‖_{2α−1}`.
    pub d: f64,
    /// `sup_t ‖X^K‖_{α+1}`.
    pub k: f64,
    /// `sup_t ‖X^C‖_{2α−1}`.
    pub c: f64,
}

impl EnhancementNorms {
    pub fn total(&self) -> f64 {
        self.i + self.y + self.w + self.b + self.d + self.k + self.c
    }
}

fn sup_norm_path(p: &FieldPath, alpha: f64, part: &DyadicPartition) -> Result<f64> {
    let spec = NormSpec::holder(alpha);
    let v = par::map_indexed(p.len(), |n| besov_norm(p.at(n), &spec, part));
    v.into_iter().try_fold(0.0, |m: f64, x| Ok(m.max(x?)))
}

/// `sup_{s<t} ‖u_t − u_s‖_{α−1/2} / (t − s)^{1/4}` over thinned samples.
fn holder_quarter(p: &FieldPath, alpha: f64, part: &DyadicPartition) -> Result<f64> {
    let idx = p.thin_indices(HOLDER_SAMPLES);
    let times: Vec<f64> = idx.iter().map(|&n| p.time(n)).collect();
    let fields: Vec<&SpectralField> = idx.iter().map(|&n| p.at(n)).collect();
    let spec = PathNormSpec::new(NormSpec::holder(alpha), 0.0, 0.25)?;
    Ok(path_norm(&times, &fields, &spec, part)?.holder)
}

/// `‖𝕏‖_T` components at `α = 0.4`.
pub fn enhancement_norms(e: &Enhancement, part: &DyadicPartition) -> Result<EnhancementNorms> {
    enhancement_norms_at(e, NORM_ALPHA, part)
}

pub fn enhancement_norms_at(
    e: &Enhancement,
    alpha: f64,
    part: &DyadicPartition,
) -> Result<EnhancementNorms> {
    Ok(EnhancementNorms {
        alpha,
        i: sup_norm_path(&e.x_i, alpha, part)?,
        y: sup_norm_path(&e.x_y, 2.0 * alpha, part)?,
        w: sup_norm_path(&e.x_w, alpha + 1.0, part)? + holder_quarter(&e.x_w, alpha + 1.0, part)?,
        b: sup_norm_path(&e.x_b, 2.0 * alpha - 1.0, part)?,
        d: sup_norm_path(&e.x_d, 2.0 * alpha - 1.0, part)?,
        k: sup_norm_path(&e.x_k, alpha + 1.0, part)?,
        c: sup_norm_path(&e.x_c, 2.0 * alpha - 1.0, part)?,
    })
}

/// Componentwise norms of the difference of two enhancements on the same grid.
pub fn enhancement_distance(
    a: &Enhancement,
    b: &Enhancement,
    part: &DyadicPartition,
) -> Result<EnhancementNorms> {
    let diff = |x: &FieldPath, y: &FieldPath| x.zip_map(y, |u, v| u - v);
    let d = Enhancement {
        x_i: diff(&a.x_i, &b.x_i)?,
        x_y: diff(&a.x_y, &b.x_y)?,
        x_w: diff(&a.x_w, &b.x_w)?,
        x_b: diff(&a.x_b, &b.x_b)?,
        x_d: diff(&a.x_d, &b.x_d)?,
        x_k: diff(&a.x_k, &b.x_k)?,
        x_c: diff(&a.x_c, &b.x_c)?,
        ..a.clone()
    };
    enhancement_norms(&d, part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::resonant;

    fn setup(n: usize, eps: f64) -> (GridSpec, Mollifier, RenormSet) {
        let g = GridSpec::new(n).unwrap();
        let m = Mollifier::bump2(eps).unwrap();
        let c = RenormSet::compute(&m).unwrap();
        (g, m, c)
    }

    #[test]
    fn zero_noise_leaves_only_the_zero_mode_drift() {
        let (g, m, c) = setup(32, 0.25);
        let p = NoisePath::zero(g, 1e-3, 50).unwrap();
        let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.1).unwrap();
        for n in 0..=50 {
            let t = n as f64 * 1e-3;
            let want = SpectralField::constant(g, -0.5 * c.c_v * t);
            assert!((e.x_y.at(n) - &want).max_coeff() < 1e-12 * c.c_v);
            for p in [&e.x_i, &e.x_w, &e.x_k, &e.x_c] {
                assert_eq!(p.at(n).max_coeff(), 0.0);
            }
            assert!((e.x_b.at(n).mean() + 0.5 * c.c_b).abs() < 1e-12);
            assert!((e.x_d.at(n).mean() + c.c_d).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_is_zero_and_fields_are_real() {
        let (g, m, c) = setup(32, 0.25);
        let p = NoisePath::new(g, 1e-3, 40, 9).unwrap();
        for scheme in [Scheme::Plain, Scheme::Fq] {
            let e = build_enhancement(&p, &m, &c, scheme, 0.05).unwrap();
            assert_eq!(mild_residual(&e).unwrap(), 0.0);
            for (_, path) in e.components() {
                assert!(path.fields().iter().all(|f| f.symmetry_defect() == 0.0));
            }
            for f in [&e.x_i, &e.x_y, &e.x_w, &e.x_k] {
                assert_eq!(f.at(0).mean(), 0.0);
            }
        }
    }

    #[test]
    fn fq_k_is_the_eta2_image_of_plain_k() {
        let (g, m, c) = setup(32, 0.25);
        let p = NoisePath::new(g, 1e-3, 30, 4).unwrap();
        let plain = build_enhancement(&p, &m, &c, Scheme::Plain, 0.05).unwrap();
        let fq = build_enhancement(&p, &m, &c, Scheme::Fq, 0.05).unwrap();
        assert_eq!(plain.x_i, fq.x_i);
        for n in 0..=30 {
            let want = plain.x_k.at(n).eta2_convolve(&m);
            assert!((fq.x_k.at(n) - &want).max_coeff() < 1e-12);
        }
    }

    #[test]
    fn derived_terms_match_resonant_paths() {
        let (g, m, c) = setup(32, 0.25);
        let part = DyadicPartition::new(g).unwrap();
        let p = NoisePath::new(g, 1e-3, 10, 2).unwrap();
        let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.02).unwrap();
        let di = derivative_path(&e.x_i);
        let xc = renormalized_resonant(&derivative_path(&e.x_k), &di, c.c_c, &part).unwrap();
        for n in 0..=10 {
            assert!((xc.at(n) - e.x_c.at(n)).max_coeff() < 1e-13);
            let mut d = resonant(&e.x_w.at(n).derivative(), di.at(n), &part).unwrap();
            d.add_constant(-c.c_d);
            assert!((&d - e.x_d.at(n)).max_coeff() < 1e-13);
        }
        let zero = FieldPath::zeros(g, 1e-3, 10).unwrap();
        let r = renormalized_resonant(&di, &zero, 0.0, &part).unwrap();
        assert!(r.fields().iter().all(|f| f.max_coeff() == 0.0));
    }

    #[test]
    fn flat_profile_makes_schemes_coincide() {
        let g = GridSpec::new(32).unwrap();
        let m = Mollifier::new(Profile::Flat { radius: 1.0 }, 1.0 / 16.0).unwrap();
        let mut c = RenormSet::compute(&m).unwrap();
        c.ct_b = c.c_b;
        c.ct_d = c.c_d;
        let p = NoisePath::new(g, 1e-3, 20, 5).unwrap();
        let a = build_enhancement(&p, &m, &c, Scheme::Plain, 0.02).unwrap();
        let b = build_enhancement(&p, &m, &c, Scheme::Fq, 0.02).unwrap();
        for ((_, x), (_, y)) in a.components().iter().zip(b.components().iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let (g, m, c) = setup(16, 0.25);
        let p = NoisePath::new(g, 1e-3, 5, 1).unwrap();
        let e = build_enhancement(&p, &m, &c, Scheme::Fq, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = e.save(dir.path()).unwrap();
        assert_eq!(files.len(), 8);
        let back = Enhancement::load(dir.path()).unwrap();
        assert_eq!(back.scheme, Scheme::Fq);
        assert_eq!(back.consts, c);
        for ((_, x), (_, y)) in e.components().iter().zip(back.components().iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, m, c) = setup(16, 0.25);
        let p = NoisePath::new(g, 1e-3, 5, 1).unwrap();
        let other = RenormSet::compute(&Mollifier::bump2(0.5).unwrap()).unwrap();
        assert!(build_enhancement(&p, &m, &other, Scheme::Plain, 0.0).is_err());
        let fine = Mollifier::bump2(0.1).unwrap();
        let cf = RenormSet::compute(&fine).unwrap();
        assert!(build_enhancement(&p, &fine, &cf, Scheme::Plain, 0.0).is_err());
        assert!(build_enhancement(&p, &m, &c, Scheme::Plain, -1.0).is_err());
    }

    #[test]
    fn norms_of_zero_noise() {
        let (g, m, c) = setup(32, 0.25);
        let part = DyadicPartition::new(g).unwrap();
        let p = NoisePath::zero(g, 1e-3, 20).unwrap();
        let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.0).unwrap();
        let r = enhancement_norms(&e, &part).unwrap();
        assert_eq!((r.i, r.w, r.k, r.c), (0.0, 0.0, 0.0, 0.0));
        assert!(r.y > 0.0);
    }
}
