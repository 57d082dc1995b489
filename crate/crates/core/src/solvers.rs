//! Direct, Cole–Hopf and paracontrolled solvers sharing one noise path.

use serde::{Deserialize, Serialize};

use crate::dyadic::{
    add_into, besov_norm, mul_add_into, path_norm, Blocks, DyadicPartition, NormSpec, PathNormSpec,
};
use crate::enhancement::Enhancement;
use crate::error::{Error, Result};
use crate::noise::{NoiseKind, NoisePath};
use crate::path::FieldPath;
use crate::renorm::Scheme;
use crate::spectral::{heat_table, GridSpec, Mollifier, SpectralField};

/// Sup-norm above which a run counts as blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

// CONFIGURATION
// ================================================================================================

/// Parameters of the paracontrolled fixed-point iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub max_iter: usize,
    /// Relative tolerance on the `𝓓_T` distance between successive iterates.
    pub tol: f64,
    /// Initial slab length.
    pub slab: f64,
    /// Slabs are never shortened below this length.
    pub min_slab: f64,
    /// `(α, β, γ)` of the stopping norm.
    pub norm: (f64, f64, f64),
    /// Samples per slab entering the stopping norm.
    pub norm_samples: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            max_iter: 80,
            tol: 1e-9,
            slab: 0.025,
            min_slab: 1e-3,
            norm: (0.45, 0.40, 0.40),
            norm_samples: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub mollifier: Mollifier,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Constant subtracted inside the quadratic term.
    pub c: f64,
    pub h0: SpectralField,
    pub picard: PicardConfig,
    /// Sup-norm at which a run is declared blown up.
    pub blow_up_threshold: f64,
}

impl SolverConfig {
    /// Configuration covering the whole noise path, started from `h0 = 0`.
    pub fn for_noise(noise: &NoisePath, m: &Mollifier, scheme: Scheme, c: f64) -> Self {
        Self {
            grid: noise.grid(),
            mollifier: m.clone(),
            dt: noise.dt(),
            t_final: noise.horizon(),
            scheme,
            c,
            h0: SpectralField::zeros(noise.grid()),
            picard: PicardConfig::default(),
            blow_up_threshold: BLOW_UP_THRESHOLD,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// `0.25/(c + ‖h₀‖²_∞)`, the largest step accepted by [`solve_renormalized`].
    pub fn max_stable_dt(&self) -> f64 {
        0.25 / (self.c.abs() + self.h0.sup_norm().powi(2))
    }

    fn validate(&self, noise: &NoisePath) -> Result<()> {
        self.mollifier.check_grid(self.grid)?;
        if noise.grid() != self.grid || self.h0.grid() != self.grid {
            return Err(Error::GridMismatch(self.grid.n_modes(), noise.grid().n_modes()));
        }
        if (noise.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Config(format!("noise dt {} vs solver dt {}", noise.dt(), self.dt)));
        }
        let n = self.n_steps();
        if (n as f64 * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::Config(format!(
                "T = {} is not a multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        if n > noise.n_steps() {
            return Err(Error::StepOutOfRange { step: n, n_steps: noise.n_steps() });
        }
        Ok(())
    }
}

/// A solver trajectory, truncated at the blow-up time if one occurred.
#[derive(Clone, Debug)]
pub struct Solution {
    pub path: FieldPath,
    pub blow_up: Option<f64>,
}

fn blown_up(f: &SpectralField, threshold: f64) -> bool {
    !f.is_finite() || f.sup_norm() > threshold
}

// DIRECT SOLVER
// ================================================================================================

/// `h_{n+1} = P_dt(h_n + dt·N(h_n) + φ(εD)ΔW_n)` with `N(h) = ½((∂h)² − c)`, smoothed by
/// `η₂^ε` in the fq scheme.
pub fn solve_renormalized(noise: &NoisePath, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate(noise)?;
    if cfg.dt > cfg.max_stable_dt() {
        return Err(Error::Config(format!(
            "dt = {} exceeds the stability bound {}",
            cfg.dt,
            cfg.max_stable_dt()
        )));
    }
    let heat = heat_table(cfg.grid, cfg.dt)?;
    let phi = cfg.mollifier.table(cfg.grid);
    let eta2 = cfg.mollifier.table_sq(cfg.grid);
    let n = cfg.n_steps();
    let mut h = cfg.h0.clone();
    let mut out = Vec::with_capacity(n + 1);
    out.push(h.clone());
    for s in 0..n {
        let mut nl = h.derivative().square();
        nl.add_constant(-cfg.c);
        if cfg.scheme == Scheme::Fq {
            nl.scale_by_in_place(&eta2);
        }
        h.add_scaled(0.5 * cfg.dt, &nl);
        h += &noise.increment(s)?.scale_by(&phi);
        h.scale_by_in_place(&heat);
        if blown_up(&h, cfg.blow_up_threshold) {
            return Ok(Solution {
                path: FieldPath::new(cfg.dt, out)?,
                blow_up: Some((s + 1) as f64 * cfg.dt),
            });
        }
        out.push(h.clone());
    }
    Ok(Solution { path: FieldPath::new(cfg.dt, out)?, blow_up: None })
}

// COLE–HOPF ORACLE
// ================================================================================================

/// Time discretization of `∂Z = ½∂²Z + Z Ẇ^ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheScheme {
    /// `Z ← P_dt (Z + Z·ΔW^ε)`.
    #[default]
    ItoEuler,
    /// `Z ← P_{dt/2} [exp(ΔW^ε − v·dt/2) · P_{dt/2} Z]` with `v = Σ_k φ(εk)²`.
    Splitting,
}

/// `log Z` for the multiplicative heat equation started at `e^{h₀}`, Itô–Euler in time.
pub fn solve_she_cole_hopf(
    noise: &NoisePath,
    m: &Mollifier,
    h0: &SpectralField,
    t_final: f64,
    dt: f64,
) -> Result<FieldPath> {
    solve_she_with(noise, m, h0, t_final, dt, SheScheme::ItoEuler)
}

pub fn solve_she_with(
    noise: &NoisePath,
    m: &Mollifier,
    h0: &SpectralField,
    t_final: f64,
    dt: f64,
    scheme: SheScheme,
) -> Result<FieldPath> {
    let grid = noise.grid();
    let mut cfg = SolverConfig::for_noise(noise, m, Scheme::Plain, 0.0);
    cfg.dt = dt;
    cfg.t_final = t_final;
    cfg.h0 = h0.clone();
    cfg.validate(noise)?;

    let phi = m.table(grid);
    // Quadratic variation rate of the driving noise; zero when the path is switched off.
    let v: f64 = match noise.kind() {
        NoiseKind::Zero => 0.0,
        NoiseKind::Gaussian => phi.iter().map(|p| p * p).sum(),
    };
    let n = cfg.n_steps();
    let mut z = exp_field(h0)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(log_field(&z, 0)?);
    match scheme {
        SheScheme::Splitting => {
            let half = heat_table(grid, 0.5 * dt)?;
            for s in 0..n {
                z.scale_by_in_place(&half);
                let w = noise.increment(s)?.scale_by(&phi);
                let (pz, pw) = SpectralField::to_padded_pair(&z, &w)?;
                let prod: Vec<f64> =
                    pz.iter().zip(&pw).map(|(z, w)| z * (w - 0.5 * v * dt).exp()).collect();
                z = SpectralField::from_padded(grid, &prod)?;
                z.scale_by_in_place(&half);
                out.push(log_field(&z, s + 1)?);
            }
        }
        SheScheme::ItoEuler => {
            let heat = heat_table(grid, dt)?;
            for s in 0..n {
                let w = noise.increment(s)?.scale_by(&phi);
                let zw = z.product(&w)?;
                z += &zw;
                z.scale_by_in_place(&heat);
                out.push(log_field(&z, s + 1)?);
            }
        }
    }
    FieldPath::new(dt, out)
}

fn exp_field(h: &SpectralField) -> Result<SpectralField> {
    let e: Vec<f64> = h.to_padded().iter().map(|x| x.exp()).collect();
    SpectralField::from_padded(h.grid(), &e)
}

/// `log Z` from padded samples; fails if `Z` is not positive everywhere.
fn log_field(z: &SpectralField, step: usize) -> Result<SpectralField> {
    let p = z.to_padded();
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonPositive { step, min });
    }
    let l: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    SpectralField::from_padded(z.grid(), &l)
}

// PARACONTROLLED SOLVER
// ================================================================================================

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlabReport {
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    /// Relative `𝓓` distance between the last two iterates.
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub slabs: Vec<SlabReport>,
    /// Number of times a slab was halved.
    pub halvings: usize,
    /// Set when the slab length fell below the minimum.
    pub blow_up: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub f: FieldPath,
    pub g: FieldPath,
    pub report: PicardReport,
}

/// Per-step data that does not change between iterations.
struct StepData {
    b_di: Blocks,
    b_dk: Blocks,
    /// Padded `∂X^Y` and `X^C`.
    p_dy: Vec<f64>,
    p_xc: Vec<f64>,
    d_w: SpectralField,
    /// `X^D + X^B`.
    xdb: SpectralField,
}

struct Picard<'a> {
    e: &'a Enhancement,
    part: &'a DyadicPartition,
    heat: Vec<f64>,
    eta2: Option<Vec<f64>>,
    dt: f64,
    f_spec: PathNormSpec,
    g_spec: PathNormSpec,
    cfg: PicardConfig,
    threshold: f64,
}

impl Picard<'_> {
    fn step_data(&self, n: usize) -> Result<StepData> {
        let e = self.e;
        let (p_dy, p_xc) = SpectralField::to_padded_pair(&e.x_y.at(n).derivative(), e.x_c.at(n))?;
        Ok(StepData {
            b_di: Blocks::new(&e.x_i.at(n).derivative(), self.part)?,
            b_dk: Blocks::new(&e.x_k.at(n).derivative(), self.part)?,
            p_dy,
            p_xc,
            d_w: e.x_w.at(n).derivative(),
            xdb: e.x_d.at(n) + e.x_b.at(n),
        })
    }

    /// `F = u ≺ ∂X^I` and `G(u, f̂, g)` at one time.
    fn sources(
        &self,
        sd: &StepData,
        f: &SpectralField,
        g: &SpectralField,
        f_hat: &SpectralField,
    ) -> Result<(SpectralField, SpectralField)> {
        let grid = f.grid();
        let d_g = g.derivative();
        let mut u = sd.d_w.clone();
        u += &f.derivative();
        u += &d_g;
        let bu = Blocks::new(&u, self.part)?;
        let big_f = SpectralField::from_padded(grid, &bu.lt(&sd.b_di))?;

        // (∂f̂ − u ≺ ∂X^K) ⊙ ∂X^I + ∂g ⊙ ∂X^I, by linearity of the resonant product.
        let u_lt_k = SpectralField::from_padded(grid, &bu.lt(&sd.b_dk))?;
        let mut h1 = f_hat.derivative();
        h1 -= &u_lt_k;
        h1 += &d_g;
        let mut acc = Blocks::new(&h1, self.part)?.resonant(&sd.b_di);

        // R(u, ∂X^K, ∂X^I), reusing the blocks of u.
        add_into(&mut acc, &Blocks::new(&u_lt_k, self.part)?.resonant(&sd.b_di));
        let vw = SpectralField::from_padded(grid, &sd.b_dk.resonant(&sd.b_di))?;
        let pvw = vw.to_padded();
        let pu = bu.total();
        for ((a, u), v) in acc.iter_mut().zip(&pu).zip(&pvw) {
            *a -= u * v;
        }

        // u ≻ ∂X^I + u X^C + u ∂X^Y + ½u².
        add_into(&mut acc, &sd.b_di.lt(&bu));
        mul_add_into(&mut acc, &pu, &sd.p_xc);
        mul_add_into(&mut acc, &pu, &sd.p_dy);
        for (a, u) in acc.iter_mut().zip(&pu) {
            *a += 0.5 * u * u;
        }
        let mut big_g = SpectralField::from_padded(grid, &acc)?;
        big_g += &sd.xdb;
        Ok((big_f, big_g))
    }

    fn propagate(&self, x: &SpectralField, s: &SpectralField) -> SpectralField {
        let mut src = s.clone();
        if let Some(eta2) = &self.eta2 {
            src.scale_by_in_place(eta2);
        }
        let mut out = x.clone();
        out.add_scaled(self.dt, &src);
        out.scale_by_in_place(&self.heat);
        out
    }

    /// `‖(f, g)‖_𝓓` on slab-local times from thinned samples.
    fn d_norm(&self, f: &[SpectralField], g: &[SpectralField]) -> Result<f64> {
        let n = f.len() - 1;
        let m = self.cfg.norm_samples.max(2) - 1;
        let mut idx: Vec<usize> = if n <= m { (0..=n).collect() } else { (0..=m).map(|i| i * n / m).collect() };
        idx.dedup();
        if idx.len() < 2 {
            return Ok(0.0);
        }
        let times: Vec<f64> = idx.iter().map(|&i| i as f64 * self.dt).collect();
        let fs: Vec<&SpectralField> = idx.iter().map(|&i| &f[i]).collect();
        let gs: Vec<&SpectralField> = idx.iter().map(|&i| &g[i]).collect();
        let a = path_norm(&times, &fs, &self.f_spec, self.part)?;
        let b = path_norm(&times, &gs, &self.g_spec, self.part)?;
        Ok(a.weighted_sup + a.holder + b.weighted_sup + b.holder)
    }

    /// Iterates the mild map on steps `n0..=n1`; `None` if the iteration does not contract.
    fn solve_slab(
        &self,
        data: &[StepData],
        f0: &SpectralField,
        g0: &SpectralField,
    ) -> Result<Option<(Vec<SpectralField>, Vec<SpectralField>, usize, f64)>> {
        let len = data.len();
        let mut f: Vec<SpectralField> = vec![f0.clone(); len + 1];
        let mut g: Vec<SpectralField> = vec![g0.clone(); len + 1];
        let mut last = f64::INFINITY;
        let mut rising = 0;
        for iter in 1..=self.cfg.max_iter {
            let mut f_new = Vec::with_capacity(len + 1);
            let mut g_new = Vec::with_capacity(len + 1);
            f_new.push(f0.clone());
            g_new.push(g0.clone());
            for (s, sd) in data.iter().enumerate() {
                let (big_f, big_g) = self.sources(sd, &f[s], &g[s], &f_new[s])?;
                let fn1 = self.propagate(&f_new[s], &big_f);
                let gn1 = self.propagate(&g_new[s], &big_g);
                if blown_up(&fn1, self.threshold) || blown_up(&gn1, self.threshold) {
                    return Ok(None);
                }
                f_new.push(fn1);
                g_new.push(gn1);
            }
            let df: Vec<SpectralField> = f_new.iter().zip(&f).map(|(a, b)| a - b).collect();
            let dg: Vec<SpectralField> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let diff = self.d_norm(&df, &dg)?;
            let size = self.d_norm(&f_new, &g_new)?;
            let res = if diff == 0.0 { 0.0 } else { diff / size.max(f64::MIN_POSITIVE) };
            f = f_new;
            g = g_new;
            if res <= self.cfg.tol {
                return Ok(Some((f, g, iter, res)));
            }
            rising = if res > last { rising + 1 } else { 0 };
            if rising >= 3 || !res.is_finite() {
                return Ok(None);
            }
            last = res;
        }
        Ok(None)
    }
}

/// Solves the para-KPZ system for `(f, g)` by Picard iteration on successive time slabs.
pub fn picard_fixed_point(
    e: &Enhancement,
    f0: &SpectralField,
    g0: &SpectralField,
    part: &DyadicPartition,
    cfg: &SolverConfig,
) -> Result<PicardSolution> {
    if e.scheme != cfg.scheme {
        return Err(Error::ConstantsMismatch(format!(
            "{} enhancement with {} solver",
            e.scheme.name(),
            cfg.scheme.name()
        )));
    }
    if e.grid() != cfg.grid || f0.grid() != cfg.grid || g0.grid() != cfg.grid {
        return Err(Error::GridMismatch(cfg.grid.n_modes(), e.grid().n_modes()));
    }
    if (e.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::Config(format!("enhancement dt {} vs solver dt {}", e.dt(), cfg.dt)));
    }
    let n = cfg.n_steps();
    if n > e.n_steps() {
        return Err(Error::StepOutOfRange { step: n, n_steps: e.n_steps() });
    }
    let (alpha, beta, gamma) = cfg.picard.norm;
    if !(1.0 / 3.0 < beta && beta < alpha && alpha < 0.5 && -beta < gamma && gamma <= beta) {
        return Err(Error::InvalidNorm(format!("(α, β, γ) = {:?}", cfg.picard.norm)));
    }
    let f_spec = PathNormSpec::new(NormSpec::holder(beta + 1.0), 0.5 * (beta - gamma), 0.25)?;
    let g_spec = PathNormSpec::new(NormSpec::holder(2.0 * beta + 1.0), beta - gamma, 0.25)?;
    let solver = Picard {
        e,
        part,
        heat: heat_table(cfg.grid, cfg.dt)?,
        eta2: (cfg.scheme == Scheme::Fq).then(|| cfg.mollifier.table_sq(cfg.grid)),
        dt: cfg.dt,
        f_spec,
        g_spec,
        cfg: cfg.picard,
        threshold: cfg.blow_up_threshold,
    };

    let mut f_out = vec![f0.clone()];
    let mut g_out = vec![g0.clone()];
    let mut report = PicardReport::default();
    let min_steps = ((cfg.picard.min_slab / cfg.dt).round() as usize).max(1);
    let mut slab_steps = ((cfg.picard.slab / cfg.dt).round() as usize).max(min_steps);
    let mut n0 = 0;
    while n0 < n {
        let n1 = (n0 + slab_steps).min(n);
        let data: Vec<StepData> =
            crate::par::map_indexed(n1 - n0, |s| solver.step_data(n0 + s)).into_iter().collect::<Result<_>>()?;
        let start_f = f_out.last().expect("nonempty").clone();
        let start_g = g_out.last().expect("nonempty").clone();
        match solver.solve_slab(&data, &start_f, &start_g)? {
            Some((f, g, iterations, residual)) => {
                report.slabs.push(SlabReport {
                    t_start: n0 as f64 * cfg.dt,
                    t_end: n1 as f64 * cfg.dt,
                    iterations,
                    residual,
                });
                f_out.extend(f.into_iter().skip(1));
                g_out.extend(g.into_iter().skip(1));
                n0 = n1;
            }
            None if slab_steps / 2 >= min_steps => {
                slab_steps /= 2;
                report.halvings += 1;
            }
            None => {
                report.blow_up = Some(n0 as f64 * cfg.dt);
                break;
            }
        }
    }
    Ok(PicardSolution {
        f: FieldPath::new(cfg.dt, f_out)?,
        g: FieldPath::new(cfg.dt, g_out)?,
        report,
    })
}

/// `g₀ = h₀ − X^I_0 − X^Y_0 − X^W_0`, the initial value paired with `f₀ = 0`.
pub fn default_g0(e: &Enhancement, h0: &SpectralField) -> SpectralField {
    let mut g = h0.clone();
    g -= e.x_i.at(0);
    g -= e.x_y.at(0);
    g -= e.x_w.at(0);
    g
}

/// `h = X^I + X^Y + X^W + f + g` on the common samples.
pub fn reconstruct_h(e: &Enhancement, f: &FieldPath, g: &FieldPath) -> Result<FieldPath> {
    f.check_aligned(g)?;
    let n = f.n_steps();
    if n > e.n_steps() || e.grid() != f.grid() || (e.dt() - f.dt()).abs() > 1e-12 * f.dt() {
        return Err(Error::Misaligned(format!(
            "enhancement with {} steps of {} vs solution with {} steps of {}",
            e.n_steps(),
            e.dt(),
            n,
            f.dt()
        )));
    }
    FieldPath::sum(&[&e.x_i.truncate(n), &e.x_y.truncate(n), &e.x_w.truncate(n), f, g])
}

// COMPARISON
// ================================================================================================

/// Regularity of the Besov distance in [`compare_paths`].
pub const COMPARE_ALPHA: f64 = 0.4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub times: Vec<f64>,
    /// `‖a_t − b_t‖_∞` on the grid points.
    pub sup: Vec<f64>,
    /// `‖a_t − b_t‖_{𝒞^{0.4}}`.
    pub besov: Vec<f64>,
    /// Spatial mean of `a_t − b_t`.
    pub mean: Vec<f64>,
    /// Least-squares slope of `mean` over `t ∈ [T/4, T]`.
    pub slope: f64,
    pub max_sup: f64,
}

/// Distances between two aligned paths.
pub fn compare_paths(a: &FieldPath, b: &FieldPath, part: &DyadicPartition) -> Result<Comparison> {
    a.check_aligned(b)?;
    let spec = NormSpec::holder(COMPARE_ALPHA);
    let rows = crate::par::map_indexed(a.len(), |n| -> Result<(f64, f64, f64)> {
        let d = a.at(n) - b.at(n);
        Ok((d.sup_norm(), besov_norm(&d, &spec, part)?, d.mean()))
    });
    let mut c = Comparison { times: a.times(), ..Default::default() };
    for r in rows {
        let (s, bv, m) = r?;
        c.sup.push(s);
        c.besov.push(bv);
        c.mean.push(m);
    }
    c.max_sup = c.sup.iter().copied().fold(0.0, f64::max);
    c.slope = window_slope(&c.times, &c.mean, 0.25)?;
    Ok(c)
}

/// Least-squares slope of `y(t)` over `t ≥ frac·T`.
pub fn window_slope(t: &[f64], y: &[f64], frac: f64) -> Result<f64> {
    let t_end = *t.last().ok_or(Error::ShortPath(0))?;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= frac * t_end - 1e-12 * t_end)
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::ShortPath(pts.len()));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sty / stt)
}

/// `sup_{t ≥ frac·T} ‖a_t − b_t − shift(t)‖_∞`.
pub fn shifted_sup_gap(
    a: &FieldPath,
    b: &FieldPath,
    shift: impl Fn(f64) -> f64,
    frac: f64,
) -> Result<f64> {
    a.check_aligned(b)?;
    let t_end = a.horizon();
    let mut gap: f64 = 0.0;
    for n in 0..a.len() {
        let t = a.time(n);
        if t < frac * t_end - 1e-12 * t_end {
            continue;
        }
        let mut d = a.at(n) - b.at(n);
        d.add_constant(-shift(t));
        gap = gap.max(d.sup_norm());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhancement::build_enhancement;
    use crate::renorm::RenormSet;

    fn setup(n: usize, eps: f64) -> (GridSpec, Mollifier) {
        (GridSpec::new(n).unwrap(), Mollifier::bump2(eps).unwrap())
    }

    #[test]
    fn zero_noise_direct_solver() {
        let (g, m) = setup(32, 0.25);
        let p = NoisePath::zero(g, 1e-3, 100).unwrap();
        let cfg = SolverConfig::for_noise(&p, &m, Scheme::Plain, 0.0);
        let s = solve_renormalized(&p, &cfg).unwrap();
        assert!(s.path.fields().iter().all(|f| f.max_coeff() == 0.0));
        for scheme in [Scheme::Plain, Scheme::Fq] {
            let cfg = SolverConfig::for_noise(&p, &m, scheme, 3.0);
            let s = solve_renormalized(&p, &cfg).unwrap();
            for n in 0..=100 {
                let want = -1.5 * n as f64 * 1e-3;
                assert!((s.path.at(n).mean() - want).abs() < 1e-14);
                assert!(s.path.at(n).max_coeff() - s.path.at(n).mean().abs() <= 0.0);
            }
        }
    }

    #[test]
    fn zero_noise_she_is_the_heat_flow() {
        let (g, m) = setup(32, 0.25);
        let p = NoisePath::zero(g, 1e-3, 50).unwrap();
        let h0 = SpectralField::from_positive_modes(g, |k| match k {
            1 => num_complex::Complex64::new(0.3, -0.1),
            3 => num_complex::Complex64::new(0.0, 0.2),
            _ => num_complex::Complex64::new(0.0, 0.0),
        });
        let z0 = exp_field(&h0).unwrap();
        for scheme in [SheScheme::Splitting, SheScheme::ItoEuler] {
            let l = solve_she_with(&p, &m, &h0, 0.05, 1e-3, scheme).unwrap();
            let want = log_field(&z0.heat(0.05).unwrap(), 0).unwrap();
            assert!((l.last() - &want).max_coeff() < 1e-10);
        }
        let zero = SpectralField::zeros(g);
        let l = solve_she_cole_hopf(&p, &m, &zero, 0.05, 1e-3).unwrap();
        assert!(l.fields().iter().all(|f| f.max_coeff() < 1e-15));
    }

    #[test]
    fn ito_euler_detects_lost_positivity() {
        let (g, m) = setup(16, 0.25);
        let p = NoisePath::new(g, 0.5, 20, 3).unwrap();
        let zero = SpectralField::zeros(g);
        let r = solve_she_with(&p, &m, &zero, 10.0, 0.5, SheScheme::ItoEuler);
        assert!(matches!(r, Err(Error::NonPositive { .. })));
    }

    #[test]
    fn direct_solver_reports_blow_up() {
        let (g, m) = setup(16, 0.25);
        let p = NoisePath::zero(g, 1e-4, 100).unwrap();
        let mut cfg = SolverConfig::for_noise(&p, &m, Scheme::Plain, 1e4);
        assert!(solve_renormalized(&p, &cfg).is_err());
        cfg.c = -1e3;
        cfg.blow_up_threshold = 1.04;
        let s = solve_renormalized(&p, &cfg).unwrap();
        let t = s.blow_up.unwrap();
        assert!((t - 0.0021).abs() < 1e-9, "{t}");
        assert_eq!(s.path.len(), 21);
    }

    #[test]
    fn zero_enhancement_fixed_point() {
        let (g, m) = setup(32, 0.25);
        let part = DyadicPartition::new(g).unwrap();
        let c = RenormSet::compute(&m).unwrap();
        let p = NoisePath::zero(g, 1e-3, 40).unwrap();
        let mut e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.0).unwrap();
        let zero = FieldPath::zeros(g, 1e-3, 40).unwrap();
        (e.x_y, e.x_b, e.x_d) = (zero.clone(), zero.clone(), zero);
        let cfg = SolverConfig::for_noise(&p, &m, Scheme::Plain, 0.0);
        let z = SpectralField::zeros(g);
        let s = picard_fixed_point(&e, &z, &z, &part, &cfg).unwrap();
        assert!(s.report.slabs.iter().all(|r| r.iterations == 1));
        assert!(s.f.fields().iter().chain(s.g.fields()).all(|f| f.max_coeff() == 0.0));
    }

    #[test]
    fn zero_enhancement_matches_deterministic_kpz() {
        let (g, m) = setup(32, 0.25);
        let part = DyadicPartition::new(g).unwrap();
        let c = RenormSet::compute(&m).unwrap();
        let p = NoisePath::zero(g, 1e-3, 60).unwrap();
        let mut e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.0).unwrap();
        let zero = FieldPath::zeros(g, 1e-3, 60).unwrap();
        (e.x_y, e.x_b, e.x_d) = (zero.clone(), zero.clone(), zero);
        let g0 = SpectralField::from_positive_modes(g, |k| match k {
            1 => num_complex::Complex64::new(0.2, 0.1),
            2 => num_complex::Complex64::new(-0.05, 0.0),
            _ => num_complex::Complex64::new(0.0, 0.0),
        });
        let mut cfg = SolverConfig::for_noise(&p, &m, Scheme::Plain, 0.0);
        cfg.h0 = g0.clone();
        cfg.picard.slab = 0.02;
        let s = picard_fixed_point(&e, &SpectralField::zeros(g), &g0, &part, &cfg).unwrap();
        assert!(s.f.fields().iter().all(|f| f.max_coeff() == 0.0));
        let direct = solve_renormalized(&p, &cfg).unwrap();
        for n in 0..=60 {
            assert!((s.g.at(n) - direct.path.at(n)).max_coeff() < 1e-8);
        }
        assert!(s.report.slabs.len() >= 3);
    }

    #[test]
    fn comparison_slope_is_exact_for_linear_drift() {
        let g = GridSpec::new(16).unwrap();
        let part = DyadicPartition::new(g).unwrap();
        let a = FieldPath::zeros(g, 0.01, 100).unwrap();
        let fields = (0..=100).map(|n| SpectralField::constant(g, n as f64 * 0.01 / 24.0)).collect();
        let b = FieldPath::new(0.01, fields).unwrap();
        let c = compare_paths(&b, &a, &part).unwrap();
        assert!((c.slope - 1.0 / 24.0).abs() < 1e-12);
        let c = compare_paths(&a, &b, &part).unwrap();
        assert!((c.slope + 1.0 / 24.0).abs() < 1e-12);
        let same = compare_paths(&a, &a, &part).unwrap();
        assert_eq!(same.max_sup, 0.0);
        assert!(same.besov.iter().all(|x| *x == 0.0));
        assert_eq!(shifted_sup_gap(&b, &a, |t| t / 24.0, 0.25).unwrap() < 1e-15, true);
    }

    #[test]
    fn reconstruction_sums_components() {
        let (g, m) = setup(32, 0.25);
        let c = RenormSet::compute(&m).unwrap();
        let p = NoisePath::new(g, 1e-3, 10, 8).unwrap();
        let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.0).unwrap();
        let zero = FieldPath::zeros(g, 1e-3, 10).unwrap();
        let h = reconstruct_h(&e, &zero, &zero).unwrap();
        for n in 0..=10 {
            let want = &(e.x_i.at(n) + e.x_y.at(n)) + e.x_w.at(n);
            assert_eq!(h.at(n), &want);
        }
        assert!(reconstruct_h(&e, &zero, &zero.truncate(5)).is_err());
    }
}
