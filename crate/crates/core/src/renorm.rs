//! Renormalization constants as exact finite sums over the mollifier support.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::quad;
use crate::spectral::{Mollifier, Profile};

const TWO_PI2: f64 = 2.0 * PI * PI;

/// Plain mollification or the variant that also smooths the nonlinearity with `η₂^ε`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Plain,
    Fq,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Plain => "plain",
            Scheme::Fq => "fq",
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

fn profile_l2(m: &Mollifier) -> Result<f64> {
    static BUMP2: OnceLock<f64> = OnceLock::new();
    let compute = || {
        let r = m.support_radius();
        quad::integrate(|x| m.phi(x).powi(2), -r, r, 1e-15, 1e-14).map(|i| i.value)
    };
    match m.profile() {
        Profile::Bump2 => {
            if let Some(v) = BUMP2.get() {
                return Ok(*v);
            }
            let v = compute()?;
            Ok(*BUMP2.get_or_init(|| v))
        }
        _ => compute(),
    }
}

/// `c^V = ε^{-1} ∫ φ²`.
pub fn c_v(m: &Mollifier) -> Result<f64> {
    Ok(profile_l2(m)? / m.eps())
}

fn require_even(m: &Mollifier) -> Result<()> {
    if !m.is_even() {
        return Err(Error::InvalidMollifier(format!("{} is not even", m.name())));
    }
    Ok(())
}

/// `c^C`, zero for every even profile.
pub fn c_c(m: &Mollifier) -> Result<f64> {
    require_even(m)?;
    Ok(0.0)
}

/// `|Σ_k φ(εk)^{2p} ∫_ℝ q|q|² dσ|` with `q = 2πik/(2π²k² − 2πiσ)`; `p = 2` for the tilde
/// constant.
pub fn c_c_verification(m: &Mollifier, tilde: bool) -> Result<f64> {
    require_even(m)?;
    let kk = m.k_support();
    let mut re = KahanSum::default();
    let mut im = KahanSum::default();
    for k in -kk..=kk {
        let phi = m.at(k);
        if k == 0 || phi == 0.0 {
            continue;
        }
        let w = if tilde { phi.powi(4) } else { phi.powi(2) };
        let kf = k as f64;
        let q = |s: f64| {
            let q = Complex64::new(0.0, 2.0 * PI * kf) / Complex64::new(TWO_PI2 * kf * kf, -2.0 * PI * s);
            q * q.norm_sqr()
        };
        let scale = PI * kf * kf;
        let a = quad::integrate_real_line(|s| q(s).re, scale, 1e-16, 1e-13)?;
        let b = quad::integrate_real_line(|s| q(s).im, scale, 1e-16, 1e-13)?;
        re.add(w * a.value);
        im.add(w * b.value);
    }
    Ok(Complex64::new(re.value(), im.value()).norm())
}

/// Compensated double sum over `k₁, k₂, k₁+k₂ ≠ 0` within the support box, summed row by row
/// in a fixed order.
fn triple_nonzero_sum<F>(m: &Mollifier, f: F) -> f64
where
    F: Fn(f64, f64, f64, f64, f64, f64) -> f64 + Sync + Send,
{
    let kk = m.k_support();
    let rows = par::map_indexed((2 * kk + 1) as usize, |r| {
        let k1 = r as i64 - kk;
        let p1 = m.at(k1);
        if k1 == 0 || p1 == 0.0 {
            return 0.0;
        }
        let mut s = KahanSum::default();
        for k2 in -kk..=kk {
            let k12 = k1 + k2;
            let p2 = m.at(k2);
            if k2 == 0 || k12 == 0 || p2 == 0.0 {
                continue;
            }
            s.add(f(k1 as f64, k2 as f64, k12 as f64, p1, p2, m.at(k12)));
        }
        s.value()
    });
    rows.into_iter().collect::<KahanSum>().value()
}

/// `c^B` (or `c̃^B` with the extra weight `φ(εk₁₂)⁴`).
pub fn c_b(m: &Mollifier, tilde: bool) -> f64 {
    triple_nonzero_sum(m, |k1, k2, k12, p1, p2, p12| {
        let w = (p1 * p2).powi(2) * if tilde { p12.powi(4) } else { 1.0 };
        w / (TWO_PI2 * (k1 * k1 + k2 * k2 + k12 * k12))
    })
}

/// `c^D` (or `c̃^D` with weights `φ₁⁴φ₂²φ₁₂²`).
pub fn c_d(m: &Mollifier, tilde: bool) -> f64 {
    -triple_nonzero_sum(m, |k1, k2, k12, p1, p2, p12| {
        let w = if tilde {
            p1.powi(4) * p2.powi(2) * p12.powi(2)
        } else {
            (p1 * p2).powi(2)
        };
        k12 * w / (TWO_PI2 * k1 * (k1 * k1 + k2 * k2 + k12 * k12))
    })
}

/// `c̃^D` after the change of variables `(k₁, k₂) → (k₁₂, −k₂)`.
pub fn c_d_tilde_reindexed(m: &Mollifier) -> f64 {
    -triple_nonzero_sum(m, |k1, k2, k12, p1, p2, p12| {
        k1 * p12.powi(4) * p1.powi(2) * p2.powi(2)
            / (TWO_PI2 * k12 * (k12 * k12 + k1 * k1 + k2 * k2))
    })
}

/// `I₁ = −Σ_{k₁,k₂≠0} φ₁²φ₂²/(2π²k₁k₂)`, zero for even profiles.
pub fn i1_sum(m: &Mollifier) -> f64 {
    let kk = m.k_support();
    let mut s = KahanSum::default();
    for k1 in -kk..=kk {
        for k2 in -kk..=kk {
            if k1 != 0 && k2 != 0 {
                s.add(-(m.at(k1) * m.at(k2)).powi(2) / (TWO_PI2 * (k1 * k2) as f64));
            }
        }
    }
    s.value()
}

/// `−½ Σ_{k≠0} φ(εk)⁴/(2π²k²)`, the value of `c^B + 2c^D`.
pub fn combo_single_sum(m: &Mollifier) -> f64 {
    let kk = m.k_support();
    let s: KahanSum = (1..=kk)
        .map(|k| -m.at(k).powi(4) / (TWO_PI2 * (k * k) as f64))
        .collect();
    s.value()
}

/// `Σ_{k∈ℤ} φ(εk)²`, the pointwise variance rate of the mollified noise on the torus.
pub fn v_torus(m: &Mollifier) -> f64 {
    let kk = m.k_support();
    let s: KahanSum = (-kk..=kk).map(|k| m.at(k).powi(2)).collect();
    s.value()
}

/// `Σ_{k≠0} φ(εk)² − c^V`, close to `−1`.
pub fn dy_drift(m: &Mollifier) -> Result<f64> {
    Ok(v_torus(m) - 1.0 - c_v(m)?)
}

/// `∫ h_{t−u}(k₁) h_{s−u}(k₂) du` in closed form, `h_t(k) = 2πik e^{−2π²k²t} 1_{t>0}`.
pub fn heat_conv_closed_form(k1: f64, k2: f64, t: f64, s: f64) -> Result<f64> {
    if k1 == 0.0 || k2 == 0.0 {
        return Err(Error::ZeroWavenumber);
    }
    let pre = -2.0 * k1 * k2 / (k1 * k1 + k2 * k2);
    let f = if t > s {
        (-TWO_PI2 * k1 * k1 * (t - s)).exp()
    } else if s > t {
        (-TWO_PI2 * k2 * k2 * (s - t)).exp()
    } else {
        1.0
    };
    Ok(pre * f)
}

/// The same integral by adaptive quadrature.
pub fn heat_conv_quadrature(k1: f64, k2: f64, t: f64, s: f64) -> Result<f64> {
    if k1 == 0.0 || k2 == 0.0 {
        return Err(Error::ZeroWavenumber);
    }
    let m = t.min(s);
    let (a, b) = (TWO_PI2 * k1 * k1, TWO_PI2 * k2 * k2);
    let f = |v: f64| -4.0 * PI * PI * k1 * k2 * (-a * (t - m + v) - b * (s - m + v)).exp();
    let scale = 1.0 / (a + b);
    Ok(quad::integrate_half_line(f, scale, 1e-14, 1e-13)?.value)
}

// RENORM SET
// ================================================================================================

/// All constants for one mollifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormSet {
    pub profile: String,
    pub eps: f64,
    pub c_v: f64,
    pub c_c: f64,
    pub c_b: f64,
    pub c_d: f64,
    pub ct_c: f64,
    pub ct_b: f64,
    pub ct_d: f64,
    pub v_torus: f64,
    pub combo: f64,
    pub combo_tilde: f64,
    pub dy_drift: f64,
}

impl RenormSet {
    pub fn compute(m: &Mollifier) -> Result<Self> {
        let c_v = c_v(m)?;
        let (b, d) = (c_b(m, false), c_d(m, false));
        let (tb, td) = (c_b(m, true), c_d(m, true));
        let v = v_torus(m);
        Ok(Self {
            profile: m.name(),
            eps: m.eps(),
            c_v,
            c_c: c_c(m)?,
            c_b: b,
            c_d: d,
            ct_c: c_c(m)?,
            ct_b: tb,
            ct_d: td,
            v_torus: v,
            combo: b + 2.0 * d,
            combo_tilde: tb + 2.0 * td,
            dy_drift: v - 1.0 - c_v,
        })
    }

    /// `(c^B, c^D)` for the given scheme.
    pub fn resonant_pair(&self, scheme: Scheme) -> (f64, f64) {
        match scheme {
            Scheme::Plain => (self.c_b, self.c_d),
            Scheme::Fq => (self.ct_b, self.ct_d),
        }
    }

    /// `c^V − 1/12` (plain) or `c^V` (fq): the constants for which both schemes converge.
    pub fn paper_constant(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::Plain => self.c_v - 1.0 / 12.0,
            Scheme::Fq => self.c_v,
        }
    }

    /// `Σ_k φ(εk)²`, for which the direct solver is the logarithm of the Itô heat equation.
    pub fn ito_constant(&self) -> f64 {
        self.v_torus
    }

    /// `c^V + c^B + 2c^D` with the scheme's pair: the constant the driving-term
    /// decomposition reconstructs.
    pub fn paracontrolled_constant(&self, scheme: Scheme) -> f64 {
        let (b, d) = self.resonant_pair(scheme);
        self.c_v + b + 2.0 * d
    }

    pub fn matches(&self, m: &Mollifier) -> bool {
        self.profile == m.name() && self.eps == m.eps()
    }
}

/// Outcome of the identity checks for one ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboReport {
    pub eps: f64,
    pub combo_tilde_abs: f64,
    pub combo_identity_gap: f64,
    pub c_c_residual: f64,
    pub ct_c_residual: f64,
    pub i1: f64,
    pub limit_gap: f64,
}

/// Identity tolerance for the constant sums.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Tolerance for the antisymmetric sum `I₁`.
pub const I1_TOL: f64 = 1e-12;

/// Checks `c̃^B + 2c̃^D = 0`, `c^B + 2c^D = −½Σφ⁴/(2π²k²)`, `c^C = 0` and `I₁ = 0`.
pub fn combo_checks(set: &RenormSet, m: &Mollifier) -> Result<ComboReport> {
    if !set.matches(m) {
        return Err(Error::ConstantsMismatch(format!(
            "set for {} at eps={} used with {} at eps={}",
            set.profile,
            set.eps,
            m.name(),
            m.eps()
        )));
    }
    let report = ComboReport {
        eps: set.eps,
        combo_tilde_abs: set.combo_tilde.abs(),
        combo_identity_gap: (set.combo - combo_single_sum(m)).abs(),
        c_c_residual: c_c_verification(m, false)?,
        ct_c_residual: c_c_verification(m, true)?,
        i1: i1_sum(m),
        limit_gap: (set.combo + 1.0 / 12.0).abs(),
    };
    let checks = [
        ("combo_tilde", report.combo_tilde_abs),
        ("combo identity", report.combo_identity_gap),
        ("c_C", report.c_c_residual.max(set.c_c.abs())),
        ("ct_C", report.ct_c_residual.max(set.ct_c.abs())),
    ];
    for (name, v) in checks {
        if !(v <= IDENTITY_TOL) {
            return Err(Error::Identity(format!("{name} = {v:e} at eps = {}", set.eps)));
        }
    }
    if !(report.i1.abs() <= I1_TOL) {
        return Err(Error::Identity(format!("I1 = {:e} at eps = {}", report.i1, set.eps)));
    }
    Ok(report)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(eps: f64) -> Mollifier {
        Mollifier::bump2(eps).unwrap()
    }

    fn brute_b(eps: f64, tilde: bool) -> f64 {
        let phi = |k: i64| {
            let x = eps * k as f64 / 2.0;
            if x.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        };
        let mut s = 0.0;
        for k1 in -3i64..=3 {
            for k2 in -3i64..=3 {
                let k12 = k1 + k2;
                if k1 == 0 || k2 == 0 || k12 == 0 {
                    continue;
                }
                let w = (phi(k1) * phi(k2)).powi(2) * if tilde { phi(k12).powi(4) } else { 1.0 };
                s += w / (2.0 * PI * PI * ((k1 * k1 + k2 * k2 + k12 * k12) as f64));
            }
        }
        s
    }

    #[test]
    fn c_v_scaling_and_value() {
        let l2 = quad::integrate(
            |x: f64| {
                let y = x / 2.0;
                if y.abs() < 1.0 {
                    (2.0 - 2.0 / (1.0 - y * y)).exp()
                } else {
                    0.0
                }
            },
            -2.0,
            2.0,
            1e-15,
            1e-14,
        )
        .unwrap()
        .value;
        let cv = c_v(&bump(0.1)).unwrap();
        assert!((cv - 10.0 * l2).abs() < 1e-10);
        assert_eq!(c_v(&bump(0.05)).unwrap(), 2.0 * c_v(&bump(0.1)).unwrap());
    }

    #[test]
    fn c_b_matches_brute_force_at_half() {
        let m = bump(0.5);
        assert!((c_b(&m, false) - brute_b(0.5, false)).abs() < 1e-14);
        assert!((c_b(&m, true) - brute_b(0.5, true)).abs() < 1e-14);
    }

    #[test]
    fn c_b_diverges() {
        let v: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&e| c_b(&bump(e), false)).collect();
        assert!(v[2] > v[1] && v[1] > v[0]);
    }

    #[test]
    fn c_d_brute_force_and_reindexing() {
        let m = bump(0.5);
        let mut s = 0.0;
        for k1 in -3i64..=3 {
            for k2 in -3i64..=3 {
                let k12 = k1 + k2;
                if k1 == 0 || k2 == 0 || k12 == 0 {
                    continue;
                }
                let w = (m.at(k1) * m.at(k2)).powi(2);
                let d = (k1 * k1 + k2 * k2 + k12 * k12) as f64;
                s -= k12 as f64 * w / (2.0 * PI * PI * k1 as f64 * d);
            }
        }
        assert!((c_d(&m, false) - s).abs() < 1e-14);
        for eps in [0.5, 0.2, 0.1] {
            let m = bump(eps);
            assert!((c_d(&m, true) - c_d_tilde_reindexed(&m)).abs() < 1e-12);
        }
    }

    #[test]
    fn identities() {
        for eps in [0.5, 0.2, 0.1] {
            let m = bump(eps);
            let set = RenormSet::compute(&m).unwrap();
            let r = combo_checks(&set, &m).unwrap();
            assert!(r.combo_tilde_abs <= 1e-10);
            assert!(r.combo_identity_gap <= 1e-10);
            assert!(r.i1.abs() <= 1e-12);
            assert!((set.dy_drift - (v_torus(&m) - 1.0 - set.c_v)).abs() == 0.0);
        }
        let m = bump(0.2);
        assert!(combo_checks(&RenormSet::compute(&bump(0.1)).unwrap(), &m).is_err());
    }

    #[test]
    fn dy_drift_brute_force() {
        let m = bump(0.5);
        let s: f64 = (1..=3).map(|k| 2.0 * m.at(k).powi(2)).sum();
        assert!((dy_drift(&m).unwrap() - (s - c_v(&m).unwrap())).abs() < 1e-14);
    }

    #[test]
    fn odd_profile_rejected() {
        fn shifted(x: f64) -> f64 {
            (1.0 + 0.1 * x) * (1.0 - x * x)
        }
        let p = Profile::Custom { name: "shifted".into(), radius: 1.0, f: shifted };
        let m = Mollifier::new_allow_odd(p, 0.1).unwrap();
        assert!(c_c(&m).is_err());
        assert!(c_c_verification(&m, false).is_err());
    }

    #[test]
    fn heat_convolution_lemma() {
        assert_eq!(heat_conv_closed_form(1.0, 1.0, 0.2, 0.2).unwrap(), -1.0);
        assert!((heat_conv_closed_form(1.0, 2.0, 0.3, 0.3).unwrap() + 0.8).abs() < 1e-15);
        assert!(heat_conv_closed_form(0.0, 2.0, 0.3, 0.1).is_err());
        let a = heat_conv_closed_form(1.0, 2.0, 0.3, 0.1).unwrap();
        let b = heat_conv_quadrature(1.0, 2.0, 0.3, 0.1).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let m = bump(0.05);
        assert_eq!(c_b(&m, false).to_bits(), c_b(&m, false).to_bits());
        assert_eq!(c_d(&m, true).to_bits(), c_d(&m, true).to_bits());
    }
}
