//! Small-scale invariant checks for every module, runnable from the command line.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{
    besov_norm, block, commutator_r, paraproduct_gt, paraproduct_lt, path_norm, resonant,
    DyadicPartition, NormSpec, PathNormSpec,
};
use crate::enhancement::{build_enhancement, mild_residual};
use crate::error::{Error, Result};
use crate::experiment::{self, ConstantsConfig, ConstantsRow, RunConfig, SolveConfig, SolveScheme};
use crate::noise::{NoisePath, StationaryLinearState};
use crate::path::{read_path, write_path, FieldPath};
use crate::renorm::{
    c_b, c_d, c_d_tilde_reindexed, combo_checks, heat_conv_closed_form, heat_conv_quadrature,
    RenormSet, Scheme,
};
use crate::solvers::{
    default_g0, picard_fixed_point, reconstruct_h, solve_renormalized, solve_she_cole_hopf,
    window_slope, SolverConfig,
};
use crate::spectral::{GridSpec, Mollifier, Profile, SpectralField};

#[derive(Clone, Debug, Default)]
pub struct SelftestOptions {
    /// Damages one entry of the partition tables before the partition checks run.
    pub corrupt_partition: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(&SelftestOptions) -> Result<String>;

fn ensure(ok: bool, detail: String) -> Result<String> {
    if ok {
        Ok(detail)
    } else {
        Err(Error::Config(detail))
    }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n).expect("valid grid")
}

/// A Gaussian field with unit-order coefficients.
fn random_field(g: GridSpec, seed: u64) -> Result<SpectralField> {
    NoisePath::new(g, 1.0, 1, seed)?.increment(0)
}

fn partition(n: usize, opts: &SelftestOptions) -> Result<DyadicPartition> {
    let mut p = DyadicPartition::new(grid(n))?;
    if opts.corrupt_partition {
        p.corrupt(1, 3, 0.5);
    }
    Ok(p)
}

// SPECTRAL
// ================================================================================================

fn grid_validation(_: &SelftestOptions) -> Result<String> {
    let bad = [0, 4, 12, 100].iter().all(|&n| GridSpec::new(n).is_err());
    ensure(bad && GridSpec::new(8).is_ok(), "N must be a power of two >= 8".into())
}

fn spectral_round_trip(_: &SelftestOptions) -> Result<String> {
    let g = grid(64);
    let f = random_field(g, 1)?;
    let back = SpectralField::from_real(g, &f.to_real())?;
    let err = (&back - &f).max_coeff();
    ensure(err <= 1e-12, format!("round trip error {err:e}"))
}

fn parseval(_: &SelftestOptions) -> Result<String> {
    let g = grid(64);
    let f = random_field(g, 2)?;
    let real = f.to_real();
    let l2 = real.iter().map(|x| x * x).sum::<f64>() / real.len() as f64;
    let err = (l2 - f.mean_square()).abs() / l2;
    ensure(err <= 1e-12, format!("relative defect {err:e}"))
}

fn derivative_of_sine(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let x = g.points();
    let s: Vec<f64> = x.iter().map(|x| (2.0 * PI * 3.0 * x).sin()).collect();
    let d = SpectralField::from_real(g, &s)?.derivative().to_real();
    let err = x
        .iter()
        .zip(&d)
        .map(|(x, d)| (d - 6.0 * PI * (6.0 * PI * x).cos()).abs())
        .fold(0.0, f64::max);
    ensure(err <= 1e-11, format!("max error {err:e}"))
}

fn dealiased_product(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let (a, b) = (random_field(g, 3)?, random_field(g, 4)?);
    let p = a.product(&b)?;
    let k_max = g.k_max();
    let mut err: f64 = 0.0;
    for k in -k_max..=k_max {
        let mut want = Complex64::new(0.0, 0.0);
        for l in -k_max..=k_max {
            if (k - l).abs() <= k_max {
                want += a.coeff(l) * b.coeff(k - l);
            }
        }
        err = err.max((p.coeff(k) - want).norm());
    }
    ensure(err <= 1e-12, format!("max coefficient error {err:e}"))
}

fn heat_semigroup(_: &SelftestOptions) -> Result<String> {
    let g = grid(16);
    let f = SpectralField::from_positive_modes(g, |k| Complex64::new((k == 1) as u8 as f64, 0.0));
    let got = f.heat(0.1)?.coeff(1).re;
    let want = (-2.0 * PI * PI * 0.1).exp();
    let semigroup = (&f.heat(0.03)?.heat(0.07)? - &f.heat(0.1)?).max_coeff();
    ensure((got - want).abs() <= 1e-12 && semigroup <= 1e-15, format!("P_0.1 e_1 = {got}"))
}

fn mollifier_profile(_: &SelftestOptions) -> Result<String> {
    let m = Mollifier::bump2(0.1)?;
    let ok = m.phi(0.0) == 1.0 && m.phi(2.0) == 0.0 && m.phi(-2.5) == 0.0 && m.phi(1.0) > 0.0;
    let grid_rule = m.check_grid(grid(64)).is_ok() && Mollifier::bump2(0.01)?.check_grid(grid(64)).is_err();
    ensure(ok && grid_rule, "bump2 values and grid compatibility".into())
}

// DYADIC
// ================================================================================================

fn partition_of_unity(opts: &SelftestOptions) -> Result<String> {
    let mut worst: f64 = 0.0;
    for n in [16, 64, 128] {
        worst = worst.max(partition(n, opts)?.unity_defect());
    }
    ensure(worst <= 1e-12, format!("max |Σρ_j − 1| = {worst:e}"))
}

fn partition_overlap(opts: &SelftestOptions) -> Result<String> {
    let d = partition(128, opts)?.overlap_defect();
    ensure(d == 0.0, format!("max |ρ_iρ_j| for |i−j|≥2 = {d:e}"))
}

fn blocks_sum_to_field(opts: &SelftestOptions) -> Result<String> {
    let p = partition(64, opts)?;
    let f = random_field(p.grid(), 5)?;
    let mut sum = SpectralField::zeros(p.grid());
    for j in p.indices() {
        sum += &block(&f, j, &p)?;
    }
    let err = (&sum - &f).max_coeff();
    ensure(err <= 1e-12, format!("Σ Δ_j f − f = {err:e}"))
}

fn bony_identity(opts: &SelftestOptions) -> Result<String> {
    let p = partition(128, opts)?;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (u, v) = (random_field(p.grid(), 10 + seed)?, random_field(p.grid(), 30 + seed)?);
        let sum = &(&paraproduct_lt(&u, &v, &p)? + &paraproduct_gt(&u, &v, &p)?) + &resonant(&u, &v, &p)?;
        let prod = u.product(&v)?;
        worst = worst.max((&sum - &prod).max_coeff() / prod.max_coeff());
    }
    ensure(worst <= 1e-12, format!("relative defect {worst:e}"))
}

fn commutator_definition(opts: &SelftestOptions) -> Result<String> {
    let p = partition(64, opts)?;
    let g = p.grid();
    let (u, v, w) = (random_field(g, 50)?, random_field(g, 51)?, random_field(g, 52)?);
    let r = commutator_r(&u, &v, &w, &p)?;
    let lt = paraproduct_lt(&u, &v, &p)?;
    let want = &resonant(&lt, &w, &p)? - &u.product(&resonant(&v, &w, &p)?)?;
    let err = (&r - &want).max_coeff();
    ensure(err <= 1e-10, format!("max defect {err:e}"))
}

fn besov_single_mode(opts: &SelftestOptions) -> Result<String> {
    let p = partition(64, opts)?;
    let k0 = 5;
    let u = SpectralField::from_positive_modes(p.grid(), |k| Complex64::new((k == k0) as u8 as f64, 0.0));
    let got = besov_norm(&u, &NormSpec::holder(0.0), &p)?;
    let want = p.indices().map(|j| 2.0 * p.weight(j, k0)).fold(0.0, f64::max);
    ensure((got - want).abs() <= 1e-12, format!("‖e_5‖ = {got}, expected {want}"))
}

fn path_norm_of_constant_path(opts: &SelftestOptions) -> Result<String> {
    let p = partition(32, opts)?;
    let v = random_field(p.grid(), 6)?;
    let times = [0.0, 0.1, 0.2, 0.3];
    let fields = [&v, &v, &v, &v];
    let spec = PathNormSpec::new(NormSpec::holder(0.2), 0.0, 0.5)?;
    let h = path_norm(&times, &fields, &spec, &p)?.holder;
    ensure(h == 0.0, format!("Hölder seminorm {h}"))
}

// NOISE
// ================================================================================================

fn noise_determinism(_: &SelftestOptions) -> Result<String> {
    let a = NoisePath::new(grid(32), 1e-3, 10, 9)?;
    let b = NoisePath::new(grid(32), 1e-3, 10, 9)?;
    let same = (0..10).all(|n| a.increment(n).ok() == b.increment(n).ok());
    let differs = a.increment(0)? != a.for_member(1).increment(0)?;
    let real = a.increment(3)?.symmetry_defect() == 0.0;
    ensure(same && differs && real, "seeded increments are reproducible and real".into())
}

fn noise_coarsening(_: &SelftestOptions) -> Result<String> {
    let fine = NoisePath::new(grid(32), 1e-3, 8, 3)?;
    let coarse = fine.coarsen(2)?;
    let sum = &fine.increment(4)? + &fine.increment(5)?;
    let err = (&coarse.increment(2)? - &sum).max_coeff();
    ensure(err <= 1e-16, format!("coarse increment defect {err:e}"))
}

fn noise_variance(_: &SelftestOptions) -> Result<String> {
    let dt = 0.01;
    let n = 4000;
    let p = NoisePath::new(grid(8), dt, n, 11)?;
    let mut s = 0.0;
    for i in 0..n {
        s += p.increment(i)?.coeff(1).norm_sqr();
    }
    let ratio = s / n as f64 / dt;
    ensure((ratio - 1.0).abs() < 0.1, format!("E|ΔW_1|²/dt = {ratio:.4}"))
}

fn ou_gain(_: &SelftestOptions) -> Result<String> {
    let g = grid(16);
    let m = Mollifier::bump2(0.25)?;
    let p = NoisePath::new(g, 1e-3, 1, 5)?;
    let mut s = StationaryLinearState::stationary(&p, &m);
    let before = s.field().clone();
    s.step(&SpectralField::zeros(g))?;
    let err = (1..=g.k_max())
        .map(|k| {
            let want = before.coeff(k) * (-2.0 * PI * PI * (k * k) as f64 * 1e-3).exp();
            (s.field().coeff(k) - want).norm()
        })
        .fold(0.0, f64::max);
    ensure(err <= 1e-15, format!("noise-free OU step defect {err:e}"))
}

// RENORMALIZATION
// ================================================================================================

fn identities(_: &SelftestOptions) -> Result<String> {
    let mut detail = String::new();
    for eps in [0.2, 0.1] {
        let m = Mollifier::bump2(eps)?;
        let r = combo_checks(&RenormSet::compute(&m)?, &m)?;
        detail += &format!("eps={eps}: |c̃B+2c̃D|={:.1e} ", r.combo_tilde_abs);
    }
    Ok(detail)
}

fn combo_limit(_: &SelftestOptions) -> Result<String> {
    let gaps: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&e| Ok((RenormSet::compute(&Mollifier::bump2(e)?)?.combo + 1.0 / 12.0).abs()))
        .collect::<Result<_>>()?;
    ensure(gaps.windows(2).all(|w| w[1] < w[0]), format!("|c_B + 2c_D + 1/12| = {gaps:?}"))
}

fn c_d_reindexing(_: &SelftestOptions) -> Result<String> {
    let m = Mollifier::bump2(0.25)?;
    let (a, b) = (c_d(&m, true), c_d_tilde_reindexed(&m));
    ensure((a - b).abs() <= 1e-10 * a.abs().max(1.0), format!("c̃_D = {a}, reindexed {b}"))
}

fn c_b_brute_force(_: &SelftestOptions) -> Result<String> {
    let m = Mollifier::bump2(0.5)?;
    let k = m.k_support();
    let mut want = 0.0;
    for k1 in -k..=k {
        for k2 in -k..=k {
            let k12 = k1 + k2;
            if k1 == 0 || k2 == 0 || k12 == 0 {
                continue;
            }
            let w = (m.at(k1) * m.at(k2)).powi(2);
            want += w / (2.0 * PI * PI * (k1 * k1 + k2 * k2 + k12 * k12) as f64);
        }
    }
    let got = c_b(&m, false);
    ensure((got - want).abs() <= 1e-14, format!("c_B = {got}, direct sum {want}"))
}

fn dy_drift(_: &SelftestOptions) -> Result<String> {
    let d = RenormSet::compute(&Mollifier::bump2(0.05)?)?.dy_drift;
    ensure((d + 1.0).abs() <= 0.05, format!("dY_drift + 1 = {:.3e}", d + 1.0))
}

fn heat_lemma(_: &SelftestOptions) -> Result<String> {
    let battery = [(1.0, 2.0, 0.3, 0.2), (3.0, -1.0, 0.1, 0.1), (2.0, 2.0, 0.05, 0.2)];
    let mut worst: f64 = 0.0;
    for (k1, k2, t, s) in battery {
        worst = worst.max((heat_conv_closed_form(k1, k2, t, s)? - heat_conv_quadrature(k1, k2, t, s)?).abs());
    }
    ensure(worst <= 1e-8, format!("max defect {worst:e}"))
}

// ENHANCEMENT AND SOLVERS
// ================================================================================================

fn enhancement_residual(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let m = Mollifier::bump2(0.25)?;
    let c = RenormSet::compute(&m)?;
    let p = NoisePath::new(g, 1e-3, 20, 2)?;
    let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.01)?;
    let r = mild_residual(&e)?;
    ensure(r <= 1e-12, format!("mild residual {r:e}"))
}

fn flat_profile_coincidence(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let m = Mollifier::new(Profile::Flat { radius: 1.0 }, 1.0 / 16.0)?;
    let mut c = RenormSet::compute(&m)?;
    (c.ct_b, c.ct_d) = (c.c_b, c.c_d);
    let p = NoisePath::new(g, 1e-3, 10, 3)?;
    let a = build_enhancement(&p, &m, &c, Scheme::Plain, 0.0)?;
    let b = build_enhancement(&p, &m, &c, Scheme::Fq, 0.0)?;
    let same = a.components().iter().zip(b.components()).all(|(x, y)| x.1 == y.1);
    ensure(same, "plain and fq driving terms coincide when φ ≡ 1".into())
}

fn zero_noise_drift(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let m = Mollifier::bump2(0.25)?;
    let p = NoisePath::zero(g, 1e-3, 50)?;
    let s = solve_renormalized(&p, &SolverConfig::for_noise(&p, &m, Scheme::Fq, 2.0))?;
    let err = (s.path.last().mean() + 0.05).abs();
    ensure(err <= 1e-14, format!("mean defect {err:e}"))
}

fn she_heat_flow(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let m = Mollifier::bump2(0.25)?;
    let p = NoisePath::zero(g, 1e-3, 20)?;
    let l = solve_she_cole_hopf(&p, &m, &SpectralField::zeros(g), 0.02, 1e-3)?;
    let worst = l.fields().iter().map(|f| f.max_coeff()).fold(0.0, f64::max);
    ensure(worst <= 1e-15, format!("log Z drift {worst:e}"))
}

fn picard_reconstruction(_: &SelftestOptions) -> Result<String> {
    let g = grid(32);
    let part = DyadicPartition::new(g)?;
    let m = Mollifier::bump2(0.25)?;
    let c = RenormSet::compute(&m)?;
    let p = NoisePath::new(g, 1e-3, 20, 6)?;
    let e = build_enhancement(&p, &m, &c, Scheme::Plain, 0.01)?;
    let cfg = SolverConfig::for_noise(&p, &m, Scheme::Plain, c.paracontrolled_constant(Scheme::Plain));
    let z = SpectralField::zeros(g);
    let s = picard_fixed_point(&e, &z, &default_g0(&e, &z), &part, &cfg)?;
    let h = reconstruct_h(&e, &s.f, &s.g)?;
    let d = solve_renormalized(&p, &cfg)?.path;
    let gap = h.fields().iter().zip(d.fields()).map(|(a, b)| (a - b).sup_norm()).fold(0.0, f64::max);
    let start = h.at(0).max_coeff();
    ensure(start <= 1e-12 && gap <= 0.1 && s.report.blow_up.is_none(), format!("sup gap {gap:.3e}"))
}

fn slope_fit(_: &SelftestOptions) -> Result<String> {
    let t: Vec<f64> = (0..=40).map(|n| n as f64 * 0.0125).collect();
    let y: Vec<f64> = t.iter().map(|t| 0.3 + t / 24.0).collect();
    let s = window_slope(&t, &y, 0.25)?;
    ensure((s - 1.0 / 24.0).abs() <= 1e-12, format!("slope {s}"))
}

// PERSISTENCE
// ================================================================================================

fn path_file_round_trip(_: &SelftestOptions) -> Result<String> {
    let g = grid(16);
    let fields = (0..4).map(|s| random_field(g, 70 + s)).collect::<Result<Vec<_>>>()?;
    let p = FieldPath::new(0.01, fields)?;
    let mut buf = Vec::new();
    write_path(&mut buf, &p)?;
    ensure(read_path(&buf[..])? == p, "path file round trip is bit exact".into())
}

fn constants_csv(_: &SelftestOptions) -> Result<String> {
    let s = experiment::cmd_constants(&ConstantsConfig { eps: vec![0.1], profile: "bump2".into() })?;
    let rows = experiment::constants_rows(&s);
    let mut buf = Vec::new();
    experiment::write_csv(&mut buf, &rows)?;
    let back: Vec<ConstantsRow> = experiment::read_csv(&buf[..])?;
    let cols = String::from_utf8_lossy(&buf).lines().nth(1).map(|l| l.split(',').count());
    ensure(back == rows && cols == Some(10), "one row, ten columns, exact round trip".into())
}

fn run_replay(_: &SelftestOptions) -> Result<String> {
    let root = std::env::temp_dir().join(format!("kpzlab-selftest-{}", std::process::id()));
    let cfg = RunConfig::Solve(SolveConfig::new(SolveScheme::Fq, 0.25, 32, 1e-3, 0.02));
    let first = root.join("a");
    experiment::run(&cfg, &first, vec![])?;
    let bad = experiment::replay(&first, root.join("b"))?;
    let _ = std::fs::remove_dir_all(&root);
    ensure(bad.is_empty(), format!("files differing on replay: {bad:?}"))
}

const CHECKS: &[(&str, Check)] = &[
    ("spectral.grid_validation", grid_validation),
    ("spectral.round_trip", spectral_round_trip),
    ("spectral.parseval", parseval),
    ("spectral.derivative", derivative_of_sine),
    ("spectral.dealiased_product", dealiased_product),
    ("spectral.heat_semigroup", heat_semigroup),
    ("spectral.mollifier", mollifier_profile),
    ("dyadic.partition_of_unity", partition_of_unity),
    ("dyadic.partition_overlap", partition_overlap),
    ("dyadic.block_sum", blocks_sum_to_field),
    ("dyadic.bony_identity", bony_identity),
    ("dyadic.commutator", commutator_definition),
    ("dyadic.besov_single_mode", besov_single_mode),
    ("dyadic.path_norm_constant", path_norm_of_constant_path),
    ("noise.determinism", noise_determinism),
    ("noise.coarsening", noise_coarsening),
    ("noise.variance", noise_variance),
    ("noise.ou_step", ou_gain),
    ("renorm.identities", identities),
    ("renorm.combo_limit", combo_limit),
    ("renorm.c_d_reindexing", c_d_reindexing),
    ("renorm.c_b_direct_sum", c_b_brute_force),
    ("renorm.dy_drift", dy_drift),
    ("renorm.heat_lemma", heat_lemma),
    ("enhancement.mild_residual", enhancement_residual),
    ("enhancement.flat_coincidence", flat_profile_coincidence),
    ("solvers.zero_noise_drift", zero_noise_drift),
    ("solvers.she_heat_flow", she_heat_flow),
    ("solvers.picard_reconstruction", picard_reconstruction),
    ("solvers.slope_fit", slope_fit),
    ("io.path_round_trip", path_file_round_trip),
    ("io.constants_csv", constants_csv),
    ("io.replay", run_replay),
];

/// Identifiers of all checks, in execution order.
pub fn check_ids() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

pub fn run_selftest(opts: &SelftestOptions) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(id, check)| {
            let t = Instant::now();
            let (passed, detail) = match check(opts) {
                Ok(d) => (true, d),
                Err(e) => (false, e.to_string()),
            };
            CheckResult { id: (*id).into(), passed, detail, seconds: t.elapsed().as_secs_f64() }
        })
        .collect()
}
