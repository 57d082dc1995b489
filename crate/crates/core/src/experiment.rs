//! Batch runs behind the command-line tool: constant tables, single solves, enhancements and
//! ensemble convergence studies, each written to a run directory with a checksummed manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyadic::DyadicPartition;
use crate::enhancement::{build_enhancement, enhancement_norms, EnhancementNorms, DEFAULT_BURN_IN};
use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::path::{save_path, FieldPath};
use crate::renorm::{combo_checks, ComboReport, RenormSet, Scheme};
use crate::solvers::{
    default_g0, picard_fixed_point, reconstruct_h, shifted_sup_gap, solve_renormalized,
    solve_she_cole_hopf, window_slope, PicardReport, SolverConfig,
};
use crate::spectral::{load_field, GridSpec, Mollifier, Profile, SpectralField};

/// File name of the run manifest inside every output directory.
pub const MANIFEST_FILE: &str = "run.json";

pub const CONSTANTS_SCHEMA: &str = "kpzlab.constants/1";
pub const MEMBERS_SCHEMA: &str = "kpzlab.converge-members/1";
pub const SUMMARY_SCHEMA: &str = "kpzlab.converge-summary/1";

/// Fraction of the horizon skipped before fitting drift slopes.
pub const SLOPE_WINDOW: f64 = 0.25;

fn mollifier(profile: &str, eps: f64) -> Result<Mollifier> {
    Mollifier::new(Profile::parse(profile)?, eps)
}

fn n_steps(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T > 0, got dt={dt}, T={t_final}")));
    }
    let n = (t_final / dt).round() as usize;
    if n == 0 || (n as f64 * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Config(format!("T = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(n)
}

// MANIFEST
// ================================================================================================

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub argv: Vec<String>,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub threads: usize,
    pub parallel: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileRecord>,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<(u64, String)> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((total, hex::encode(h.finalize())))
}

fn records(dir: &Path, names: &[String]) -> Result<Vec<FileRecord>> {
    names
        .iter()
        .map(|name| {
            let (bytes, sha256) = sha256_file(dir.join(name))?;
            Ok(FileRecord { name: name.clone(), bytes, sha256 })
        })
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?)?)
}

/// Names of listed files whose checksum no longer matches.
pub fn verify_manifest(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let mut bad = Vec::new();
    for r in &m.files {
        match sha256_file(dir.join(&r.name)) {
            Ok((bytes, sum)) if bytes == r.bytes && sum == r.sha256 => {}
            _ => bad.push(r.name.clone()),
        }
    }
    Ok(bad)
}

// RUN CONFIGURATIONS
// ================================================================================================

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Constants(ConstantsConfig),
    Enhance(EnhanceConfig),
    Solve(SolveConfig),
    Converge(ConvergeConfig),
}

impl RunConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Constants(_) => None,
            RunConfig::Enhance(c) => Some(c.seed),
            RunConfig::Solve(c) => Some(c.seed),
            RunConfig::Converge(c) => Some(c.seed),
        }
    }
}

/// Runs `config`, writing outputs and [`MANIFEST_FILE`] to `out`.
pub fn run(config: &RunConfig, out: impl AsRef<Path>, argv: Vec<String>) -> Result<RunManifest> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let started_unix = unix_now();
    let files = match config {
        RunConfig::Constants(c) => write_constants(c, out)?,
        RunConfig::Enhance(c) => write_enhance(c, out)?,
        RunConfig::Solve(c) => write_solve(c, out)?,
        RunConfig::Converge(c) => write_converge(c, out)?,
    };
    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").into(),
        argv,
        config: config.clone(),
        seed: config.seed(),
        threads: crate::par::num_threads(),
        parallel: cfg!(feature = "parallel"),
        started_unix,
        finished_unix: unix_now(),
        files: records(out, &files)?,
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reruns the configuration stored in `dir` into `out` and lists files whose checksums differ.
pub fn replay(dir: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<Vec<String>> {
    let old = read_manifest(dir)?;
    let new = run(&old.config, out, old.argv.clone())?;
    let mut bad: Vec<String> = old
        .files
        .iter()
        .filter(|r| !new.files.contains(r))
        .map(|r| r.name.clone())
        .collect();
    bad.extend(new.files.iter().filter(|r| !old.files.contains(r)).map(|r| r.name.clone()));
    bad.sort();
    bad.dedup();
    Ok(bad)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(name.into())
}

// CONSTANTS
// ================================================================================================

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub eps: Vec<f64>,
    pub profile: String,
}

/// One CSV row of the constants table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    pub eps: f64,
    #[serde(rename = "c_V")]
    pub c_v: f64,
    #[serde(rename = "c_C")]
    pub c_c: f64,
    #[serde(rename = "c_B")]
    pub c_b: f64,
    #[serde(rename = "c_D")]
    pub c_d: f64,
    #[serde(rename = "ct_B")]
    pub ct_b: f64,
    #[serde(rename = "ct_D")]
    pub ct_d: f64,
    pub combo: f64,
    pub combo_tilde: f64,
    #[serde(rename = "dY_drift")]
    pub dy_drift: f64,
}

impl From<&RenormSet> for ConstantsRow {
    fn from(s: &RenormSet) -> Self {
        Self {
            eps: s.eps,
            c_v: s.c_v,
            c_c: s.c_c,
            c_b: s.c_b,
            c_d: s.c_d,
            ct_b: s.ct_b,
            ct_d: s.ct_d,
            combo: s.combo,
            combo_tilde: s.combo_tilde,
            dy_drift: s.dy_drift,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSummary {
    pub schema: String,
    pub profile: String,
    pub sets: Vec<RenormSet>,
    pub checks: Vec<ComboReport>,
}

/// Constants and identity checks per ε; the first violated identity is an error.
pub fn cmd_constants(cfg: &ConstantsConfig) -> Result<ConstantsSummary> {
    if cfg.eps.is_empty() {
        return Err(Error::Config("empty eps list".into()));
    }
    let mut sets = Vec::new();
    let mut checks = Vec::new();
    for &eps in &cfg.eps {
        let m = mollifier(&cfg.profile, eps)?;
        let set = RenormSet::compute(&m)?;
        checks.push(combo_checks(&set, &m)?);
        sets.push(set);
    }
    Ok(ConstantsSummary { schema: CONSTANTS_SCHEMA.into(), profile: cfg.profile.clone(), sets, checks })
}

pub fn write_csv<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn constants_rows(s: &ConstantsSummary) -> Vec<ConstantsRow> {
    s.sets.iter().map(ConstantsRow::from).collect()
}

fn write_constants(cfg: &ConstantsConfig, dir: &Path) -> Result<Vec<String>> {
    let s = cmd_constants(cfg)?;
    write_csv(fs::File::create(dir.join("constants.csv"))?, &constants_rows(&s))?;
    Ok(vec!["constants.csv".into(), write_json(dir, "constants.json", &s)?])
}

// SOLVE
// ================================================================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveScheme {
    Plain,
    Fq,
    ColeHopf,
    Paracontrolled,
}

impl FromStr for SolveScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "fq" => Ok(Self::Fq),
            "cole-hopf" => Ok(Self::ColeHopf),
            "paracontrolled" => Ok(Self::Paracontrolled),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

/// Which constant the direct solvers subtract.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstChoice {
    /// `c^V − 1/12` for plain, `c^V` for fq.
    Paper,
    /// `Σ_k φ(εk)²`.
    Ito,
    Custom(f64),
}

impl FromStr for ConstChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "ito" => Ok(Self::Ito),
            _ => match s.strip_prefix("custom:").map(str::parse::<f64>) {
                Some(Ok(v)) if v.is_finite() => Ok(Self::Custom(v)),
                _ => Err(Error::Config(format!("unknown constant '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialValue {
    Zero,
    File(PathBuf),
}

impl FromStr for InitialValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(p.into())),
                _ => Err(Error::Config(format!("unknown initial value '{s}'"))),
            },
        }
    }
}

impl InitialValue {
    pub fn load(&self, grid: GridSpec) -> Result<SpectralField> {
        match self {
            Self::Zero => Ok(SpectralField::zeros(grid)),
            Self::File(p) => {
                let f = load_field(p)?;
                if f.grid() != grid {
                    return Err(Error::GridMismatch(grid.n_modes(), f.grid().n_modes()));
                }
                Ok(f)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub scheme: SolveScheme,
    pub eps: f64,
    pub modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub profile: String,
    pub h0: InitialValue,
    pub constant: ConstChoice,
    /// Burn-in of the driving terms, paracontrolled scheme only.
    pub burn_in: f64,
}

impl SolveConfig {
    pub fn new(scheme: SolveScheme, eps: f64, modes: usize, dt: f64, t_final: f64) -> Self {
        Self {
            scheme,
            eps,
            modes,
            dt,
            t_final,
            seed: 0,
            profile: "bump2".into(),
            h0: InitialValue::Zero,
            constant: ConstChoice::Paper,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub scheme: SolveScheme,
    /// Constant inside the quadratic term; none for the Cole–Hopf oracle.
    pub constant: Option<f64>,
    pub constants: RenormSet,
    pub n_steps: usize,
    pub blow_up: Option<f64>,
    pub final_mean: f64,
    pub final_sup: f64,
    pub picard: Option<PicardReport>,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub h: FieldPath,
    /// `(f, g)` of the paracontrolled scheme.
    pub parts: Option<(FieldPath, FieldPath)>,
    pub summary: SolveSummary,
}

pub fn cmd_solve(cfg: &SolveConfig) -> Result<SolveOutput> {
    let grid = GridSpec::new(cfg.modes)?;
    let m = mollifier(&cfg.profile, cfg.eps)?;
    m.check_grid(grid)?;
    let consts = RenormSet::compute(&m)?;
    let n = n_steps(cfg.dt, cfg.t_final)?;
    let noise = NoisePath::new(grid, cfg.dt, n, cfg.seed)?;
    let h0 = cfg.h0.load(grid)?;
    let direct = |scheme: Scheme| -> Result<(FieldPath, Option<f64>, f64)> {
        let c = match cfg.constant {
            ConstChoice::Paper => consts.paper_constant(scheme),
            ConstChoice::Ito => consts.ito_constant(),
            ConstChoice::Custom(v) => v,
        };
        let mut sc = SolverConfig::for_noise(&noise, &m, scheme, c);
        sc.h0 = h0.clone();
        let s = solve_renormalized(&noise, &sc)?;
        Ok((s.path, s.blow_up, c))
    };
    let (h, parts, constant, blow_up, picard) = match cfg.scheme {
        SolveScheme::Plain | SolveScheme::Fq => {
            let scheme = if cfg.scheme == SolveScheme::Fq { Scheme::Fq } else { Scheme::Plain };
            let (h, b, c) = direct(scheme)?;
            (h, None, Some(c), b, None)
        }
        SolveScheme::ColeHopf => {
            (solve_she_cole_hopf(&noise, &m, &h0, cfg.t_final, cfg.dt)?, None, None, None, None)
        }
        SolveScheme::Paracontrolled => {
            if cfg.constant != ConstChoice::Paper {
                return Err(Error::Config(
                    "the paracontrolled scheme fixes its own constant; use --const paper".into(),
                ));
            }
            let part = DyadicPartition::new(grid)?;
            let e = build_enhancement(&noise, &m, &consts, Scheme::Plain, cfg.burn_in)?;
            let c = consts.paracontrolled_constant(Scheme::Plain);
            let mut sc = SolverConfig::for_noise(&noise, &m, Scheme::Plain, c);
            sc.h0 = h0.clone();
            let f0 = SpectralField::zeros(grid);
            let sol = picard_fixed_point(&e, &f0, &default_g0(&e, &h0), &part, &sc)?;
            let h = reconstruct_h(&e, &sol.f, &sol.g)?;
            (h, Some((sol.f, sol.g)), Some(c), sol.report.blow_up, Some(sol.report))
        }
    };
    let summary = SolveSummary {
        scheme: cfg.scheme,
        constant,
        constants: consts,
        n_steps: h.n_steps(),
        blow_up,
        final_mean: h.last().mean(),
        final_sup: h.last().sup_norm(),
        picard,
    };
    Ok(SolveOutput { h, parts, summary })
}

fn write_solve(cfg: &SolveConfig, dir: &Path) -> Result<Vec<String>> {
    let out = cmd_solve(cfg)?;
    save_path(dir.join("h.path"), &out.h)?;
    let mut files = vec!["h.path".to_string()];
    if let Some((f, g)) = &out.parts {
        save_path(dir.join("f.path"), f)?;
        save_path(dir.join("g.path"), g)?;
        files.extend(["f.path".to_string(), "g.path".to_string()]);
    }
    files.push(write_json(dir, "solve.json", &out.summary)?);
    Ok(files)
}

// ENHANCE
// ================================================================================================

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub scheme: Scheme,
    pub eps: f64,
    pub modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub profile: String,
    pub burn_in: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhanceSummary {
    pub scheme: Scheme,
    pub n_steps: usize,
    pub norms: EnhancementNorms,
    /// Spatial mean of `X^Y` at the final time.
    pub y_mean_final: f64,
}

fn write_enhance(cfg: &EnhanceConfig, dir: &Path) -> Result<Vec<String>> {
    let grid = GridSpec::new(cfg.modes)?;
    let m = mollifier(&cfg.profile, cfg.eps)?;
    m.check_grid(grid)?;
    let consts = RenormSet::compute(&m)?;
    let noise = NoisePath::new(grid, cfg.dt, n_steps(cfg.dt, cfg.t_final)?, cfg.seed)?;
    let e = build_enhancement(&noise, &m, &consts, cfg.scheme, cfg.burn_in)?;
    let part = DyadicPartition::new(grid)?;
    let summary = EnhanceSummary {
        scheme: cfg.scheme,
        n_steps: e.n_steps(),
        norms: enhancement_norms(&e, &part)?,
        y_mean_final: e.x_y.last().mean(),
    };
    let mut files = e.save(dir)?;
    files.push(write_json(dir, "enhance.json", &summary)?);
    Ok(files)
}

// CONVERGE
// ================================================================================================

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeConfig {
    pub eps: Vec<f64>,
    pub ensemble: usize,
    pub modes: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub profile: String,
}

/// One ensemble member at one ε. Slopes are `24·slope` of the spatial mean of the difference
/// to the Cole–Hopf oracle over `t ∈ [T/4, T]`; gaps are `sup_t ‖h − h_CH − t/24‖_∞` on the
/// same window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRow {
    pub eps: f64,
    pub member: u64,
    pub blow_up: bool,
    pub slope24_fq: Option<f64>,
    pub slope24_plain: Option<f64>,
    pub gap_fq: Option<f64>,
    pub gap_plain: Option<f64>,
    /// `24·slope` of the fq solution against the plain direct solver run with `Σφ²`, which
    /// shares the time discretization of the fq solver.
    pub slope24_fq_direct_ref: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSummary {
    pub eps: f64,
    pub members: usize,
    pub blow_ups: usize,
    pub fq_mean: Option<f64>,
    pub fq_stderr: Option<f64>,
    pub plain_mean: Option<f64>,
    pub plain_stderr: Option<f64>,
    pub fq_direct_ref_mean: Option<f64>,
    pub fq_direct_ref_stderr: Option<f64>,
    pub gap_fq_mean: Option<f64>,
    pub gap_plain_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeReport {
    pub schema: String,
    pub config: ConvergeConfig,
    pub rows: Vec<MemberRow>,
    pub summary: Vec<EpsSummary>,
    /// Members without blow-up at every ε.
    pub complete_members: usize,
    /// Complete members whose gaps decrease strictly as ε decreases.
    pub monotone_fq: usize,
    pub monotone_plain: usize,
}

/// Mean and standard error; the error needs at least two values.
pub fn mean_stderr(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(mean), None);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn mean_diff_slope(a: &FieldPath, b: &FieldPath) -> Result<f64> {
    a.check_aligned(b)?;
    let y: Vec<f64> = a.fields().iter().zip(b.fields()).map(|(x, y)| x.mean() - y.mean()).collect();
    Ok(24.0 * window_slope(&a.times(), &y, SLOPE_WINDOW)?)
}

fn converge_member(
    cfg: &ConvergeConfig,
    m: &Mollifier,
    c: &RenormSet,
    grid: GridSpec,
    n: usize,
    member: u64,
) -> Result<MemberRow> {
    let noise = NoisePath::new(grid, cfg.dt, n, cfg.seed)?.for_member(member);
    let mut row = MemberRow {
        eps: m.eps(),
        member,
        blow_up: false,
        slope24_fq: None,
        slope24_plain: None,
        gap_fq: None,
        gap_plain: None,
        slope24_fq_direct_ref: None,
    };
    let fq = solve_renormalized(&noise, &SolverConfig::for_noise(&noise, m, Scheme::Fq, c.paper_constant(Scheme::Fq)))?;
    let plain = solve_renormalized(
        &noise,
        &SolverConfig::for_noise(&noise, m, Scheme::Plain, c.paper_constant(Scheme::Plain)),
    )?;
    let reference =
        solve_renormalized(&noise, &SolverConfig::for_noise(&noise, m, Scheme::Plain, c.ito_constant()))?;
    let ch = match solve_she_cole_hopf(&noise, m, &SpectralField::zeros(grid), cfg.t_final, cfg.dt) {
        Ok(p) => Some(p),
        Err(Error::NonPositive { .. }) => None,
        Err(e) => return Err(e),
    };
    let blown = [&fq, &plain, &reference].iter().any(|s| s.blow_up.is_some());
    let Some(ch) = ch.filter(|_| !blown) else {
        row.blow_up = true;
        return Ok(row);
    };
    let drift = |t: f64| t / 24.0;
    row.slope24_fq = Some(mean_diff_slope(&fq.path, &ch)?);
    row.slope24_plain = Some(mean_diff_slope(&plain.path, &ch)?);
    row.gap_fq = Some(shifted_sup_gap(&fq.path, &ch, drift, SLOPE_WINDOW)?);
    row.gap_plain = Some(shifted_sup_gap(&plain.path, &ch, drift, SLOPE_WINDOW)?);
    row.slope24_fq_direct_ref = Some(mean_diff_slope(&fq.path, &reference.path)?);
    Ok(row)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Runs every `(ε, member)` pair on common noise and aggregates per ε. Rows are ordered by
/// `(ε, member)` whatever the scheduling.
pub fn cmd_converge(cfg: &ConvergeConfig) -> Result<ConvergeReport> {
    if cfg.eps.is_empty() || cfg.ensemble == 0 {
        return Err(Error::Config("need at least one eps and one ensemble member".into()));
    }
    let grid = GridSpec::new(cfg.modes)?;
    let n = n_steps(cfg.dt, cfg.t_final)?;
    let mut setups = Vec::new();
    for &eps in &cfg.eps {
        let m = mollifier(&cfg.profile, eps)?;
        m.check_grid(grid)?;
        let c = RenormSet::compute(&m)?;
        setups.push((m, c));
    }
    let k = cfg.ensemble;
    let rows = crate::par::map_indexed(setups.len() * k, |i| {
        let (m, c) = &setups[i / k];
        converge_member(cfg, m, c, grid, n, (i % k) as u64)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for (i, &eps) in cfg.eps.iter().enumerate() {
        let chunk = &rows[i * k..(i + 1) * k];
        let ok: Vec<&MemberRow> = chunk.iter().filter(|r| !r.blow_up).collect();
        let col = |f: fn(&MemberRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        let (fq_mean, fq_stderr) = mean_stderr(&col(|r| r.slope24_fq));
        let (plain_mean, plain_stderr) = mean_stderr(&col(|r| r.slope24_plain));
        let (fq_direct_ref_mean, fq_direct_ref_stderr) = mean_stderr(&col(|r| r.slope24_fq_direct_ref));
        summary.push(EpsSummary {
            eps,
            members: ok.len(),
            blow_ups: chunk.len() - ok.len(),
            fq_mean,
            fq_stderr,
            plain_mean,
            plain_stderr,
            fq_direct_ref_mean,
            fq_direct_ref_stderr,
            gap_fq_mean: mean_stderr(&col(|r| r.gap_fq)).0,
            gap_plain_mean: mean_stderr(&col(|r| r.gap_plain)).0,
        });
    }

    // Gaps per member, ordered by decreasing ε.
    let mut order: Vec<usize> = (0..cfg.eps.len()).collect();
    order.sort_by(|&a, &b| cfg.eps[b].total_cmp(&cfg.eps[a]));
    let (mut complete, mut mono_fq, mut mono_plain) = (0, 0, 0);
    for member in 0..k {
        let rs: Vec<&MemberRow> = order.iter().map(|&i| &rows[i * k + member]).collect();
        if rs.iter().any(|r| r.blow_up) {
            continue;
        }
        complete += 1;
        let fq: Vec<f64> = rs.iter().filter_map(|r| r.gap_fq).collect();
        let pl: Vec<f64> = rs.iter().filter_map(|r| r.gap_plain).collect();
        mono_fq += strictly_decreasing(&fq) as usize;
        mono_plain += strictly_decreasing(&pl) as usize;
    }
    Ok(ConvergeReport {
        schema: SUMMARY_SCHEMA.into(),
        config: cfg.clone(),
        rows,
        summary,
        complete_members: complete,
        monotone_fq: mono_fq,
        monotone_plain: mono_plain,
    })
}

fn write_converge(cfg: &ConvergeConfig, dir: &Path) -> Result<Vec<String>> {
    let r = cmd_converge(cfg)?;
    write_csv(fs::File::create(dir.join("members.csv"))?, &r.rows)?;
    write_csv(fs::File::create(dir.join("summary.csv"))?, &r.summary)?;
    Ok(vec!["members.csv".into(), "summary.csv".into(), write_json(dir, "converge.json", &r)?])
}
