//! Littlewood–Paley blocks, Besov norms, Bony paraproducts and the commutator `R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, SpectralField};

// PARTITION
// ================================================================================================

/// Smooth step: 1 on `|x| ≤ 3/4`, 0 on `|x| ≥ 4/3`.
pub fn chi(x: f64) -> f64 {
    const A: f64 = 0.75;
    const B: f64 = 4.0 / 3.0;
    let t = (x.abs() - A) / (B - A);
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = |t: f64| (-1.0 / t).exp();
        let a = s(1.0 - t);
        a / (a + s(t))
    }
}

/// `ρ(x) = χ(x/2) − χ(x)`, supported in `3/4 ≤ |x| ≤ 8/3`.
pub fn rho(x: f64) -> f64 {
    chi(0.5 * x) - chi(x)
}

/// Dyadic partition of unity on a grid, blocks `j = -1..=j_max`.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: GridSpec,
    j_max: i32,
    tables: Vec<Vec<f64>>,
}

impl DyadicPartition {
    /// `j_max = ⌈log₂(3N/16)⌉`; the top block is `1 − χ(k/2^{j_max})` so the blocks sum to one
    /// on every represented mode.
    pub fn new(grid: GridSpec) -> Result<Self> {
        let n = grid.n_modes();
        if n < 8 {
            return Err(Error::InvalidGrid(n));
        }
        let j_max = (3.0 * n as f64 / 16.0).log2().ceil() as i32;
        let mut tables = Vec::with_capacity(j_max as usize + 2);
        tables.push(grid.table(|k| chi(k as f64)));
        for j in 0..j_max {
            let s = (-j as f64).exp2();
            tables.push(grid.table(|k| rho(k as f64 * s)));
        }
        let s = (-j_max as f64).exp2();
        tables.push(grid.table(|k| 1.0 - chi(k as f64 * s)));
        Ok(Self { grid, j_max, tables })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Block indices `-1..=j_max`.
    pub fn indices(&self) -> impl Iterator<Item = i32> {
        -1..=self.j_max
    }

    /// `ρ_j` in FFT order.
    pub fn table(&self, j: i32) -> Result<&[f64]> {
        self.check_index(j)?;
        Ok(&self.tables[(j + 1) as usize])
    }

    fn check_index(&self, j: i32) -> Result<()> {
        if j < -1 || j > self.j_max {
            return Err(Error::BlockIndex { j, j_max: self.j_max });
        }
        Ok(())
    }

    /// `ρ_j(k)` for a represented mode.
    pub fn weight(&self, j: i32, k: i64) -> f64 {
        match (self.check_index(j), self.grid.index_of(k)) {
            (Ok(()), Some(i)) => self.tables[(j + 1) as usize][i],
            _ => 0.0,
        }
    }

    /// `max_k |Σ_j ρ_j(k) − 1|` over represented modes.
    pub fn unity_defect(&self) -> f64 {
        self.grid
            .modes()
            .map(|(i, _)| (self.tables.iter().map(|t| t[i]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_k |ρ_i(k) ρ_j(k)|` over all pairs with `|i − j| ≥ 2`.
    pub fn overlap_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (a, ta) in self.tables.iter().enumerate() {
            for tb in self.tables.iter().skip(a + 2) {
                for (x, y) in ta.iter().zip(tb) {
                    d = d.max((x * y).abs());
                }
            }
        }
        d
    }

    /// Overwrites one table entry. Exists so that self-tests can check that a damaged
    /// partition is detected.
    #[doc(hidden)]
    pub fn corrupt(&mut self, j: i32, k: i64, value: f64) {
        if let (Ok(()), Some(i)) = (self.check_index(j), self.grid.index_of(k)) {
            self.tables[(j + 1) as usize][i] = value;
        }
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch(self.grid.n_modes(), f.grid().n_modes()));
        }
        Ok(())
    }
}

pub fn build_partition(grid: GridSpec) -> Result<DyadicPartition> {
    DyadicPartition::new(grid)
}

/// `Δ_j f`.
pub fn block(f: &SpectralField, j: i32, part: &DyadicPartition) -> Result<SpectralField> {
    part.check_grid(f)?;
    Ok(f.scale_by(part.table(j)?))
}

// NORMS
// ================================================================================================

/// Exponents of `B^α_{p,q}`; `p` and `q` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl NormSpec {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        let s = Self { alpha, p, q };
        s.validate()?;
        Ok(s)
    }

    /// `𝒞^α = B^α_{∞,∞}`.
    pub fn holder(alpha: f64) -> Self {
        Self { alpha, p: f64::INFINITY, q: f64::INFINITY }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !(self.p >= 1.0) || !(self.q >= 1.0) {
            return Err(Error::InvalidNorm(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Weighted path norm `𝓛^{η,α,δ}` parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathNormSpec {
    pub norm: NormSpec,
    pub eta: f64,
    pub delta: f64,
}

impl PathNormSpec {
    pub fn new(norm: NormSpec, eta: f64, delta: f64) -> Result<Self> {
        norm.validate()?;
        if !(eta >= 0.0) || !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidNorm(format!("eta={eta}, delta={delta}")));
        }
        Ok(Self { norm, eta, delta })
    }
}

fn lp(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        let mean = values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / values.len() as f64;
        mean.powf(1.0 / p)
    }
}

fn lq(terms: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Real-space samples of every block of `f` on the `N`-point grid.
fn block_samples(f: &SpectralField, part: &DyadicPartition) -> Vec<Vec<f64>> {
    part.tables.iter().map(|t| f.scale_by(t).to_real()).collect()
}

fn norm_from_samples(blocks: &[Vec<f64>], spec: &NormSpec) -> f64 {
    let terms = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (spec.alpha * (i as f64 - 1.0)).exp2() * lp(b, spec.p));
    lq(terms, spec.q)
}

/// `‖f‖_{B^α_{p,q}}` with `L^p` by the rectangle rule on the grid.
pub fn besov_norm(f: &SpectralField, spec: &NormSpec, part: &DyadicPartition) -> Result<f64> {
    spec.validate()?;
    part.check_grid(f)?;
    Ok(norm_from_samples(&block_samples(f, part), spec))
}

/// Components of the discrete `𝓛^{η,α,δ}` estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathNorm {
    /// `sup_t t^η ‖u_t‖_α`.
    pub weighted_sup: f64,
    /// `sup_{s<t} s^η ‖u_t − u_s‖_{α−2δ} / (t − s)^δ`.
    pub holder: f64,
    /// `sup_t ‖u_t‖_{α−2η}`.
    pub low_sup: f64,
}

impl PathNorm {
    pub fn total(&self) -> f64 {
        self.weighted_sup + self.holder + self.low_sup
    }
}

/// Discrete `𝓛^{η,α,δ}` estimator over all sample times and all sample pairs.
pub fn path_norm(
    times: &[f64],
    fields: &[&SpectralField],
    spec: &PathNormSpec,
    part: &DyadicPartition,
) -> Result<PathNorm> {
    if fields.len() < 2 || times.len() != fields.len() {
        return Err(Error::ShortPath(fields.len().min(times.len())));
    }
    for f in fields {
        part.check_grid(f)?;
    }
    let PathNormSpec { norm, eta, delta } = *spec;
    let blocks: Vec<Vec<Vec<f64>>> = fields.iter().map(|f| block_samples(f, part)).collect();
    let hi = norm;
    let mid = norm.with_alpha(norm.alpha - 2.0 * delta);
    let lo = norm.with_alpha(norm.alpha - 2.0 * eta);

    let mut out = PathNorm::default();
    for (t, b) in times.iter().zip(&blocks) {
        out.weighted_sup = out.weighted_sup.max(t.powf(eta) * norm_from_samples(b, &hi));
        out.low_sup = out.low_sup.max(norm_from_samples(b, &lo));
    }
    let mut diff: Vec<Vec<f64>> = blocks[0].clone();
    for a in 0..blocks.len() {
        for b in a + 1..blocks.len() {
            for (d, (x, y)) in diff.iter_mut().zip(blocks[b].iter().zip(&blocks[a])) {
                d.iter_mut().zip(x.iter().zip(y)).for_each(|(d, (x, y))| *d = x - y);
            }
            let (s, t) = (times[a], times[b]);
            let q = s.powf(eta) * norm_from_samples(&diff, &mid) / (t - s).powf(delta);
            out.holder = out.holder.max(q);
        }
    }
    Ok(out)
}

// PARAPRODUCTS
// ================================================================================================

/// Blocks of one field sampled on the padded `2N` grid, ready for real-space products.
#[derive(Clone, Debug)]
pub struct Blocks {
    grid: GridSpec,
    blocks: Vec<Vec<f64>>,
}

impl Blocks {
    pub fn new(f: &SpectralField, part: &DyadicPartition) -> Result<Self> {
        part.check_grid(f)?;
        let fields: Vec<SpectralField> = part.tables.iter().map(|t| f.scale_by(t)).collect();
        let mut blocks = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            match pair {
                [a, b] => {
                    let (x, y) = SpectralField::to_padded_pair(a, b)?;
                    blocks.push(x);
                    blocks.push(y);
                }
                [a] => blocks.push(a.to_padded()),
                _ => unreachable!(),
            }
        }
        Ok(Self { grid: f.grid(), blocks })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    fn len(&self) -> usize {
        2 * self.grid.n_modes()
    }

    /// Padded samples of the full field.
    pub fn total(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for b in &self.blocks {
            add_into(&mut out, b);
        }
        out
    }

    /// Padded samples of `self ≺ other`.
    pub fn lt(&self, other: &Blocks) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut partial = vec![0.0; self.len()];
        for j in 2..self.blocks.len() {
            add_into(&mut partial, &self.blocks[j - 2]);
            mul_add_into(&mut out, &partial, &other.blocks[j]);
        }
        out
    }

    /// Padded samples of `self ⊙ other`.
    pub fn resonant(&self, other: &Blocks) -> Vec<f64> {
        let n = self.blocks.len();
        let mut out = vec![0.0; self.len()];
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                mul_add_into(&mut out, &self.blocks[i], &other.blocks[j]);
            }
        }
        out
    }
}

pub(crate) fn add_into(out: &mut [f64], x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, x)| *o += x);
}

pub(crate) fn mul_add_into(out: &mut [f64], x: &[f64], y: &[f64]) {
    out.iter_mut().zip(x.iter().zip(y)).for_each(|(o, (x, y))| *o += x * y);
}

fn check_pair(u: &SpectralField, v: &SpectralField) -> Result<()> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch(u.grid().n_modes(), v.grid().n_modes()));
    }
    Ok(())
}

/// `u ≺ v = Σ_j S_{j−2}u Δ_j v`.
pub fn paraproduct_lt(
    u: &SpectralField,
    v: &SpectralField,
    part: &DyadicPartition,
) -> Result<SpectralField> {
    check_pair(u, v)?;
    let (bu, bv) = (Blocks::new(u, part)?, Blocks::new(v, part)?);
    SpectralField::from_padded(u.grid(), &bu.lt(&bv))
}

/// `u ≻ v = v ≺ u`.
pub fn paraproduct_gt(
    u: &SpectralField,
    v: &SpectralField,
    part: &DyadicPartition,
) -> Result<SpectralField> {
    paraproduct_lt(v, u, part)
}

/// `u ⊙ v = Σ_{|i−j|≤1} Δ_i u Δ_j v`.
pub fn resonant(
    u: &SpectralField,
    v: &SpectralField,
    part: &DyadicPartition,
) -> Result<SpectralField> {
    check_pair(u, v)?;
    let (bu, bv) = (Blocks::new(u, part)?, Blocks::new(v, part)?);
    SpectralField::from_padded(u.grid(), &bu.resonant(&bv))
}

/// `R(u, v, w) = (u ≺ v) ⊙ w − u (v ⊙ w)`.
pub fn commutator_r(
    u: &SpectralField,
    v: &SpectralField,
    w: &SpectralField,
    part: &DyadicPartition,
) -> Result<SpectralField> {
    check_pair(u, v)?;
    check_pair(u, w)?;
    let bw = Blocks::new(w, part)?;
    commutator_with(u, &Blocks::new(v, part)?, &bw, part)
}

/// `R(u, v, w)` from precomputed blocks of `v` and `w`.
pub fn commutator_with(
    u: &SpectralField,
    bv: &Blocks,
    bw: &Blocks,
    part: &DyadicPartition,
) -> Result<SpectralField> {
    let grid = u.grid();
    let bu = Blocks::new(u, part)?;
    let lt = SpectralField::from_padded(grid, &bu.lt(bv))?;
    let vw = SpectralField::from_padded(grid, &bv.resonant(bw))?;
    let first = Blocks::new(&lt, part)?.resonant(bw);
    let (pu, pvw) = SpectralField::to_padded_pair(u, &vw)?;
    let out: Vec<f64> = first.iter().zip(pu.iter().zip(&pvw)).map(|(a, (x, y))| a - x * y).collect();
    SpectralField::from_padded(grid, &out)
}

// TESTS
// ================================================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn random_field(grid: GridSpec, seed: u64) -> SpectralField {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        SpectralField::from_positive_modes(grid, |_| Complex64::new(next(), next()))
    }

    fn brute_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
        let g = a.grid();
        let km = g.k_max();
        SpectralField::from_positive_modes(g, |k| {
            (-km..=km).map(|l| a.coeff(l) * b.coeff(k - l)).sum()
        })
    }

    fn brute_blocks(f: &SpectralField, part: &DyadicPartition) -> Vec<SpectralField> {
        part.indices().map(|j| block(f, j, part).unwrap()).collect()
    }

    fn brute_lt(u: &SpectralField, v: &SpectralField, part: &DyadicPartition) -> SpectralField {
        let (bu, bv) = (brute_blocks(u, part), brute_blocks(v, part));
        let mut out = SpectralField::zeros(u.grid());
        for i in 0..bu.len() {
            for j in i + 2..bv.len() {
                out += &brute_product(&bu[i], &bv[j]);
            }
        }
        out
    }

    fn brute_res(u: &SpectralField, v: &SpectralField, part: &DyadicPartition) -> SpectralField {
        let (bu, bv) = (brute_blocks(u, part), brute_blocks(v, part));
        let mut out = SpectralField::zeros(u.grid());
        for i in 0..bu.len() {
            for j in 0..bv.len() {
                if i.abs_diff(j) <= 1 {
                    out += &brute_product(&bu[i], &bv[j]);
                }
            }
        }
        out
    }

    #[test]
    fn partition_properties() {
        for n in [8, 16, 64, 128, 256, 1024] {
            let p = build_partition(GridSpec::new(n).unwrap()).unwrap();
            assert!(p.unity_defect() <= 1e-12, "n={n}");
            assert_eq!(p.overlap_defect(), 0.0);
            assert_eq!(p.weight(-1, 0), 1.0);
            for j in 0..=p.j_max() {
                assert_eq!(p.weight(j, 0), 0.0);
            }
        }
        let p = build_partition(GridSpec::new(128).unwrap()).unwrap();
        assert_eq!(p.j_max(), 5);
        assert!(p.table(6).is_err());
        assert!(p.table(-2).is_err());
    }

    #[test]
    fn block_support_and_constants() {
        let g = GridSpec::new(64).unwrap();
        let p = build_partition(g).unwrap();
        for k in 0..=g.k_max() {
            let active = p.indices().filter(|&j| p.weight(j, k) != 0.0).count();
            assert!((1..=2).contains(&active));
        }
        let c = SpectralField::constant(g, 2.5);
        assert_eq!(block(&c, -1, &p).unwrap(), c);
        assert_eq!(block(&c, 2, &p).unwrap().max_coeff(), 0.0);
        let f = random_field(g, 1);
        let mut sum = SpectralField::zeros(g);
        for j in p.indices() {
            sum += &block(&f, j, &p).unwrap();
        }
        assert!((&sum - &f).max_coeff() <= 1e-12);
    }

    #[test]
    fn besov_norm_of_single_mode() {
        let g = GridSpec::new(64).unwrap();
        let p = build_partition(g).unwrap();
        let k0 = 5;
        let u = SpectralField::from_positive_modes(g, |k| Complex64::new((k == k0) as u8 as f64, 0.0));
        let spec = NormSpec::holder(0.0);
        let got = besov_norm(&u, &spec, &p).unwrap();
        let expected = p.indices().map(|j| 2.0 * p.weight(j, k0)).fold(0.0, f64::max);
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(besov_norm(&SpectralField::zeros(g), &spec, &p).unwrap(), 0.0);
        let f = random_field(g, 3);
        let s2 = NormSpec::new(0.3, 2.0, 1.0).unwrap();
        let a = besov_norm(&f, &s2, &p).unwrap();
        let b = besov_norm(&(&f * -3.0), &s2, &p).unwrap();
        assert!((b - 3.0 * a).abs() <= 1e-12 * b);
        assert!(NormSpec::new(0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn path_norm_examples() {
        let g = GridSpec::new(32).unwrap();
        let p = build_partition(g).unwrap();
        let v = random_field(g, 7);
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        let constant: Vec<&SpectralField> = times.iter().map(|_| &v).collect();
        let spec = PathNormSpec::new(NormSpec::holder(0.2), 0.0, 0.5).unwrap();
        assert_eq!(path_norm(&times, &constant, &spec, &p).unwrap().holder, 0.0);

        let linear: Vec<SpectralField> = times.iter().map(|&t| &v * t).collect();
        let refs: Vec<&SpectralField> = linear.iter().collect();
        let spec = PathNormSpec::new(NormSpec::holder(0.2), 0.0, 1.0).unwrap();
        let got = path_norm(&times, &refs, &spec, &p).unwrap().holder;
        let want = besov_norm(&v, &NormSpec::holder(-1.8), &p).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
        assert!(path_norm(&times[..1], &refs[..1], &spec, &p).is_err());
    }

    #[test]
    fn paraproducts_match_block_sums() {
        let g = GridSpec::new(32).unwrap();
        let p = build_partition(g).unwrap();
        let u = random_field(g, 11);
        let v = random_field(g, 12);
        let lt = paraproduct_lt(&u, &v, &p).unwrap();
        let res = resonant(&u, &v, &p).unwrap();
        assert!((&lt - &brute_lt(&u, &v, &p)).max_coeff() < 1e-12);
        assert!((&res - &brute_res(&u, &v, &p)).max_coeff() < 1e-12);
        let gt = paraproduct_gt(&u, &v, &p).unwrap();
        let bony = &(&lt + &res) + &gt;
        let prod = u.product(&v).unwrap();
        assert!((&bony - &prod).max_coeff() <= 1e-12 * prod.max_coeff());
    }

    #[test]
    fn paraproducts_with_constants() {
        let g = GridSpec::new(64).unwrap();
        let p = build_partition(g).unwrap();
        let c = SpectralField::constant(g, 1.7);
        let v = random_field(g, 13);
        let low = &block(&v, -1, &p).unwrap() + &block(&v, 0, &p).unwrap();
        let lt = paraproduct_lt(&c, &v, &p).unwrap();
        assert!((&lt - &(&(&v - &low) * 1.7)).max_coeff() < 1e-12);
        let res = resonant(&c, &v, &p).unwrap();
        assert!((&res - &(&low * 1.7)).max_coeff() < 1e-12);
        assert!(paraproduct_lt(&v, &c, &p).unwrap().max_coeff() < 1e-14);
        assert!(paraproduct_gt(&c, &v, &p).unwrap().max_coeff() < 1e-14);
    }

    #[test]
    fn commutator_matches_definition() {
        let g = GridSpec::new(16).unwrap();
        let p = build_partition(g).unwrap();
        let (u, v, w) = (random_field(g, 1), random_field(g, 2), random_field(g, 3));
        let r = commutator_r(&u, &v, &w, &p).unwrap();
        let lt = brute_lt(&u, &v, &p);
        let want = &brute_res(&lt, &w, &p) - &brute_product(&u, &brute_res(&v, &w, &p));
        assert!((&r - &want).max_coeff() < 1e-10);
        let z = SpectralField::zeros(g);
        assert!(commutator_r(&u, &z, &w, &p).unwrap().max_coeff() < 1e-14);
        assert!(commutator_r(&u, &v, &z, &p).unwrap().max_coeff() < 1e-14);
    }
}
