//! Sinusoidal embeddings for lengths and m = 0 harmonic embeddings for
//! angles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::Point2;
use crate::{Error, Result};

pub const DEFAULT_N_BASIS: usize = 8;

/// Frequencies of the sinusoidal basis. `spacing` is the mesh spacing
/// scale `s`, `domain` the domain size `L`; the geometric base `d = 4L/(sπ)`
/// is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineBasisConfig {
    pub n_basis: usize,
    pub spacing: f64,
    pub domain: f64,
}

impl SineBasisConfig {
    pub fn new(n_basis: usize, spacing: f64, domain: f64) -> Result<Self> {
        if n_basis == 0 || !(spacing > 0.0) || !(domain > 0.0) {
            return Err(Error::Config(format!(
                "sine basis needs n_basis ≥ 1, s > 0, L > 0 (got {n_basis}, {spacing}, {domain})"
            )));
        }
        Ok(SineBasisConfig {
            n_basis,
            spacing,
            domain,
        })
    }

    pub fn base(&self) -> f64 {
        4.0 * self.domain / (self.spacing * PI)
    }

    /// Angular frequency of term `i`: `1 / (s · d^{i/n})`.
    pub fn frequency(&self, i: usize) -> f64 {
        let d = self.base();
        1.0 / (self.spacing * d.powf(i as f64 / self.n_basis as f64))
    }

    pub fn width(&self) -> usize {
        2 * self.n_basis
    }
}

/// Appends `[sin_0, cos_0, sin_1, cos_1, ...]` for scalar `x`.
pub fn sine_embed_into(x: f64, cfg: &SineBasisConfig, out: &mut Vec<f64>) {
    let d = cfg.base();
    for i in 0..cfg.n_basis {
        let arg = (x / cfg.spacing) / d.powf(i as f64 / cfg.n_basis as f64);
        let (s, c) = arg.sin_cos();
        out.push(s);
        out.push(c);
    }
}

/// Precomputed powers `d^{i/n}` for repeated embedding with one config.
/// Produces the same bits as [`sine_embed_into`].
#[derive(Debug, Clone, PartialEq)]
pub struct SineTable {
    spacing: f64,
    powers: Vec<f64>,
}

impl SineTable {
    pub fn new(cfg: &SineBasisConfig) -> Self {
        let d = cfg.base();
        SineTable {
            spacing: cfg.spacing,
            powers: (0..cfg.n_basis)
                .map(|i| d.powf(i as f64 / cfg.n_basis as f64))
                .collect(),
        }
    }

    pub fn embed_into(&self, x: f64, out: &mut Vec<f64>) {
        let xs = x / self.spacing;
        for &p in &self.powers {
            let (s, c) = (xs / p).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
}

pub fn sine_embed(x: f64, cfg: &SineBasisConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.width());
    sine_embed_into(x, cfg, &mut out);
    out
}

/// Embedding of both components, x first.
pub fn sine_embed_vec(p: Point2, cfg: &SineBasisConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * cfg.width());
    sine_embed_into(p.x, cfg, &mut out);
    sine_embed_into(p.y, cfg, &mut out);
    out
}

/// Legendre values `P_0(u) ..= P_max(u)` by the three-term recurrence.
pub fn legendre_values(max_order: usize, u: f64, out: &mut [f64]) {
    debug_assert!(out.len() > max_order);
    out[0] = 1.0;
    if max_order == 0 {
        return;
    }
    out[1] = u;
    for l in 1..max_order {
        let lf = l as f64;
        out[l + 1] = ((2.0 * lf + 1.0) * u * out[l] - lf * out[l - 1]) / (lf + 1.0);
    }
}

/// Per-order normalization and the monomial expansion of `P_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTables {
    pub n_basis: usize,
    /// `norms[ℓ-1]` scales order ℓ.
    pub norms: Vec<f64>,
    /// `coefficients[ℓ][k]` multiplies `u^k` in `P_ℓ(u)`, ℓ = 0..=n_basis.
    pub coefficients: Vec<Vec<f64>>,
    pub factorial_norm: bool,
}

impl HarmonicTables {
    /// Standard m = 0 normalization `sqrt((2ℓ+1)/4π)`.
    pub fn new(n_basis: usize) -> Self {
        Self::build(n_basis, false)
    }

    /// `sqrt((2ℓ+1)!/4π)` instead, for side-by-side comparison only.
    pub fn with_factorial_norm(n_basis: usize) -> Self {
        Self::build(n_basis, true)
    }

    pub fn build(n_basis: usize, factorial_norm: bool) -> Self {
        let norms = (1..=n_basis)
            .map(|l| {
                let m = 2 * l + 1;
                let num = if factorial_norm {
                    (1..=m).map(|k| k as f64).product::<f64>()
                } else {
                    m as f64
                };
                (num / (4.0 * PI)).sqrt()
            })
            .collect();
        HarmonicTables {
            n_basis,
            norms,
            coefficients: legendre_coefficients(n_basis),
            factorial_norm,
        }
    }

    pub fn width(&self) -> usize {
        2 * self.n_basis
    }

    /// `P_ℓ(u)` from the stored monomial coefficients (Horner).
    pub fn eval_from_coefficients(&self, l: usize, u: f64) -> f64 {
        self.coefficients[l]
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * u + c)
    }
}

/// Monomial coefficients of `P_0 ..= P_max` built from the recurrence on
/// polynomials.
fn legendre_coefficients(max_order: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if max_order >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for l in 1..max_order {
        let lf = l as f64;
        let mut next = vec![0.0; l + 2];
        for (k, &c) in polys[l].iter().enumerate() {
            next[k + 1] += (2.0 * lf + 1.0) * c;
        }
        for (k, &c) in polys[l - 1].iter().enumerate() {
            next[k] -= lf * c;
        }
        for c in &mut next {
            *c /= lf + 1.0;
        }
        polys.push(next);
    }
    polys
}

/// Appends `[Y_1, Ỹ_1, ..., Y_n, Ỹ_n]` where `Y_ℓ` uses `cos θ` and `Ỹ_ℓ`
/// uses `sin θ`.
pub fn sph_embed_into(theta: f64, tables: &HarmonicTables, out: &mut Vec<f64>) {
    let n = tables.n_basis;
    let mut pc = [0.0; 32];
    let mut ps = [0.0; 32];
    let (pc, ps) = if n < 32 {
        (&mut pc[..=n], &mut ps[..=n])
    } else {
        // rare: large bases fall back to the heap
        return sph_embed_heap(theta, tables, out);
    };
    let (s, c) = theta.sin_cos();
    legendre_values(n, c, pc);
    legendre_values(n, s, ps);
    for l in 1..=n {
        let k = tables.norms[l - 1];
        out.push(k * pc[l]);
        out.push(k * ps[l]);
    }
}

fn sph_embed_heap(theta: f64, tables: &HarmonicTables, out: &mut Vec<f64>) {
    let n = tables.n_basis;
    let mut pc = vec![0.0; n + 1];
    let mut ps = vec![0.0; n + 1];
    let (s, c) = theta.sin_cos();
    legendre_values(n, c, &mut pc);
    legendre_values(n, s, &mut ps);
    for l in 1..=n {
        let k = tables.norms[l - 1];
        out.push(k * pc[l]);
        out.push(k * ps[l]);
    }
}

pub fn sph_embed(theta: f64, tables: &HarmonicTables) -> Vec<f64> {
    let mut out = Vec::with_capacity(tables.width());
    sph_embed_into(theta, tables, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SineBasisConfig {
        SineBasisConfig::new(8, 0.01, 2.0).unwrap()
    }

    #[test]
    fn sine_zero_pattern() {
        let e = sine_embed(0.0, &cfg());
        assert_eq!(e.len(), 16);
        for pair in e.chunks(2) {
            assert_eq!(pair, [0.0, 1.0]);
        }
    }

    #[test]
    fn sine_first_term_is_unscaled() {
        let c = cfg();
        let x = 0.037;
        let e = sine_embed(x, &c);
        assert_eq!(e[0], (x / c.spacing).sin());
        assert_eq!(e[1], (x / c.spacing).cos());
        let q = sine_embed(c.spacing * PI / 2.0, &c);
        assert!((q[0] - 1.0).abs() < 1e-15 && q[1].abs() < 1e-15);
    }

    #[test]
    fn sine_vec_layout() {
        let c = cfg();
        let v = sine_embed_vec(Point2::new(0.2, -0.7), &c);
        assert_eq!(v.len(), 32);
        let sw = sine_embed_vec(Point2::new(-0.7, 0.2), &c);
        assert_eq!(&v[..16], &sw[16..]);
        assert_eq!(&v[16..], &sw[..16]);
    }

    #[test]
    fn sine_bounded_far_out() {
        let c = cfg();
        for k in 0..200 {
            let x = (k as f64 - 100.0) * 1e4 * c.spacing;
            for v in sine_embed(x, &c) {
                assert!(v.is_finite() && v.abs() <= 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SineBasisConfig::new(0, 1.0, 1.0).is_err());
        assert!(SineBasisConfig::new(8, 0.0, 1.0).is_err());
        assert!(SineBasisConfig::new(8, 1.0, -1.0).is_err());
    }

    #[test]
    fn sph_at_zero() {
        let t = HarmonicTables::new(8);
        let e = sph_embed(0.0, &t);
        assert_eq!(e.len(), 16);
        for l in 1..=8 {
            let want = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
            assert!((e[2 * (l - 1)] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn sph_order_two_by_hand() {
        let t = HarmonicTables::new(8);
        let e = sph_embed(PI / 3.0, &t);
        let want = -0.125 * (5.0 / (4.0 * PI)).sqrt();
        assert!((e[2] - want).abs() < 1e-14, "{} vs {}", e[2], want);
    }

    #[test]
    fn table_matches_direct_formula() {
        let cfg = SineBasisConfig::new(8, 0.013, 7.5).unwrap();
        let table = SineTable::new(&cfg);
        for &x in &[0.0, 1e-3, -0.7, 3.9, 120.0] {
            let mut t = Vec::new();
            table.embed_into(x, &mut t);
            assert_eq!(t, sine_embed(x, &cfg));
        }
    }

    #[test]
    fn factorial_norm_is_huge() {
        let t = HarmonicTables::with_factorial_norm(8);
        assert!(t.norms[7] > 1e6);
        let s = HarmonicTables::new(8);
        assert!(s.norms[7] < 2.0);
    }

    #[test]
    fn coefficients_reproduce_unit_endpoint() {
        let t = HarmonicTables::new(8);
        for l in 0..=8 {
            assert!((t.eval_from_coefficients(l, 1.0) - 1.0).abs() < 1e-10);
        }
        // P_2 = (3u² − 1)/2
        assert_eq!(t.coefficients[2], vec![-0.5, 0.0, 1.5]);
    }
}
