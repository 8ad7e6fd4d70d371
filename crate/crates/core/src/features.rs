//! Per-variant node and edge features, target normalization and the
//! signed log transform for pressure.
//!
//! Node feature layout (offsets, `n_basis = 8`):
//!
//! | block        | Base | Trail | Polar | Sine | SpH  | Inlet |
//! |--------------|------|-------|-------|------|------|-------|
//! | base (8)     | 0    | 0     | 0     | 0    | 0    | 0     |
//! | trail (3)    |      | 8     | 8     | 8    | 8    | 8     |
//! | angles (8)   |      |       | 11    | 11   |      |       |
//! | harmonic (128)|     |       |       |      | 11   | 11    |
//! | sine (112)   |      |       |       | 19   | 139  | 139   |
//! | canon (198)  |      |       |       |      |      | 251   |
//!
//! Edge layout: geometry (3) at 0; angles (4) at 3 for Polar/Sine;
//! harmonic (64) at 3 for SpH/Inlet; sine (48) after that; canon (98) last.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{sph_embed_into, HarmonicTables, SineBasisConfig, SineTable, DEFAULT_N_BASIS};
use crate::geom::{canonical_rotation, four_axis_angles, trailing_edge, Rotation2};
use crate::graph::{edge_geometry, KdTree2};
use crate::mesh::{FieldId, MeshCase, Point2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureVariant {
    Base,
    Trail,
    Polar,
    Sine,
    SpH,
    Inlet,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 6] = [
        FeatureVariant::Base,
        FeatureVariant::Trail,
        FeatureVariant::Polar,
        FeatureVariant::Sine,
        FeatureVariant::SpH,
        FeatureVariant::Inlet,
    ];

    fn has_trail(self) -> bool {
        self >= FeatureVariant::Trail
    }

    fn has_raw_angles(self) -> bool {
        matches!(self, FeatureVariant::Polar | FeatureVariant::Sine)
    }

    fn has_harmonics(self) -> bool {
        self >= FeatureVariant::SpH
    }

    fn has_sine(self) -> bool {
        self >= FeatureVariant::Sine
    }

    fn has_canon(self) -> bool {
        self == FeatureVariant::Inlet
    }

    pub fn node_width(self, n_basis: usize) -> usize {
        let mut w = 8;
        if self.has_trail() {
            w += 3;
        }
        if self.has_raw_angles() {
            w += 8;
        }
        if self.has_harmonics() {
            w += 2 * 4 * 2 * n_basis;
        }
        if self.has_sine() {
            w += 14 * n_basis;
        }
        if self.has_canon() {
            w += 6 + 8 * n_basis + 16 * n_basis;
        }
        w
    }

    pub fn edge_width(self, n_basis: usize) -> usize {
        let mut w = 3;
        if self.has_raw_angles() {
            w += 4;
        }
        if self.has_harmonics() {
            w += 8 * n_basis;
        }
        if self.has_sine() {
            w += 6 * n_basis;
        }
        if self.has_canon() {
            w += 2 + 4 * n_basis + 8 * n_basis;
        }
        w
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureVariant::Base => "base",
            FeatureVariant::Trail => "trail",
            FeatureVariant::Polar => "polar",
            FeatureVariant::Sine => "sine",
            FeatureVariant::SpH => "sph",
            FeatureVariant::Inlet => "inlet",
        }
    }

    /// Default recipe per field: canonicalized inputs only for pressure and
    /// turbulent viscosity.
    pub fn default_for(field: FieldId) -> FeatureVariant {
        match field {
            FieldId::VelX | FieldId::VelY => FeatureVariant::SpH,
            FieldId::Pressure | FieldId::TurbVisc => FeatureVariant::Inlet,
        }
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feature variant '{s}'")))
    }
}

/// Dataset-global embedding settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSettings {
    pub n_basis: usize,
    pub spacing: f64,
    pub domain: f64,
    pub factorial_norm: bool,
}

impl BasisSettings {
    /// `s` is the median nearest-neighbor spacing over all points of all
    /// cases; `L` is the bounding-box diagonal of their union.
    pub fn fit(cases: &[MeshCase]) -> Result<Self> {
        let mut spacings = Vec::new();
        let (mut lo, mut hi) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for case in cases {
            if case.len() < 2 {
                continue;
            }
            let tree = KdTree2::build(&case.points);
            for (i, &p) in case.points.iter().enumerate() {
                let nn = tree.knn(p, 2);
                let j = if nn[0] == i { nn[1] } else { nn[0] };
                spacings.push(p.dist_sq(case.points[j]).sqrt());
                lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        spacings.retain(|&s| s > 0.0);
        if spacings.is_empty() {
            return Err(Error::Config(
                "cannot fit basis settings: no point spacing".into(),
            ));
        }
        spacings.sort_by(f64::total_cmp);
        let spacing = spacings[spacings.len() / 2];
        let domain = (hi - lo).norm();
        SineBasisConfig::new(DEFAULT_N_BASIS, spacing, domain)?;
        Ok(BasisSettings {
            n_basis: DEFAULT_N_BASIS,
            spacing,
            domain,
            factorial_norm: false,
        })
    }

    pub fn sine(&self) -> SineBasisConfig {
        SineBasisConfig {
            n_basis: self.n_basis,
            spacing: self.spacing,
            domain: self.domain,
        }
    }

    pub fn harmonics(&self) -> HarmonicTables {
        HarmonicTables::build(self.n_basis, self.factorial_norm)
    }
}

/// Per-case precomputation shared by every feature call on that case.
/// The case is expected to be recentred at its leading edge.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub variant: FeatureVariant,
    pub trail: Point2,
    pub rotation: Option<Rotation2>,
    sine: SineBasisConfig,
    sine_table: SineTable,
    harmonics: HarmonicTables,
}

impl FeatureContext {
    pub fn new(case: &MeshCase, variant: FeatureVariant, basis: &BasisSettings) -> Result<Self> {
        let rotation = if variant.has_canon() {
            Some(canonical_rotation(case.inlet_velocity)?)
        } else {
            None
        };
        Ok(FeatureContext {
            variant,
            trail: trailing_edge(case),
            rotation,
            sine: basis.sine(),
            sine_table: SineTable::new(&basis.sine()),
            harmonics: basis.harmonics(),
        })
    }

    pub fn node_width(&self) -> usize {
        self.variant.node_width(self.sine.n_basis)
    }

    pub fn edge_width(&self) -> usize {
        self.variant.edge_width(self.sine.n_basis)
    }

    fn push_sine_vec(&self, p: Point2, out: &mut Vec<f64>) {
        self.sine_table.embed_into(p.x, out);
        self.sine_table.embed_into(p.y, out);
    }

    fn push_harmonic_angles(&self, p: Point2, out: &mut Vec<f64>) {
        for a in four_axis_angles(p) {
            sph_embed_into(a, &self.harmonics, out);
        }
    }

    /// Appends the node features of point `i`.
    pub fn node_features_into(&self, case: &MeshCase, i: usize, out: &mut Vec<f64>) {
        let v = self.variant;
        let x = case.points[i];
        let n = case.normals[i];
        let vinf = case.inlet_velocity;
        let d = case.wall_distance[i];
        out.extend_from_slice(&[x.x, x.y, n.x, n.y, vinf.x, vinf.y, d, x.norm()]);
        if !v.has_trail() {
            return;
        }
        let xt = x - self.trail;
        out.extend_from_slice(&[xt.x, xt.y, xt.norm()]);
        if v.has_raw_angles() {
            out.extend_from_slice(&four_axis_angles(x));
            out.extend_from_slice(&four_axis_angles(xt));
        }
        if v.has_harmonics() {
            self.push_harmonic_angles(x, out);
            self.push_harmonic_angles(xt, out);
        }
        if v.has_sine() {
            self.push_sine_vec(x, out);
            self.push_sine_vec(xt, out);
            self.sine_table.embed_into(d, out);
            self.sine_table.embed_into(x.norm(), out);
            self.sine_table.embed_into(xt.norm(), out);
        }
        if let Some(r) = self.rotation.filter(|_| v.has_canon()) {
            let rx = r.apply(x);
            let rxt = r.apply(xt);
            let rn = r.apply(n);
            out.extend_from_slice(&[rx.x, rx.y, rxt.x, rxt.y]);
            self.push_sine_vec(rx, out);
            self.push_sine_vec(rxt, out);
            out.extend_from_slice(&[rn.x, rn.y]);
            self.push_harmonic_angles(rx, out);
            self.push_harmonic_angles(rxt, out);
        }
    }

    /// Appends the features of the edge from `y` to `x`.
    pub fn edge_features_into(&self, y: Point2, x: Point2, out: &mut Vec<f64>) {
        let v = self.variant;
        let g = edge_geometry(y, x);
        out.extend_from_slice(&g);
        let disp = Point2::new(g[0], g[1]);
        if v.has_raw_angles() {
            out.extend_from_slice(&four_axis_angles(disp));
        }
        if v.has_harmonics() {
            self.push_harmonic_angles(disp, out);
        }
        if v.has_sine() {
            self.sine_table.embed_into(g[2], out);
            self.push_sine_vec(disp, out);
        }
        if let Some(r) = self.rotation.filter(|_| v.has_canon()) {
            let rd = r.apply(disp);
            out.extend_from_slice(&[rd.x, rd.y]);
            self.push_sine_vec(rd, out);
            self.push_harmonic_angles(rd, out);
        }
    }

    pub fn node_features(&self, case: &MeshCase, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.node_width());
        self.node_features_into(case, i, &mut out);
        out
    }

    pub fn edge_features(&self, case: &MeshCase, y: usize, x: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.edge_width());
        self.edge_features_into(case.points[y], case.points[x], &mut out);
        out
    }

    /// Row-major `indices.len() × node_width` block.
    pub fn node_matrix(&self, case: &MeshCase, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.node_width());
        for &i in indices {
            self.node_features_into(case, i, &mut out);
        }
        out
    }

    /// Row-major `edges × edge_width` block for edges `src[e] → dst[e]`
    /// given as case point indices.
    pub fn edge_matrix(&self, case: &MeshCase, src: &[usize], dst: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(src.len() * self.edge_width());
        for (&s, &d) in src.iter().zip(dst) {
            self.edge_features_into(case.points[s], case.points[d], &mut out);
        }
        out
    }
}

/// Named feature blocks and their column ranges for a variant.
pub fn node_blocks(
    variant: FeatureVariant,
    n_basis: usize,
) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let mut blocks = Vec::new();
    let mut at = 0;
    let mut push = |name, w: usize| {
        blocks.push((name, at..at + w));
        at += w;
    };
    push("base", 8);
    if variant.has_trail() {
        push("trail", 3);
    }
    if variant.has_raw_angles() {
        push("angles", 8);
    }
    if variant.has_harmonics() {
        push("harmonic", 16 * n_basis);
    }
    if variant.has_sine() {
        push("sine", 14 * n_basis);
    }
    if variant.has_canon() {
        push("canon", 6 + 24 * n_basis);
    }
    blocks
}

pub fn edge_blocks(
    variant: FeatureVariant,
    n_basis: usize,
) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let mut blocks = Vec::new();
    let mut at = 0;
    let mut push = |name, w: usize| {
        blocks.push((name, at..at + w));
        at += w;
    };
    push("geometry", 3);
    if variant.has_raw_angles() {
        push("angles", 4);
    }
    if variant.has_harmonics() {
        push("harmonic", 8 * n_basis);
    }
    if variant.has_sine() {
        push("sine", 6 * n_basis);
    }
    if variant.has_canon() {
        push("canon", 2 + 12 * n_basis);
    }
    blocks
}

/// `sign(p) · ln(|p| + 1)`.
pub fn log_pressure(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p.signum() * p.abs().ln_1p()
    }
}

/// `sign(q) · (exp(|q|) − 1)`.
pub fn inv_log_pressure(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        q.signum() * q.abs().exp_m1()
    }
}

/// Target standardization fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNormalizer {
    pub field: FieldId,
    pub mean: f64,
    pub std: f64,
    pub log_transform: bool,
}

impl FieldNormalizer {
    /// Population mean and standard deviation of the (optionally
    /// log-transformed) values.
    pub fn fit(values: &[f64], field: FieldId, log_transform: bool) -> Result<Self> {
        let log_transform = log_transform && field == FieldId::Pressure;
        if values.len() < 2 {
            return Err(Error::Config("normalizer needs at least two values".into()));
        }
        let tf = |v: f64| if log_transform { log_pressure(v) } else { v };
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| tf(v)).sum::<f64>() / n;
        let var = values.iter().map(|&v| (tf(v) - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::Numerical(format!("{field}: zero variance")));
        }
        Ok(FieldNormalizer {
            field,
            mean,
            std,
            log_transform,
        })
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        let v = if self.log_transform {
            log_pressure(raw)
        } else {
            raw
        };
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        let v = z * self.std + self.mean;
        if self.log_transform {
            inv_log_pressure(v)
        } else {
            v
        }
    }
}

/// Running per-column sums for fitting a [`ColumnScaler`].
#[derive(Debug, Clone)]
pub struct ColumnStats {
    width: usize,
    count: usize,
    shift: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl ColumnStats {
    pub fn new(width: usize) -> Self {
        ColumnStats {
            width,
            count: 0,
            shift: Vec::new(),
            sum: vec![0.0; width],
            sum_sq: vec![0.0; width],
        }
    }

    /// Adds every row of a row-major block.
    pub fn push_rows(&mut self, data: &[f64]) {
        assert_eq!(data.len() % self.width.max(1), 0, "block is not whole rows");
        for row in data.chunks_exact(self.width.max(1)) {
            if self.shift.is_empty() {
                // sums are taken around the first row to limit cancellation
                self.shift = row.to_vec();
            }
            for (c, &v) in row.iter().enumerate() {
                let d = v - self.shift[c];
                self.sum[c] += d;
                self.sum_sq[c] += d * d;
            }
            self.count += 1;
        }
    }

    pub fn finish(&self) -> ColumnScaler {
        if self.count == 0 {
            return ColumnScaler::identity(self.width);
        }
        let n = self.count as f64;
        let mut mean = Vec::with_capacity(self.width);
        let mut inv_std = Vec::with_capacity(self.width);
        for c in 0..self.width {
            let m = self.sum[c] / n;
            let var = (self.sum_sq[c] / n - m * m).max(0.0);
            let std = var.sqrt();
            mean.push(self.shift[c] + m);
            // constant columns are only centred
            inv_std.push(if std > 1e-12 { 1.0 / std } else { 1.0 });
        }
        ColumnScaler { mean, inv_std }
    }
}

/// Per-column standardization `(v - mean) * inv_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl ColumnScaler {
    pub fn identity(width: usize) -> Self {
        ColumnScaler {
            mean: vec![0.0; width],
            inv_std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes a row-major block in place.
    pub fn apply(&self, data: &mut [f64]) {
        let w = self.width().max(1);
        for row in data.chunks_exact_mut(w) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
    }
}

/// Input standardization fitted on training data: one scaler for node
/// features and one shared by every edge type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub node: ColumnScaler,
    pub edge: ColumnScaler,
}

impl InputScaler {
    pub fn identity(node_width: usize, edge_width: usize) -> Self {
        InputScaler {
            node: ColumnScaler::identity(node_width),
            edge: ColumnScaler::identity(edge_width),
        }
    }
}
