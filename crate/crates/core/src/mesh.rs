//! Simulation-case data model.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// A point or vector in the chord-normalized plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn dist_sq(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counterclockwise quarter turn.
    pub fn rot90(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// The four predicted fields, one model each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldId {
    VelX,
    VelY,
    Pressure,
    TurbVisc,
}

impl FieldId {
    pub const ALL: [FieldId; 4] = [
        FieldId::VelX,
        FieldId::VelY,
        FieldId::Pressure,
        FieldId::TurbVisc,
    ];

    /// Column of this field in a target row `[ux, uy, p, nut]`.
    pub fn column(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            FieldId::VelX => "ux",
            FieldId::VelY => "uy",
            FieldId::Pressure => "p",
            FieldId::TurbVisc => "nut",
        }
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for FieldId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ux" | "velx" => Ok(FieldId::VelX),
            "uy" | "vely" => Ok(FieldId::VelY),
            "p" | "pressure" => Ok(FieldId::Pressure),
            "nut" | "turbvisc" => Ok(FieldId::TurbVisc),
            other => Err(Error::Config(format!("unknown field '{other}'"))),
        }
    }
}

/// One simulation instance: volume mesh, surface subset and per-point data.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCase {
    pub case_id: String,
    pub points: Vec<Point2>,
    pub surface_idx: Vec<usize>,
    pub normals: Vec<Point2>,
    pub inlet_velocity: Point2,
    pub wall_distance: Vec<f64>,
    /// Per-point `[ux, uy, p, nut]`.
    pub targets: Option<Vec<[f64; 4]>>,
}

impl MeshCase {
    /// Builds a case and checks every invariant.
    pub fn new(
        case_id: impl Into<String>,
        points: Vec<Point2>,
        surface_idx: Vec<usize>,
        normals: Vec<Point2>,
        inlet_velocity: Point2,
        wall_distance: Vec<f64>,
        targets: Option<Vec<[f64; 4]>>,
    ) -> Result<Self> {
        let case = MeshCase {
            case_id: case_id.into(),
            points,
            surface_idx,
            normals,
            inlet_velocity,
            wall_distance,
            targets,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.normals.len() != n || self.wall_distance.len() != n {
            return Err(Error::Invariant(format!(
                "per-point arrays disagree: {} points, {} normals, {} distances",
                n,
                self.normals.len(),
                self.wall_distance.len()
            )));
        }
        if let Some(t) = &self.targets {
            if t.len() != n {
                return Err(Error::Invariant(format!(
                    "{} target rows for {} points",
                    t.len(),
                    n
                )));
            }
        }
        if self.surface_idx.is_empty() {
            return Err(Error::Invariant("surface set is empty".into()));
        }
        if !self.inlet_velocity.is_finite() {
            return Err(Error::Invariant("inlet velocity is not finite".into()));
        }
        let mut on_surface = vec![false; n];
        for &i in &self.surface_idx {
            if i >= n {
                return Err(Error::Invariant(format!("surface index {i} out of range")));
            }
            if on_surface[i] {
                return Err(Error::Invariant(format!("surface index {i} repeated")));
            }
            on_surface[i] = true;
        }
        for i in 0..n {
            if !self.points[i].is_finite() {
                return Err(Error::Invariant(format!("point {i} is not finite")));
            }
            let d = self.wall_distance[i];
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Invariant(format!(
                    "point {i}: negative wall distance"
                )));
            }
            let nrm = self.normals[i];
            if on_surface[i] {
                if (nrm.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(Error::Invariant(format!(
                        "point {i}: normal not unit length"
                    )));
                }
                if d > UNIT_TOL {
                    return Err(Error::Invariant(format!(
                        "point {i}: surface point with nonzero wall distance"
                    )));
                }
            } else if nrm != Point2::ZERO {
                return Err(Error::Invariant(format!(
                    "point {i}: off-surface point with nonzero normal"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn surface_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.points.len()];
        for &i in &self.surface_idx {
            mask[i] = true;
        }
        mask
    }

    pub fn surface_points(&self) -> Vec<Point2> {
        self.surface_idx.iter().map(|&i| self.points[i]).collect()
    }

    /// Raw target column for one field, if targets are present.
    pub fn field_values(&self, field: FieldId) -> Option<Vec<f64>> {
        let c = field.column();
        self.targets
            .as_ref()
            .map(|t| t.iter().map(|row| row[c]).collect())
    }

    /// Index of the leftmost surface point; lowest index wins ties.
    pub fn leading_edge_index(&self) -> usize {
        extreme_surface_index(&self.points, &self.surface_idx, |a, b| a < b)
    }

    /// Translates every point so the leading edge sits at the origin.
    pub fn recentre(&self) -> MeshCase {
        let lead = self.points[self.leading_edge_index()];
        let mut out = self.clone();
        for p in &mut out.points {
            *p = *p - lead;
        }
        out
    }

    /// Draws `min(n, |X|)` points uniformly without replacement and returns
    /// them together with every surface point.
    pub fn subsample(&self, n: usize, seed: u64) -> Subsample {
        let total = self.len();
        let n = n.max(1);
        let mut chosen = vec![false; total];
        if n >= total {
            chosen.iter_mut().for_each(|c| *c = true);
        } else {
            let mut rng = stream_rng(seed, Stream::Sampling, 0, 0);
            for i in sample(&mut rng, total, n) {
                chosen[i] = true;
            }
        }
        let mut keep = chosen.clone();
        for &i in &self.surface_idx {
            keep[i] = true;
        }
        let index_map: Vec<usize> = (0..total).filter(|&i| keep[i]).collect();
        let mut new_pos = vec![usize::MAX; total];
        for (pos, &i) in index_map.iter().enumerate() {
            new_pos[i] = pos;
        }
        let drawn: Vec<usize> = index_map
            .iter()
            .enumerate()
            .filter(|(_, &i)| chosen[i])
            .map(|(pos, _)| pos)
            .collect();
        let case = MeshCase {
            case_id: self.case_id.clone(),
            points: index_map.iter().map(|&i| self.points[i]).collect(),
            surface_idx: self.surface_idx.iter().map(|&i| new_pos[i]).collect(),
            normals: index_map.iter().map(|&i| self.normals[i]).collect(),
            inlet_velocity: self.inlet_velocity,
            wall_distance: index_map.iter().map(|&i| self.wall_distance[i]).collect(),
            targets: self
                .targets
                .as_ref()
                .map(|t| index_map.iter().map(|&i| t[i]).collect()),
        };
        Subsample {
            case,
            index_map,
            drawn,
        }
    }
}

/// Result of [`MeshCase::subsample`].
#[derive(Debug, Clone)]
pub struct Subsample {
    pub case: MeshCase,
    /// `index_map[j]` is the original index of point `j` of `case`.
    pub index_map: Vec<usize>,
    /// Positions in `case` that were drawn by the sampler. Surface points
    /// outside this list are present only to keep the surface complete.
    pub drawn: Vec<usize>,
}

impl Subsample {
    /// Original indices of the drawn points, ascending.
    pub fn drawn_original(&self) -> Vec<usize> {
        self.drawn.iter().map(|&j| self.index_map[j]).collect()
    }
}

pub(crate) fn extreme_surface_index(
    points: &[Point2],
    surface_idx: &[usize],
    better: impl Fn(f64, f64) -> bool,
) -> usize {
    let mut best = surface_idx[0];
    for &i in &surface_idx[1..] {
        let (xi, xb) = (points[i].x, points[best].x);
        if better(xi, xb) || (xi == xb && i < best) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MeshCase {
        // surface (1,0), (2,0.1); volume (0,5)
        MeshCase::new(
            "toy",
            vec![
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 5.0),
                Point2::new(2.0, 0.1),
            ],
            vec![0, 2],
            vec![Point2::new(-1.0, 0.0), Point2::ZERO, Point2::new(1.0, 0.0)],
            Point2::new(1.0, 0.0),
            vec![0.0, 4.9, 0.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn recentre_translates_to_leading_edge() {
        let c = toy().recentre();
        assert_eq!(c.points[0], Point2::new(0.0, 0.0));
        assert_eq!(c.points[2], Point2::new(1.0, 0.1));
        assert_eq!(c.points[1], Point2::new(-1.0, 5.0));
    }

    #[test]
    fn recentre_is_idempotent() {
        let once = toy().recentre();
        assert_eq!(once.recentre(), once);
    }

    #[test]
    fn leading_edge_tie_takes_lowest_index() {
        let c = MeshCase::new(
            "tie",
            vec![
                Point2::new(0.5, 1.0),
                Point2::new(0.0, 0.2),
                Point2::new(0.0, -0.2),
            ],
            vec![2, 1, 0],
            vec![
                Point2::new(0.0, 1.0),
                Point2::new(-1.0, 0.0),
                Point2::new(-1.0, 0.0),
            ],
            Point2::new(1.0, 0.0),
            vec![0.0; 3],
            None,
        )
        .unwrap();
        for _ in 0..3 {
            assert_eq!(c.leading_edge_index(), 1);
            assert_eq!(c.recentre().points[1], Point2::ZERO);
        }
    }

    #[test]
    fn rejects_bad_normal() {
        let mut c = toy();
        c.normals[0] = Point2::new(0.6, 0.9);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("normal not unit length"), "{err}");
    }

    #[test]
    fn rejects_duplicate_surface_index() {
        let mut c = toy();
        c.surface_idx = vec![0, 0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn subsample_identity_when_n_large() {
        let c = toy();
        let s = c.subsample(10, 3);
        assert_eq!(s.case, c);
        assert_eq!(s.index_map, vec![0, 1, 2]);
        assert_eq!(s.drawn, vec![0, 1, 2]);
    }

    #[test]
    fn field_parse_round_trip() {
        for f in FieldId::ALL {
            assert_eq!(f.short_name().parse::<FieldId>().unwrap(), f);
        }
        assert!("rho".parse::<FieldId>().is_err());
    }
}
