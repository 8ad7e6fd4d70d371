//! Coordinate frames: leading/trailing edge, region partition, polar
//! angles on four axes and the inlet-aligned rotation.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::mesh::{extreme_surface_index, MeshCase, Point2};
use crate::{Error, Result};

/// Point coordinates in the leading- and trailing-edge frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFeatures {
    pub lead_coords: Point2,
    pub trail_coords: Point2,
    pub lead_norm: f64,
    pub trail_norm: f64,
}

impl FrameFeatures {
    /// `x` must already be in the leading-edge frame.
    pub fn new(x: Point2, trail_origin: Point2) -> Self {
        let t = x - trail_origin;
        FrameFeatures {
            lead_coords: x,
            trail_coords: t,
            lead_norm: x.norm(),
            trail_norm: t.norm(),
        }
    }
}

/// Rightmost surface point; lowest index wins ties.
pub fn trailing_edge(case: &MeshCase) -> Point2 {
    case.points[trailing_edge_index(case)]
}

pub fn trailing_edge_index(case: &MeshCase) -> usize {
    extreme_surface_index(&case.points, &case.surface_idx, |a, b| a > b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Freestream,
    OverAirfoil,
    Downstream,
}

/// Splits the plane along x. The over-airfoil band is closed at both ends.
pub fn classify_region(x: Point2, lead: Point2, trail: Point2) -> Region {
    if x.x < lead.x {
        Region::Freestream
    } else if x.x > trail.x {
        Region::Downstream
    } else {
        Region::OverAirfoil
    }
}

/// Polar angle in `[0, 2π)`; the origin maps to 0.
pub fn polar_angle(p: Point2) -> f64 {
    if p.x == 0.0 && p.y == 0.0 {
        return 0.0;
    }
    let a = p.y.atan2(p.x);
    if a < 0.0 {
        // a + TAU can round up to exactly TAU for tiny negative a
        let w = a + TAU;
        if w >= TAU {
            0.0
        } else {
            w
        }
    } else {
        a
    }
}

/// Angles of `p` rotated by 0, 90, 180 and 270 degrees counterclockwise.
pub fn four_axis_angles(p: Point2) -> [f64; 4] {
    let r1 = p.rot90();
    let r2 = r1.rot90();
    let r3 = r2.rot90();
    [
        polar_angle(p),
        polar_angle(r1),
        polar_angle(r2),
        polar_angle(r3),
    ]
}

/// A proper 2-D rotation, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation2 {
    pub m: [[f64; 2]; 2],
}

impl Rotation2 {
    pub const IDENTITY: Rotation2 = Rotation2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y,
            self.m[1][0] * p.x + self.m[1][1] * p.y,
        )
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Largest entry of `|RᵀR − I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let m = &self.m;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let dot = m[0][i] * m[0][j] + m[1][i] * m[1][j];
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

/// Rotation taking `v_inf` onto the positive x-axis.
pub fn canonical_rotation(v_inf: Point2) -> Result<Rotation2> {
    let speed = v_inf.norm();
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::Numerical("cannot canonicalize null velocity".into()));
    }
    let (c, s) = (v_inf.x / speed, v_inf.y / speed);
    Ok(Rotation2 {
        m: [[c, s], [-s, c]],
    })
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Exact distance from `p` to an open polyline. Pass the first vertex again
/// at the end for a closed contour.
pub fn wall_distance_polyline(p: Point2, polyline: &[Point2]) -> f64 {
    assert!(polyline.len() >= 2, "polyline needs at least two vertices");
    polyline
        .windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}
