//! Synthetic cases: Joukowski airfoils in incompressible potential flow.
//!
//! The body is the Joukowski image `z = ζ + 1/ζ` of a circle through
//! `ζ = 1` centred at `(−thickness, camber)`. Circulation is fixed by the
//! Kutta condition at the trailing-edge cusp, pressure comes from Bernoulli
//! (unit density, gauge relative to the freestream) and the turbulent
//! viscosity is an analytic wake proxy along the inlet direction, since
//! potential flow has none.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{canonical_rotation, wall_distance_polyline};
use crate::mesh::{MeshCase, Point2};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result};

const WAKE_WIDTH: f64 = 0.1;
const NEAR_RADIUS: f64 = 5.0;
const FAR_RADIUS: f64 = 50.0;
const FAR_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoukowskiParams {
    /// Leftward offset of the circle centre; controls thickness.
    pub thickness: f64,
    /// Upward offset of the circle centre; controls camber.
    pub camber: f64,
}

impl JoukowskiParams {
    pub fn centre(&self) -> Complex64 {
        Complex64::new(-self.thickness, self.camber)
    }

    pub fn radius(&self) -> f64 {
        (Complex64::new(1.0, 0.0) - self.centre()).norm()
    }

    fn trailing_angle(&self) -> f64 {
        (Complex64::new(1.0, 0.0) - self.centre()).arg()
    }
}

/// Analytic flow around one airfoil, expressed in chord-normalized
/// coordinates with the origin at `origin` (a Joukowski-plane point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialFlow {
    pub shape: JoukowskiParams,
    pub speed: f64,
    pub alpha: f64,
    pub circulation: f64,
    /// Joukowski-plane position of the physical origin.
    pub origin: Complex64,
    /// Joukowski-plane length of one physical unit.
    pub scale: f64,
}

impl PotentialFlow {
    pub fn new(shape: JoukowskiParams, v_inf: Point2) -> Result<Self> {
        if !(shape.thickness > 0.0) || !shape.thickness.is_finite() || !shape.camber.is_finite() {
            return Err(Error::Degenerate(format!(
                "Joukowski thickness must be positive (got {})",
                shape.thickness
            )));
        }
        let speed = v_inf.norm();
        let alpha = v_inf.y.atan2(v_inf.x);
        let r = shape.radius();
        let circulation = 4.0 * PI * r * speed * (alpha - shape.trailing_angle()).sin();

        // chord from a dense sweep of the contour
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for j in 0..8192 {
            let z = joukowski(shape.centre() + Complex64::from_polar(r, TAU * j as f64 / 8192.0));
            x_min = x_min.min(z.re);
            x_max = x_max.max(z.re);
        }
        Ok(PotentialFlow {
            shape,
            speed,
            alpha,
            circulation,
            origin: Complex64::new(x_min, 0.0),
            scale: x_max - x_min,
        })
    }

    pub fn to_plane(&self, p: Point2) -> Complex64 {
        self.origin + Complex64::new(p.x, p.y) * self.scale
    }

    pub fn from_plane(&self, z: Complex64) -> Point2 {
        let q = (z - self.origin) / self.scale;
        Point2::new(q.re, q.im)
    }

    /// Exterior pre-image of a Joukowski-plane point, if it lies outside the body.
    pub fn exterior_zeta(&self, z: Complex64) -> Option<Complex64> {
        let root = (z * z - 4.0).sqrt();
        let a = (z + root) / 2.0;
        let b = (z - root) / 2.0;
        let c = self.shape.centre();
        let r = self.shape.radius();
        let zeta = if (a - c).norm() >= (b - c).norm() {
            a
        } else {
            b
        };
        ((zeta - c).norm() > r).then_some(zeta)
    }

    /// Velocity at a circle-plane point.
    pub fn velocity_at_zeta(&self, zeta: Complex64) -> Point2 {
        let c = self.shape.centre();
        let r = self.shape.radius();
        let i = Complex64::i();
        let s = zeta - c;
        let e = Complex64::from_polar(1.0, self.alpha);
        let w_zeta =
            self.speed * (e.conj() - r * r * e / (s * s)) + i * self.circulation / (TAU * s);
        let dz = Complex64::new(1.0, 0.0) - 1.0 / (zeta * zeta);
        let w = w_zeta / dz;
        Point2::new(w.re, -w.im)
    }

    /// Velocity at a physical point; `None` inside the body.
    pub fn velocity(&self, p: Point2) -> Option<Point2> {
        self.exterior_zeta(self.to_plane(p))
            .map(|zeta| self.velocity_at_zeta(zeta))
    }

    /// Gauge pressure from Bernoulli with unit density.
    pub fn pressure_from_velocity(&self, u: Point2) -> f64 {
        0.5 * (self.speed * self.speed - u.norm_sq())
    }

    pub fn inlet(&self) -> Point2 {
        Point2::new(self.speed * self.alpha.cos(), self.speed * self.alpha.sin())
    }
}

fn joukowski(zeta: Complex64) -> Complex64 {
    zeta + 1.0 / zeta
}

/// Wake-shaped stand-in for turbulent viscosity, in the frame aligned with
/// the inlet velocity.
pub fn wake_proxy(p: Point2, v_inf: Point2) -> f64 {
    let Ok(r) = canonical_rotation(v_inf) else {
        return 0.0;
    };
    let c = r.apply(p);
    let g = (-(c.y / WAKE_WIDTH).powi(2)).exp();
    g * c.x.max(0.0) / (1.0 + c.x.max(0.0))
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let orient = |p: Point2, q: Point2, r: Point2| {
        let v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let (o1, o2, o3, o4) = (
        orient(a, b, c),
        orient(a, b, d),
        orient(c, d, a),
        orient(c, d, b),
    );
    o1 * o2 < 0 && o3 * o4 < 0
}

fn closed_polygon_self_intersects(poly: &[Point2]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 2..n {
            if (j + 1) % n == i {
                continue;
            }
            if segments_cross(a, b, poly[j], poly[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Builds one synthetic case with `n_surface` body points followed by
/// `n_volume` field points. The output is already recentred.
pub fn generate_synthetic(
    case_id: impl Into<String>,
    shape: JoukowskiParams,
    v_inf: Point2,
    n_volume: usize,
    n_surface: usize,
    seed: u64,
) -> Result<MeshCase> {
    if n_surface < 32 {
        return Err(Error::Config(format!(
            "need at least 32 surface points, got {n_surface}"
        )));
    }
    if !(v_inf.norm() > 0.0) {
        return Err(Error::Config("inlet velocity must be nonzero".into()));
    }
    let mut flow = PotentialFlow::new(shape, v_inf)?;
    let c = shape.centre();
    let r = shape.radius();
    let phi_te = shape.trailing_angle();

    // surface samples straddle the cusp so it is never hit exactly
    let zetas: Vec<Complex64> = (0..n_surface)
        .map(|j| c + Complex64::from_polar(r, phi_te + TAU * (j as f64 + 0.5) / n_surface as f64))
        .collect();
    let plane: Vec<Complex64> = zetas.iter().map(|&z| joukowski(z)).collect();
    let lead = (0..n_surface)
        .min_by(|&a, &b| plane[a].re.total_cmp(&plane[b].re).then(a.cmp(&b)))
        .unwrap_or(0);
    flow.origin = plane[lead];

    let surface: Vec<Point2> = plane.iter().map(|&z| flow.from_plane(z)).collect();
    if closed_polygon_self_intersects(&surface) {
        return Err(Error::Degenerate("self-intersecting contour".into()));
    }
    let mut normals = Vec::with_capacity(n_surface);
    for (j, &zeta) in zetas.iter().enumerate() {
        let phi = phi_te + TAU * (j as f64 + 0.5) / n_surface as f64;
        // dz/dφ; counterclockwise contour, so the outward normal is the
        // tangent turned clockwise
        let t = (Complex64::new(1.0, 0.0) - 1.0 / (zeta * zeta))
            * Complex64::i()
            * Complex64::from_polar(r, phi);
        let len = t.norm();
        if !(len > 0.0) {
            return Err(Error::Degenerate(format!(
                "zero tangent at surface point {j}"
            )));
        }
        normals.push(Point2::new(t.im / len, -t.re / len));
    }

    let mut points = surface.clone();
    let mut all_normals = normals;
    let mut wall = vec![0.0; n_surface];
    let mut targets = Vec::with_capacity(n_surface + n_volume);
    for &zeta in &zetas {
        let u = flow.velocity_at_zeta(zeta);
        targets.push([u.x, u.y, flow.pressure_from_velocity(u), 0.0]);
    }
    for (t, &p) in targets.iter_mut().zip(&surface) {
        t[3] = wake_proxy(p, v_inf);
    }

    let mut closed = surface.clone();
    closed.push(surface[0]);
    let centre = Point2::new(0.5, 0.0);
    let mut rng = stream_rng(seed, Stream::Generate, 0, 0);
    let shift: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
    let n_far = ((n_volume as f64) * FAR_FRACTION).round() as usize;
    let n_near = n_volume - n_far;

    let mut push_point = |p: Point2, points: &mut Vec<Point2>| -> bool {
        let Some(zeta) = flow.exterior_zeta(flow.to_plane(p)) else {
            return false;
        };
        let d = wall_distance_polyline(p, &closed);
        if !(d > 0.0) {
            return false;
        }
        let u = flow.velocity_at_zeta(zeta);
        points.push(p);
        all_normals.push(Point2::ZERO);
        wall.push(d);
        targets.push([
            u.x,
            u.y,
            flow.pressure_from_velocity(u),
            wake_proxy(p, v_inf),
        ]);
        true
    };

    let mut k: u64 = 1;
    let mut added = 0;
    while added < n_near {
        let u1 = (radical_inverse(k, 2) + shift[0]).fract();
        let u2 = (radical_inverse(k, 3) + shift[1]).fract();
        k += 1;
        let rad = NEAR_RADIUS * u1 * u1;
        let th = TAU * u2;
        let p = centre + Point2::new(th.cos(), th.sin()) * rad;
        if push_point(p, &mut points) {
            added += 1;
        }
    }
    let mut k: u64 = 1;
    added = 0;
    while added < n_far {
        let u1 = (radical_inverse(k, 5) + shift[2]).fract();
        let u2 = (radical_inverse(k, 7) + shift[3]).fract();
        k += 1;
        let rad = NEAR_RADIUS * (FAR_RADIUS / NEAR_RADIUS).powf(u1);
        let th = TAU * u2;
        let p = centre + Point2::new(th.cos(), th.sin()) * rad;
        if push_point(p, &mut points) {
            added += 1;
        }
    }

    MeshCase::new(
        case_id,
        points,
        (0..n_surface).collect(),
        all_normals,
        v_inf,
        wall,
        Some(targets),
    )
}

/// Ranges for randomized datasets. Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    pub thickness: (f64, f64),
    pub camber: (f64, f64),
    pub speed: (f64, f64),
    pub angle_of_attack: (f64, f64),
    pub n_volume: usize,
    pub n_surface: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            count: 8,
            thickness: (0.06, 0.16),
            camber: (0.0, 0.08),
            speed: (0.8, 1.2),
            angle_of_attack: (-5.0, 10.0),
            n_volume: 8000,
            n_surface: 256,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(ordered(self.thickness)
            && ordered(self.camber)
            && ordered(self.speed)
            && ordered(self.angle_of_attack))
        {
            return Err(Error::Config(
                "dataset ranges must be finite with lo <= hi".into(),
            ));
        }
        if self.thickness.0 <= 0.0 {
            return Err(Error::Config("thickness must be positive".into()));
        }
        if self.speed.0 <= 0.0 {
            return Err(Error::Config("speed must be positive".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// `spec.count` cases named `case_0000`, `case_0001`, ...; case `i` depends
/// only on `(seed, i)`.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Vec<MeshCase>> {
    spec.validate()?;
    (0..spec.count)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Generate, 1, i as u64);
            let shape = JoukowskiParams {
                thickness: draw(&mut rng, spec.thickness),
                camber: draw(&mut rng, spec.camber),
            };
            let speed = draw(&mut rng, spec.speed);
            let aoa = draw(&mut rng, spec.angle_of_attack).to_radians();
            let v = Point2::new(speed * aoa.cos(), speed * aoa.sin());
            let case_seed: u64 = rng.gen();
            generate_synthetic(
                format!("case_{i:04}"),
                shape,
                v,
                spec.n_volume,
                spec.n_surface,
                case_seed,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> JoukowskiParams {
        JoukowskiParams {
            thickness: 0.1,
            camber: 0.05,
        }
    }

    #[test]
    fn kutta_condition_holds_at_cusp() {
        let f = PotentialFlow::new(shape(), Point2::new(1.0, 0.1)).unwrap();
        let c = shape().centre();
        let r = shape().radius();
        let i = Complex64::i();
        let e = Complex64::from_polar(1.0, f.alpha);
        let s = Complex64::new(1.0, 0.0) - c;
        let w = f.speed * (e.conj() - r * r * e / (s * s)) + i * f.circulation / (TAU * s);
        assert!(w.norm() < 1e-12, "{w}");
    }

    #[test]
    fn symmetric_airfoil_mirror_symmetry() {
        let sym = JoukowskiParams {
            thickness: 0.12,
            camber: 0.0,
        };
        let f = PotentialFlow::new(sym, Point2::new(1.0, 0.0)).unwrap();
        for &(x, y) in &[(0.3, 1.2), (1.5, 0.7), (-2.6, 0.05), (4.0, 3.0)] {
            let z = Complex64::new(x, y);
            let a = f.velocity_at_zeta(f.exterior_zeta(z).unwrap());
            let b = f.velocity_at_zeta(f.exterior_zeta(z.conj()).unwrap());
            assert!((a.x - b.x).abs() < 1e-12, "{a:?} {b:?}");
            assert!((a.y + b.y).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn far_field_recovers_freestream() {
        let v = Point2::new(1.2, 0.3);
        let f = PotentialFlow::new(shape(), v).unwrap();
        for k in 0..16 {
            let th = TAU * k as f64 / 16.0;
            let p = Point2::new(0.5 + 50.0 * th.cos(), 50.0 * th.sin());
            let u = f.velocity(p).unwrap();
            assert!((u - v).norm() / v.norm() < 0.01);
            assert!(f.pressure_from_velocity(u).abs() < 0.02 * v.norm_sq());
        }
    }

    #[test]
    fn generated_case_invariants() {
        let case = generate_synthetic("t", shape(), Point2::new(1.0, 0.15), 2000, 64, 1).unwrap();
        assert_eq!(case.len(), 2064);
        assert_eq!(case.surface_idx.len(), 64);
        let lead = case.points[case.leading_edge_index()];
        assert_eq!(lead, Point2::ZERO);
        for &i in &case.surface_idx {
            assert_eq!(case.wall_distance[i], 0.0);
        }
        // outward normals point away from the chord midpoint on average
        let outward = case
            .surface_idx
            .iter()
            .filter(|&&i| case.normals[i].dot(case.points[i] - Point2::new(0.5, 0.0)) > 0.0)
            .count();
        assert!(outward > 56, "{outward}");
    }

    #[test]
    fn rejects_degenerate_shapes() {
        let bad = JoukowskiParams {
            thickness: -0.1,
            camber: 0.0,
        };
        assert!(matches!(
            generate_synthetic("x", bad, Point2::new(1.0, 0.0), 100, 64, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(generate_synthetic("x", shape(), Point2::new(1.0, 0.0), 100, 16, 0).is_err());
    }

    #[test]
    fn halton_is_in_unit_interval() {
        for i in 1..1000 {
            let v = radical_inverse(i, 3);
            assert!((0.0..1.0).contains(&v));
        }
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }
}
