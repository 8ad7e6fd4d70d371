//! Browser bindings: analytic flow rasters, basis curves and the
//! surface-to-volume neighborhood of a clicked point.

use wasm_bindgen::prelude::*;

use geompnn::basis::{sine_embed, sph_embed, HarmonicTables, SineBasisConfig, DEFAULT_N_BASIS};
use geompnn::geom::canonical_rotation;
use geompnn::graph::KdTree2;
use geompnn::synth::{generate_synthetic, JoukowskiParams, PotentialFlow};
use geompnn::Point2;

fn js_err(e: geompnn::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn inlet(speed: f64, aoa_deg: f64) -> Point2 {
    let a = aoa_deg.to_radians();
    Point2::new(speed * a.cos(), speed * a.sin())
}

/// Row-major `height × width` raster over `[x0, x1] × [y0, y1]`, top row
/// first. `quantity` 0 is speed, 1 is gauge pressure. Points inside the
/// body are NaN.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn flow_raster(
    thickness: f64,
    camber: f64,
    speed: f64,
    aoa_deg: f64,
    quantity: u32,
    width: usize,
    height: usize,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> Result<Vec<f32>, JsValue> {
    raster(
        thickness, camber, speed, aoa_deg, quantity, width, height, x0, x1, y0, y1,
    )
    .map_err(js_err)
}

#[allow(clippy::too_many_arguments)]
fn raster(
    thickness: f64,
    camber: f64,
    speed: f64,
    aoa_deg: f64,
    quantity: u32,
    width: usize,
    height: usize,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> geompnn::Result<Vec<f32>> {
    let flow = PotentialFlow::new(JoukowskiParams { thickness, camber }, inlet(speed, aoa_deg))?;
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let y = y1 - (y1 - y0) * (r as f64 + 0.5) / height as f64;
        for c in 0..width {
            let x = x0 + (x1 - x0) * (c as f64 + 0.5) / width as f64;
            let v = match flow.velocity(Point2::new(x, y)) {
                Some(u) if quantity == 1 => flow.pressure_from_velocity(u),
                Some(u) => u.norm(),
                None => f64::NAN,
            };
            out.push(v as f32);
        }
    }
    Ok(out)
}

/// `samples × 2n` sine embeddings of lengths evenly spaced on `[0, max_len]`.
#[wasm_bindgen]
pub fn sine_curves(
    spacing: f64,
    domain: f64,
    max_len: f64,
    samples: usize,
) -> Result<Vec<f64>, JsValue> {
    sines(spacing, domain, max_len, samples).map_err(js_err)
}

fn sines(spacing: f64, domain: f64, max_len: f64, samples: usize) -> geompnn::Result<Vec<f64>> {
    let cfg = SineBasisConfig::new(DEFAULT_N_BASIS, spacing, domain)?;
    let step = max_len / samples.saturating_sub(1).max(1) as f64;
    Ok((0..samples)
        .flat_map(|i| sine_embed(i as f64 * step, &cfg))
        .collect())
}

/// `samples × 2n` harmonic embeddings of angles evenly spaced on `[−π, π]`.
#[wasm_bindgen]
pub fn harmonic_curves(n_basis: usize, factorial_norm: bool, samples: usize) -> Vec<f64> {
    let tables = HarmonicTables::build(n_basis.clamp(1, 31), factorial_norm);
    let step = std::f64::consts::TAU / samples.saturating_sub(1).max(1) as f64;
    (0..samples)
        .flat_map(|i| sph_embed(-std::f64::consts::PI + i as f64 * step, &tables))
        .collect()
}

/// One synthetic case with a spatial index over its surface.
#[wasm_bindgen]
pub struct DemoCase {
    points: Vec<Point2>,
    n_surface: usize,
    frame: [f64; 4],
    surface_tree: KdTree2,
}

#[wasm_bindgen]
impl DemoCase {
    #[wasm_bindgen(constructor)]
    pub fn new(
        thickness: f64,
        camber: f64,
        speed: f64,
        aoa_deg: f64,
        n_volume: usize,
        n_surface: usize,
        seed: u64,
    ) -> Result<DemoCase, JsValue> {
        Self::build(
            JoukowskiParams { thickness, camber },
            inlet(speed, aoa_deg),
            n_volume,
            n_surface,
            seed,
        )
        .map_err(js_err)
    }

    pub fn n_surface(&self) -> usize {
        self.n_surface
    }

    /// Interleaved `x, y` of every point; the surface comes first.
    pub fn coords(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// Indices of the `k` surface points nearest to `(x, y)`.
    pub fn surface_neighbors(&self, x: f64, y: f64, k: usize) -> Vec<u32> {
        self.surface_tree
            .knn(Point2::new(x, y), k.min(self.n_surface))
            .into_iter()
            .map(|i| i as u32)
            .collect()
    }

    /// Row-major rotation taking the inlet velocity onto the x-axis.
    pub fn canonical_frame(&self) -> Vec<f64> {
        self.frame.to_vec()
    }
}

impl DemoCase {
    fn build(
        shape: JoukowskiParams,
        v: Point2,
        n_volume: usize,
        n_surface: usize,
        seed: u64,
    ) -> geompnn::Result<DemoCase> {
        let case = generate_synthetic("demo", shape, v, n_volume, n_surface, seed)?;
        let r = canonical_rotation(case.inlet_velocity)?;
        let surface: Vec<Point2> = case.surface_idx.iter().map(|&i| case.points[i]).collect();
        Ok(DemoCase {
            surface_tree: KdTree2::build(&surface),
            n_surface: surface.len(),
            frame: [r.m[0][0], r.m[0][1], r.m[1][0], r.m[1][1]],
            points: case.points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_marks_body_and_freestream() {
        let v = raster(0.1, 0.03, 1.0, 4.0, 0, 64, 32, -1.0, 2.0, -0.75, 0.75).unwrap();
        assert_eq!(v.len(), 64 * 32);
        assert!(v.iter().any(|x| x.is_nan()));
        let far = raster(0.1, 0.03, 1.0, 4.0, 0, 1, 1, 40.0, 40.0, 40.0, 40.0).unwrap();
        assert!((far[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn curves_have_expected_shape() {
        assert_eq!(
            sines(0.01, 100.0, 1.0, 50).unwrap().len(),
            50 * 2 * DEFAULT_N_BASIS
        );
        assert_eq!(harmonic_curves(8, false, 40).len(), 40 * 16);
        assert!(sines(0.0, 100.0, 1.0, 5).is_err());
    }

    #[test]
    fn neighbors_are_surface_points() {
        let shape = JoukowskiParams {
            thickness: 0.1,
            camber: 0.02,
        };
        let case = DemoCase::build(shape, inlet(1.0, 5.0), 200, 64, 3).unwrap();
        let nb = case.surface_neighbors(0.5, 0.3, 4);
        assert_eq!(nb.len(), 4);
        assert!(nb.iter().all(|&i| (i as usize) < case.n_surface()));
        let f = case.canonical_frame();
        assert!((f[0] * f[3] - f[1] * f[2] - 1.0).abs() < 1e-12);
    }
}
