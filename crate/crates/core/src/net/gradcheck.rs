//! Central finite-difference checks of the tape and of whole models.
//!
//! Each check reduces the output to a scalar with fixed random weights,
//! perturbs every input scalar by ±ε and compares the difference quotient
//! with the tape gradient. The relative error of one entry is
//! `|a − n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
//! derivative is zero from being scored on roundoff alone.

use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Surf2VolInput, VolumeGraphInput};
use super::tape::{Pointwise, GELU};
use super::{
    Architecture, GeoModel, Matrix, ModelConfig, ModelInput, SurfaceGraphInput, Tape, Var,
};
use crate::Result;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed(self.tolerance))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed(self.tolerance))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let status = if r.passed(self.tolerance) {
                "ok"
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "{:<24} {:>6} entries  max rel err {:.3e}  {status}",
                r.name, r.checked, r.max_rel_error
            )?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} checks, {} failed (tolerance {:.0e})",
            self.results.len(),
            failed,
            self.tolerance
        )
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Checks `build` with respect to every entry of every input.
///
/// `build` receives the inputs as leaves and may return a node of any
/// shape; it is reduced with random weights drawn from `seed`.
pub fn check_function(
    name: &str,
    inputs: &[Matrix],
    seed: u64,
    eps: f64,
    build: impl Fn(&mut Tape, &[Var]) -> Var,
) -> CheckResult {
    let mut weights: Option<Rc<Matrix>> = None;
    let mut eval = |inputs: &[Matrix], want_grad: bool| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = build(&mut tape, &vars);
        let w = weights
            .get_or_insert_with(|| {
                let (r, c) = tape.value(out).shape();
                Rc::new(random_matrix(&mut ChaCha8Rng::seed_from_u64(seed), r, c))
            })
            .clone();
        let s = tape.weighted_sum(out, w);
        let value = tape.value(s).get(0, 0);
        let grads = want_grad.then(|| {
            let g = tape.backward(s);
            vars.iter()
                .zip(inputs)
                .map(|(&v, m)| {
                    g.get(v)
                        .cloned()
                        .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()))
                })
                .collect::<Vec<_>>()
        });
        (value, grads)
    };

    let (_, grads) = eval(inputs, true);
    let grads = grads.expect("gradients requested");
    let mut work = inputs.to_vec();
    let mut max_err = 0.0f64;
    let mut checked = 0;
    for (i, g) in grads.iter().enumerate() {
        for j in 0..g.data().len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let (plus, _) = eval(&work, false);
            work[i].data_mut()[j] = orig - eps;
            let (minus, _) = eval(&work, false);
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            max_err = max_err.max(rel_error(g.data()[j], numeric));
            checked += 1;
        }
    }
    CheckResult {
        name: name.to_string(),
        checked,
        max_rel_error: max_err,
    }
}

/// Checks a pointwise map on values spread over `[-3, 3]`.
pub fn check_pointwise(f: Pointwise, seed: u64) -> CheckResult {
    let x = Matrix::from_fn(4, 5, |r, c| -3.0 + 6.0 * (r * 5 + c) as f64 / 19.0 + 0.01);
    check_function(f.name, &[x], seed, DEFAULT_EPS, |t, v| t.map(v[0], f))
}

/// One check per tape primitive.
pub fn check_primitives(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = DEFAULT_EPS;
    let a = random_matrix(&mut rng, 5, 4);
    let b = random_matrix(&mut rng, 4, 3);
    let bias = random_matrix(&mut rng, 1, 4);
    let c = random_matrix(&mut rng, 5, 4);
    let d = random_matrix(&mut rng, 5, 2);
    let target: Rc<[f64]> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let col = random_matrix(&mut rng, 5, 1);
    let b_slice = random_matrix(&mut rng, 4, 3);
    let gather_idx: Rc<[usize]> = vec![4, 0, 0, 2, 4, 4, 1].into();
    // Segment 1 is empty.
    let segments: Rc<[usize]> = vec![0, 2, 2, 0, 3].into();

    vec![
        check_function("matmul", &[a.clone(), b], seed, eps, |t, v| {
            t.matmul(v[0], v[1])
        }),
        check_function("add_bias", &[a.clone(), bias], seed, eps, |t, v| {
            t.add_bias(v[0], v[1])
        }),
        check_function("add", &[a.clone(), c], seed, eps, |t, v| t.add(v[0], v[1])),
        check_pointwise(GELU, seed),
        check_function("gelu_fused", std::slice::from_ref(&a), seed, eps, |t, v| {
            t.gelu(v[0])
        }),
        check_function("concat", &[a.clone(), d], seed, eps, |t, v| {
            t.concat(&[v[0], v[1], v[0]])
        }),
        check_function("gather", std::slice::from_ref(&a), seed, eps, |t, v| {
            t.gather(v[0], gather_idx.clone())
        }),
        check_function("segment_mean", &[a], seed, eps, |t, v| {
            t.segment_mean(v[0], segments.clone(), 4)
        }),
        check_function("slice_rows", &[b_slice], seed, eps, |t, v| {
            t.slice_rows(v[0], 1, 2)
        }),
        check_function("mse", &[col], seed, eps, |t, v| t.mse(v[0], target.clone())),
    ]
}

/// A 30-node toy problem for `arch`: 10 surface nodes and 20 volume nodes.
pub fn toy_problem(arch: Architecture, seed: u64) -> (GeoModel, ModelInput, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_surf, n_vol, node_w, edge_w, k) = (10, 20, 5, 3, 3);
    let config = ModelConfig {
        architecture: arch,
        hidden: 6,
        mlp_depth: 1,
        surface_layers: 2,
        s2v_layers: 2,
        gnn_layers: 2,
        k,
        ..ModelConfig::default()
    };
    let model = GeoModel::new(config, node_w, edge_w, seed);

    let ring_edges = |n: usize, rng: &mut ChaCha8Rng| {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..n {
            for off in [1, n - 1] {
                src.push((i + off) % n);
                dst.push(i);
            }
            if rng.gen_bool(0.3) {
                src.push(rng.gen_range(0..n));
                dst.push(i);
            }
        }
        // Leave the last node isolated.
        let keep: Vec<usize> = (0..dst.len()).filter(|&e| dst[e] != n - 1).collect();
        let src: Rc<[usize]> = keep.iter().map(|&e| src[e]).collect();
        let dst: Rc<[usize]> = keep.iter().map(|&e| dst[e]).collect();
        (src, dst)
    };

    let (ssrc, sdst) = ring_edges(n_surf, &mut rng);
    let surface = SurfaceGraphInput {
        node_feats: random_matrix(&mut rng, n_surf, node_w),
        edge_feats: random_matrix(&mut rng, ssrc.len(), edge_w),
        src: ssrc,
        dst: sdst,
    };
    let slots: Rc<[usize]> = (0..n_vol * k).map(|_| rng.gen_range(0..n_surf)).collect();
    let s2v = Surf2VolInput {
        edge_feats: random_matrix(&mut rng, n_vol * k, edge_w),
        surface_slots: slots,
        k,
    };
    let (vsrc, vdst) = ring_edges(n_vol, &mut rng);
    let volume_graph = VolumeGraphInput {
        edge_feats: random_matrix(&mut rng, vsrc.len(), edge_w),
        src: vsrc,
        dst: vdst,
    };
    let input = ModelInput {
        node_feats: random_matrix(&mut rng, n_vol, node_w),
        surface: arch.uses_surface().then_some(surface),
        s2v: arch.uses_surface().then_some(s2v),
        volume_graph: arch.uses_volume_graph().then_some(volume_graph),
    };
    let targets = (0..n_vol).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (model, input, targets)
}

/// Checks the MSE loss of a whole model with respect to every parameter.
pub fn check_model(
    name: &str,
    model: &GeoModel,
    input: &ModelInput,
    targets: &[f64],
    eps: f64,
) -> Result<CheckResult> {
    let targets: Rc<[f64]> = targets.into();
    let loss = |m: &GeoModel, grad: bool| -> Result<(f64, Option<Vec<Matrix>>)> {
        let mut tape = Tape::new();
        let bound = m.params.bind(&mut tape);
        let pred = m.forward(&mut tape, &bound, input)?;
        let l = tape.mse(pred, targets.clone());
        let value = tape.value(l).get(0, 0);
        let grads = grad.then(|| {
            let g = tape.backward(l);
            bound
                .vars()
                .iter()
                .zip(m.params.tensors())
                .map(|(&v, t)| {
                    g.get(v)
                        .cloned()
                        .unwrap_or_else(|| Matrix::zeros(t.rows(), t.cols()))
                })
                .collect()
        });
        Ok((value, grads))
    };
    let (_, grads) = loss(model, true)?;
    let grads = grads.expect("gradients requested");
    let mut work = model.clone();
    let mut max_err = 0.0f64;
    let mut checked = 0;
    for (i, g) in grads.iter().enumerate() {
        for j in 0..g.data().len() {
            let orig = work.params.tensors()[i].data()[j];
            work.params.tensors_mut()[i].data_mut()[j] = orig + eps;
            let (plus, _) = loss(&work, false)?;
            work.params.tensors_mut()[i].data_mut()[j] = orig - eps;
            let (minus, _) = loss(&work, false)?;
            work.params.tensors_mut()[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            max_err = max_err.max(rel_error(g.data()[j], numeric));
            checked += 1;
        }
    }
    Ok(CheckResult {
        name: name.to_string(),
        checked,
        max_rel_error: max_err,
    })
}

/// Every primitive plus each architecture on its toy problem.
pub fn run_suite(seed: u64) -> Result<GradcheckReport> {
    let mut results = check_primitives(seed);
    for arch in [
        Architecture::Mlp,
        Architecture::Gnn,
        Architecture::Surf2Vol,
        Architecture::Surf2VolGnn,
    ] {
        let (model, input, targets) = toy_problem(arch, seed);
        results.push(check_model(
            &format!("model/{arch}"),
            &model,
            &input,
            &targets,
            DEFAULT_EPS,
        )?);
    }
    Ok(GradcheckReport {
        tolerance: DEFAULT_TOLERANCE,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bad_tanh_grad(x: f64) -> f64 {
        // Missing the square.
        1.0 - x.tanh()
    }

    #[test]
    fn primitives_pass() {
        for r in check_primitives(3) {
            assert!(r.passed(DEFAULT_TOLERANCE), "{r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn wrong_backward_rule_is_caught() {
        let broken = Pointwise {
            name: "broken_tanh",
            f: f64::tanh,
            df: bad_tanh_grad,
        };
        let r = check_pointwise(broken, 1);
        assert!(!r.passed(DEFAULT_TOLERANCE), "{r:?}");
    }

    #[test]
    fn surf2vol_toy_passes() {
        let (model, input, targets) = toy_problem(Architecture::Surf2Vol, 9);
        assert_eq!(
            input.num_nodes() + input.surface.as_ref().unwrap().node_feats.rows(),
            30
        );
        let r = check_model("s2v", &model, &input, &targets, DEFAULT_EPS).unwrap();
        assert!(r.passed(DEFAULT_TOLERANCE), "{r:?}");
    }
}
