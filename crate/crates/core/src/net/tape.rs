//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! Every call on [`Tape`] evaluates its primitive eagerly and records it.
//! [`Tape::backward`] replays the record in reverse and returns the
//! gradient of a 1×1 output with respect to every node.

use std::rc::Rc;

use super::tensor::Matrix;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A pointwise function and its derivative.
#[derive(Clone, Copy)]
pub struct Pointwise {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub df: fn(f64) -> f64,
}

impl std::fmt::Debug for Pointwise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

// tanh through exp, which is several times cheaper than libm's tanh
fn fast_tanh(u: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + fast_tanh(GELU_C * (x + GELU_A * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = fast_tanh(u);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Value and derivative sharing one exponential.
fn gelu_with_grad(x: f64) -> (f64, f64) {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = fast_tanh(u);
    let f = 0.5 * x * (1.0 + t);
    let df = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    (f, df)
}

/// GELU, tanh approximation.
pub const GELU: Pointwise = Pointwise {
    name: "gelu",
    f: gelu,
    df: gelu_grad,
};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Map(Var, Pointwise),
    /// Pointwise map whose derivative was stored during the forward pass.
    MapCached(Var, Matrix),
    Concat(Vec<Var>),
    Gather(Var, Rc<[usize]>),
    SliceRows(Var, usize),
    SegmentMean {
        input: Var,
        segments: Rc<[usize]>,
        counts: Rc<[usize]>,
    },
    Mse(Var, Rc<[f64]>),
    WeightedSum(Var, Rc<Matrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a 1×n row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a single row");
        assert_eq!(b.cols(), self.value(a).cols(), "bias width mismatch");
        let brow = b.data().to_vec();
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            for (x, bv) in out.row_mut(r).iter_mut().zip(&brow) {
                *x += bv;
            }
        }
        debug_assert_eq!(cols, brow.len());
        self.push(out, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "add shape mismatch"
        );
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn map(&mut self, a: Var, f: Pointwise) -> Var {
        let mut out = self.value(a).clone();
        for x in out.data_mut() {
            *x = (f.f)(*x);
        }
        self.push(out, Op::Map(a, f))
    }

    /// Same values as `map(a, GELU)`, with the derivative kept for the
    /// backward pass.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let mut deriv = out.clone();
        for (x, d) in out.data_mut().iter_mut().zip(deriv.data_mut()) {
            let (f, df) = gelu_with_grad(*x);
            *x = f;
            *d = df;
        }
        self.push(out, Op::MapCached(a, deriv))
    }

    /// Column-wise concatenation; all inputs must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.value(p).rows(), rows, "concat row mismatch");
                self.value(p).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Matrix::new(rows, total, data).expect("concat size");
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        assert!(start + len <= src.rows(), "row slice out of range");
        let cols = src.cols();
        let data = src.data()[start * cols..(start + len) * cols].to_vec();
        let out = Matrix::new(len, cols, data).expect("slice size");
        self.push(out, Op::SliceRows(a, start))
    }

    /// `out[i] = a[idx[i]]`.
    pub fn gather(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let out = self.value(a).select_rows(&idx);
        self.push(out, Op::Gather(a, idx))
    }

    /// Mean of the rows assigned to each of `n_segments` outputs; empty
    /// segments produce zero rows.
    pub fn segment_mean(&mut self, a: Var, segments: Rc<[usize]>, n_segments: usize) -> Var {
        let input = self.value(a);
        assert_eq!(input.rows(), segments.len(), "one segment id per row");
        let cols = input.cols();
        let mut counts = vec![0usize; n_segments];
        let mut out = Matrix::zeros(n_segments, cols);
        for (r, &s) in segments.iter().enumerate() {
            counts[s] += 1;
            for (o, v) in out.row_mut(s).iter_mut().zip(input.row(r)) {
                *o += v;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = c as f64;
                for o in out.row_mut(s) {
                    *o /= inv;
                }
            }
        }
        self.push(
            out,
            Op::SegmentMean {
                input: a,
                segments,
                counts: counts.into(),
            },
        )
    }

    /// Mean squared error of an n×1 prediction against `target`.
    pub fn mse(&mut self, pred: Var, target: Rc<[f64]>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.cols(), 1, "mse expects a column");
        assert_eq!(p.rows(), target.len(), "mse length mismatch");
        let n = target.len().max(1) as f64;
        let s: f64 = p
            .data()
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push(Matrix::scalar(s / n), Op::Mse(pred, target))
    }

    /// `Σ a ∘ w` as a 1×1 node.
    pub fn weighted_sum(&mut self, a: Var, w: Rc<Matrix>) -> Var {
        assert_eq!(
            self.value(a).shape(),
            w.shape(),
            "weighted_sum shape mismatch"
        );
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(w.data())
            .map(|(x, y)| x * y)
            .sum();
        self.push(Matrix::scalar(s), Op::WeightedSum(a, w))
    }

    /// Gradients of the 1×1 node `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(
            self.value(out).shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::scalar(1.0));

        fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.gemm(false, self.value(*b), true);
                    let gb = self.value(*a).gemm(true, &g, false);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Map(a, f) => {
                    let mut ga = g.clone();
                    for (gv, &x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *gv *= (f.df)(x);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MapCached(a, deriv) => {
                    let mut ga = g.clone();
                    for (gv, d) in ga.data_mut().iter_mut().zip(deriv.data()) {
                        *gv *= d;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        offset += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Gather(a, idx) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (r, &j) in idx.iter().enumerate() {
                        for (acc, v) in ga.row_mut(j).iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    ga.data_mut()[start * cols..start * cols + g.data().len()]
                        .copy_from_slice(g.data());
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentMean {
                    input,
                    segments,
                    counts,
                } => {
                    let src = self.value(*input);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (r, &s) in segments.iter().enumerate() {
                        let inv = 1.0 / counts[s] as f64;
                        for (acc, v) in ga.row_mut(r).iter_mut().zip(g.row(s)) {
                            *acc = v * inv;
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::Mse(pred, target) => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g.get(0, 0) / target.len().max(1) as f64;
                    let data = p
                        .data()
                        .iter()
                        .zip(target.iter())
                        .map(|(a, b)| scale * (a - b))
                        .collect();
                    accumulate(
                        &mut grads,
                        *pred,
                        Matrix::new(p.rows(), 1, data).expect("mse grad"),
                    );
                }
                Op::WeightedSum(a, w) => {
                    let s = g.get(0, 0);
                    let data = w.data().iter().map(|x| x * s).collect();
                    accumulate(
                        &mut grads,
                        *a,
                        Matrix::new(w.rows(), w.cols(), data).expect("ws grad"),
                    );
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_gelu_matches_map() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_fn(3, 7, |r, c| {
            (r * 7 + c) as f64 * 0.37 - 3.5
        }));
        let a = t.gelu(x);
        let b = t.map(x, GELU);
        assert_eq!(t.value(a), t.value(b));
        let w = Rc::new(Matrix::from_fn(3, 7, |r, c| (r + c) as f64 - 2.0));
        let sa = t.weighted_sum(a, w.clone());
        let ga = t.backward(sa).take(x).unwrap();
        let sb = t.weighted_sum(b, w);
        let gb = t.backward(sb).take(x).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn segment_mean_with_empty_segment() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let m = t.segment_mean(a, vec![0, 0, 2].into(), 3);
        assert_eq!(t.value(m).data(), &[2.0, 3.0, 0.0, 0.0, 5.0, 6.0]);
    }

    #[test]
    fn mse_and_gradient() {
        let mut t = Tape::new();
        let p = t.leaf(Matrix::column(vec![1.0, 2.0]));
        let l = t.mse(p, vec![0.0, 4.0].into());
        assert_eq!(t.value(l).get(0, 0), 2.5);
        let g = t.backward(l);
        assert_eq!(g.get(p).unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn gather_scatters_back() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::column(vec![1.0, 2.0, 3.0]));
        let g = t.gather(a, vec![2, 2, 0].into());
        let w = Rc::new(Matrix::column(vec![1.0, 10.0, 100.0]));
        let s = t.weighted_sum(g, w);
        assert_eq!(t.value(s).get(0, 0), 3.0 + 30.0 + 100.0);
        let grads = t.backward(s);
        assert_eq!(grads.get(a).unwrap().data(), &[100.0, 0.0, 11.0]);
    }
}
