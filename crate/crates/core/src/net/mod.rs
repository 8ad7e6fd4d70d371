//! Dense tensors, the reverse-mode tape, MLP blocks and the models.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod tape;
pub mod tensor;

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use model::{Architecture, GeoModel, ModelConfig, ModelInput, SurfaceGraphInput};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Matrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named parameter tensors of one model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// Records every parameter as a leaf; the returned vars are indexed by
    /// [`ParamId`].
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    pub(crate) fn replace(&mut self, tensors: Vec<Matrix>) -> Result<()> {
        if tensors.len() != self.tensors.len()
            || tensors
                .iter()
                .zip(&self.tensors)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Shape(
                "parameter shapes do not match the model".into(),
            ));
        }
        self.tensors = tensors;
        Ok(())
    }
}

/// Parameters bound to a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Fully connected stack: `depth` hidden GELU layers of width `hidden`,
/// then a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    in_width: usize,
    out_width: usize,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_width: usize,
        hidden: usize,
        depth: usize,
        out_width: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut widths = vec![in_width];
        widths.extend(std::iter::repeat_n(hidden, depth));
        widths.push(out_width);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let bound = 1.0 / (w[0].max(1) as f64).sqrt();
                let weight = Matrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-bound..bound));
                let bias = Matrix::from_fn(1, w[1], |_, _| rng.gen_range(-bound..bound));
                (
                    store.add(format!("{name}.{l}.weight"), weight),
                    store.add(format!("{name}.{l}.bias"), bias),
                )
            })
            .collect();
        Mlp {
            layers,
            in_width,
            out_width,
        }
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, x: Var) -> Var {
        let (w, b) = self.layers[0];
        let h = tape.matmul(x, params.var(w));
        let h = tape.add_bias(h, params.var(b));
        self.tail(tape, params, h)
    }

    /// Same map as [`Mlp::forward`] on the column-wise concatenation of
    /// `parts`, where a part with an index list is gathered by it first.
    /// The first layer is applied to each part before the gather, so the
    /// concatenation is never built.
    pub fn forward_parts(
        &self,
        tape: &mut Tape,
        params: &Bound,
        parts: &[(Var, Option<&Rc<[usize]>>)],
    ) -> Var {
        let (w, b) = self.layers[0];
        let w = params.var(w);
        let mut offset = 0;
        let mut acc: Option<Var> = None;
        for &(x, idx) in parts {
            let width = tape.value(x).cols();
            let slice = tape.slice_rows(w, offset, width);
            offset += width;
            let mut h = tape.matmul(x, slice);
            if let Some(idx) = idx {
                h = tape.gather(h, idx.clone());
            }
            acc = Some(match acc {
                Some(a) => tape.add(a, h),
                None => h,
            });
        }
        assert_eq!(offset, self.in_width, "parts do not cover the MLP input");
        let h = tape.add_bias(acc.expect("at least one part"), params.var(b));
        self.tail(tape, params, h)
    }

    fn tail(&self, tape: &mut Tape, params: &Bound, mut h: Var) -> Var {
        for &(w, b) in &self.layers[1..] {
            h = tape.gelu(h);
            h = tape.matmul(h, params.var(w));
            h = tape.add_bias(h, params.var(b));
        }
        h
    }

    /// Tape-free convenience for inference.
    pub fn apply(&self, store: &ParamStore, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_width {
            return Err(Error::Shape(format!(
                "MLP expects width {}, got {}",
                self.in_width,
                input.cols()
            )));
        }
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(input.clone());
        let y = self.forward(&mut tape, &bound, x);
        Ok(tape.value(y).clone())
    }
}
