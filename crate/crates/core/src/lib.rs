//! Geometry-aware message passing surrogates for steady 2-D flow around
//! airfoil-like bodies.
//!
//! The pipeline encodes the body surface as a latent graph, pushes that
//! encoding to every mesh point through directed surface-to-volume edges,
//! and decodes one scalar field per model. Inputs can be enriched with a
//! trailing-edge frame, polar angles, sinusoidal and harmonic embeddings,
//! and an inlet-aligned canonical frame.
//!
//! Modules, bottom up:
//!
//! - [`mesh`], [`io`], [`synth`]: case data model, text case files and an
//!   analytic potential-flow case generator.
//! - [`geom`], [`basis`]: coordinate frames, angles, embeddings.
//! - [`graph`]: k-d tree, radius and surface-to-volume graphs.
//! - [`features`]: per-variant node/edge feature assembly and target
//!   normalization.
//! - [`net`]: dense tensors, a reverse-mode tape, and the models.
//! - [`train`], [`eval`]: optimization and metrics.
// comparisons like `!(x > 0.0)` deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod graph;
pub mod io;
pub mod mesh;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use mesh::{FieldId, MeshCase, Point2};
