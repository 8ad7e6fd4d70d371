//! Surface encoder, Surf2Vol message passing, decoder and the baselines.
//!
//! Every message-passing layer has the same residual form. For an edge
//! `y → x` with embedding `e`,
//!
//! ```text
//! e ← e + MLP([z_src(y), z_dst(x), e])
//! m(x) = mean of e over the in-edges of x     (zero if none)
//! z(x) ← z(x) + MLP([z(x), m(x)])
//! ```
//!
//! On the surface graph source and destination latents are the same
//! matrix. In Surf2Vol layers the sources are the final surface latents
//! and the destinations are volume points, so a volume point never sees
//! another volume point.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bound, Matrix, Mlp, ParamStore, Tape, Var};
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    /// Pointwise MLP.
    Mlp,
    /// Message passing on a volume radius graph.
    Gnn,
    /// Surface encoder plus surface-to-volume message passing.
    Surf2Vol,
    /// Surf2Vol with a volume message-passing layer after each Surf2Vol layer.
    Surf2VolGnn,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Gnn => "gnn",
            Architecture::Surf2Vol => "surf2vol",
            Architecture::Surf2VolGnn => "surf2vol-gnn",
        }
    }

    pub fn uses_surface(self) -> bool {
        matches!(self, Architecture::Surf2Vol | Architecture::Surf2VolGnn)
    }

    pub fn uses_volume_graph(self) -> bool {
        matches!(self, Architecture::Gnn | Architecture::Surf2VolGnn)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Architecture::Mlp,
            Architecture::Gnn,
            Architecture::Surf2Vol,
            Architecture::Surf2VolGnn,
        ]
        .into_iter()
        .find(|a| a.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown architecture '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub hidden: usize,
    /// Hidden layers per MLP.
    pub mlp_depth: usize,
    pub surface_layers: usize,
    pub s2v_layers: usize,
    /// Layers of the volume-graph baseline.
    pub gnn_layers: usize,
    pub k: usize,
    pub surface_radius: f64,
    pub surface_max_neighbors: usize,
    pub volume_radius: f64,
    pub volume_max_neighbors: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Surf2Vol,
            hidden: 128,
            mlp_depth: 2,
            surface_layers: 4,
            s2v_layers: 4,
            gnn_layers: 4,
            k: 8,
            surface_radius: 0.05,
            surface_max_neighbors: 8,
            volume_radius: 0.05,
            volume_max_neighbors: 4,
        }
    }
}

impl ModelConfig {
    /// Small network for desk-scale runs and tests.
    pub fn small() -> Self {
        ModelConfig {
            hidden: 32,
            mlp_depth: 1,
            surface_layers: 2,
            s2v_layers: 2,
            gnn_layers: 2,
            ..ModelConfig::default()
        }
    }
}

/// Surface graph: node features for every surface point and edges between
/// surface positions.
#[derive(Debug, Clone)]
pub struct SurfaceGraphInput {
    pub node_feats: Matrix,
    pub edge_feats: Matrix,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
}

/// Surf2Vol edges: `k` per volume node, grouped by destination.
#[derive(Debug, Clone)]
pub struct Surf2VolInput {
    pub edge_feats: Matrix,
    /// Source position in the surface list for each edge.
    pub surface_slots: Rc<[usize]>,
    pub k: usize,
}

/// Edges among the volume nodes of one batch.
#[derive(Debug, Clone)]
pub struct VolumeGraphInput {
    pub edge_feats: Matrix,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
}

#[derive(Debug, Clone)]
pub struct ModelInput {
    pub node_feats: Matrix,
    pub surface: Option<SurfaceGraphInput>,
    pub s2v: Option<Surf2VolInput>,
    pub volume_graph: Option<VolumeGraphInput>,
}

impl ModelInput {
    pub fn num_nodes(&self) -> usize {
        self.node_feats.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MpLayer {
    edge: Mlp,
    node: Mlp,
}

impl MpLayer {
    fn new(
        store: &mut ParamStore,
        name: &str,
        h: usize,
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        MpLayer {
            edge: Mlp::new(store, &format!("{name}.edge"), 3 * h, h, depth, h, rng),
            node: Mlp::new(store, &format!("{name}.node"), 2 * h, h, depth, h, rng),
        }
    }

    /// One residual edge/node update. Returns the new edge and destination
    /// latents.
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        src_latent: Var,
        dst_latent: Var,
        edges: Var,
        src: &Rc<[usize]>,
        dst: &Rc<[usize]>,
        n_dst: usize,
    ) -> (Var, Var) {
        let upd = self.edge.forward_parts(
            tape,
            params,
            &[
                (src_latent, Some(src)),
                (dst_latent, Some(dst)),
                (edges, None),
            ],
        );
        let edges = tape.add(edges, upd);
        let msg = tape.segment_mean(edges, dst.clone(), n_dst);
        let upd = self
            .node
            .forward_parts(tape, params, &[(dst_latent, None), (msg, None)]);
        (edges, tape.add(dst_latent, upd))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SurfaceEncoder {
    node_embed: Mlp,
    edge_embed: Mlp,
    layers: Vec<MpLayer>,
}

#[derive(Debug, Clone, PartialEq)]
struct VolumeBlock {
    edge_embed: Mlp,
    layers: Vec<MpLayer>,
}

#[derive(Debug, Clone, PartialEq)]
struct Parts {
    surface: Option<SurfaceEncoder>,
    node_embed: Option<Mlp>,
    s2v: Option<VolumeBlock>,
    decoder: Mlp,
    volume: Option<VolumeBlock>,
}

/// One per-field model: configuration, parameters and their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoModel {
    pub config: ModelConfig,
    pub node_width: usize,
    pub edge_width: usize,
    pub params: ParamStore,
    parts: Parts,
}

impl GeoModel {
    pub fn new(config: ModelConfig, node_width: usize, edge_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Init, 0, 0));
        let mut store = ParamStore::new();
        let h = config.hidden;
        let depth = config.mlp_depth;
        let arch = config.architecture;

        let surface = arch.uses_surface().then(|| SurfaceEncoder {
            node_embed: Mlp::new(
                &mut store,
                "surface.node_embed",
                node_width,
                h,
                depth,
                h,
                &mut rng,
            ),
            edge_embed: Mlp::new(
                &mut store,
                "surface.edge_embed",
                edge_width,
                h,
                depth,
                h,
                &mut rng,
            ),
            layers: (0..config.surface_layers)
                .map(|l| MpLayer::new(&mut store, &format!("surface.layer{l}"), h, depth, &mut rng))
                .collect(),
        });
        let node_embed = (arch != Architecture::Mlp).then(|| {
            Mlp::new(
                &mut store,
                "volume.node_embed",
                node_width,
                h,
                depth,
                h,
                &mut rng,
            )
        });
        let s2v = arch.uses_surface().then(|| VolumeBlock {
            edge_embed: Mlp::new(
                &mut store,
                "s2v.edge_embed",
                edge_width,
                h,
                depth,
                h,
                &mut rng,
            ),
            layers: (0..config.s2v_layers)
                .map(|l| MpLayer::new(&mut store, &format!("s2v.layer{l}"), h, depth, &mut rng))
                .collect(),
        });
        let decoder = if arch == Architecture::Mlp {
            Mlp::new(&mut store, "pointwise", node_width, h, depth, 1, &mut rng)
        } else {
            Mlp::new(&mut store, "decoder", h, h, depth, 1, &mut rng)
        };
        let volume = arch.uses_volume_graph().then(|| {
            let n_layers = if arch == Architecture::Gnn {
                config.gnn_layers
            } else {
                config.s2v_layers
            };
            VolumeBlock {
                edge_embed: Mlp::new(
                    &mut store,
                    "volume.edge_embed",
                    edge_width,
                    h,
                    depth,
                    h,
                    &mut rng,
                ),
                layers: (0..n_layers)
                    .map(|l| {
                        MpLayer::new(&mut store, &format!("volume.layer{l}"), h, depth, &mut rng)
                    })
                    .collect(),
            }
        });

        GeoModel {
            config,
            node_width,
            edge_width,
            params: store,
            parts: Parts {
                surface,
                node_embed,
                s2v,
                decoder,
                volume,
            },
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Zeroes the output layer of every volume node-update MLP, which turns
    /// the interleaved volume layers into identities for the node latents.
    pub fn ablate_volume_layers(&mut self) {
        if let Some(vol) = &self.parts.volume {
            for layer in &vol.layers {
                let &(w, b) = layer.node.layers().last().expect("mlp has layers");
                self.params.get_mut(w).data_mut().fill(0.0);
                self.params.get_mut(b).data_mut().fill(0.0);
            }
        }
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let nv = input.num_nodes();
        let shape = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Shape(format!("{what}: expected {want}, got {got}")))
            }
        };
        shape(
            "node feature width",
            input.node_feats.cols(),
            self.node_width,
        )?;
        if self.architecture().uses_surface() {
            let s = input
                .surface
                .as_ref()
                .ok_or_else(|| Error::Shape("surface graph missing".into()))?;
            shape("surface node width", s.node_feats.cols(), self.node_width)?;
            shape("surface edge width", s.edge_feats.cols(), self.edge_width)?;
            shape("surface edge count", s.edge_feats.rows(), s.src.len())?;
            shape("surface edge count", s.dst.len(), s.src.len())?;
            let ns = s.node_feats.rows();
            if s.src.iter().chain(s.dst.iter()).any(|&i| i >= ns) {
                return Err(Error::Shape("surface edge endpoint out of range".into()));
            }
            let e = input
                .s2v
                .as_ref()
                .ok_or_else(|| Error::Shape("Surf2Vol edges missing".into()))?;
            if e.k != self.config.k {
                return Err(Error::Shape(format!(
                    "Surf2Vol degree {} differs from the model's k = {}",
                    e.k, self.config.k
                )));
            }
            shape("Surf2Vol edge count", e.surface_slots.len(), nv * e.k)?;
            shape("Surf2Vol edge rows", e.edge_feats.rows(), nv * e.k)?;
            shape("Surf2Vol edge width", e.edge_feats.cols(), self.edge_width)?;
            if e.surface_slots.iter().any(|&i| i >= ns) {
                return Err(Error::Shape("Surf2Vol source out of range".into()));
            }
        }
        if self.architecture().uses_volume_graph() {
            let g = input
                .volume_graph
                .as_ref()
                .ok_or_else(|| Error::Shape("volume graph missing".into()))?;
            shape("volume edge width", g.edge_feats.cols(), self.edge_width)?;
            shape("volume edge rows", g.edge_feats.rows(), g.src.len())?;
            shape("volume edge count", g.dst.len(), g.src.len())?;
            if g.src.iter().chain(g.dst.iter()).any(|&i| i >= nv) {
                return Err(Error::Shape("volume edge endpoint out of range".into()));
            }
        }
        Ok(())
    }

    /// Latent surface representation, one row per surface node.
    pub fn surface_encode(
        &self,
        tape: &mut Tape,
        params: &Bound,
        s: &SurfaceGraphInput,
    ) -> Result<Var> {
        let enc = self
            .parts
            .surface
            .as_ref()
            .ok_or_else(|| Error::Config("architecture has no surface encoder".into()))?;
        let x = tape.leaf(s.node_feats.clone());
        let mut z = enc.node_embed.forward(tape, params, x);
        let ef = tape.leaf(s.edge_feats.clone());
        let mut e = enc.edge_embed.forward(tape, params, ef);
        let ns = s.node_feats.rows();
        for layer in &enc.layers {
            (e, z) = layer.forward(tape, params, z, z, e, &s.src, &s.dst, ns);
        }
        Ok(z)
    }

    /// Predictions as an `n × 1` node.
    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: &ModelInput) -> Result<Var> {
        self.check_input(input)?;
        let nv = input.num_nodes();
        let x = tape.leaf(input.node_feats.clone());
        if self.architecture() == Architecture::Mlp {
            return Ok(self.parts.decoder.forward(tape, params, x));
        }
        let node_embed = self.parts.node_embed.as_ref().expect("node embedding");
        let mut z = node_embed.forward(tape, params, x);

        let mut volume_state = match (&self.parts.volume, &input.volume_graph) {
            (Some(block), Some(g)) => {
                let ef = tape.leaf(g.edge_feats.clone());
                Some((block, g, block.edge_embed.forward(tape, params, ef)))
            }
            _ => None,
        };

        match (&self.parts.s2v, &input.surface, &input.s2v) {
            (Some(block), Some(surface), Some(edges)) => {
                let z_surf = self.surface_encode(tape, params, surface)?;
                let ef = tape.leaf(edges.edge_feats.clone());
                let mut e = block.edge_embed.forward(tape, params, ef);
                let dst: Rc<[usize]> = (0..nv * edges.k).map(|i| i / edges.k).collect();
                for (l, layer) in block.layers.iter().enumerate() {
                    (e, z) =
                        layer.forward(tape, params, z_surf, z, e, &edges.surface_slots, &dst, nv);
                    if let Some((vb, g, ve)) = volume_state.as_mut() {
                        let (ve2, z2) =
                            vb.layers[l].forward(tape, params, z, z, *ve, &g.src, &g.dst, nv);
                        *ve = ve2;
                        z = z2;
                    }
                }
            }
            _ => {
                if let Some((vb, g, mut ve)) = volume_state {
                    for layer in &vb.layers {
                        (ve, z) = layer.forward(tape, params, z, z, ve, &g.src, &g.dst, nv);
                    }
                }
            }
        }
        Ok(self.parts.decoder.forward(tape, params, z))
    }

    /// Forward pass without gradients.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, input)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Latent surface rows without gradients.
    pub fn encode_surface(&self, s: &SurfaceGraphInput) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let z = self.surface_encode(&mut tape, &bound, s)?;
        Ok(tape.value(z).clone())
    }
}
