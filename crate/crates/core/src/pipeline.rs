//! Per-case preparation and model inputs for arbitrary query subsets.
//!
//! A [`PreparedCase`] caches everything that depends only on the case:
//! recentred geometry, node features, the surface neighborhoods and the
//! Surf2Vol neighbors of every point. Batches are then cheap row gathers.
//! Because each point's surface neighbors come from the full surface, a
//! point's Surf2Vol input does not depend on which other points share its
//! batch.

use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::features::{BasisSettings, ColumnStats, FeatureContext, FeatureVariant, InputScaler};
use crate::graph::{RadiusNeighborhoods, SurfaceIndex};
use crate::net::model::{Surf2VolInput, VolumeGraphInput};
use crate::net::{GeoModel, Matrix, ModelConfig, ModelInput, SurfaceGraphInput};
use crate::rng::{derive_seed, Stream};
use crate::{Error, FieldId, MeshCase, Result};

#[derive(Debug, Clone)]
pub struct PreparedCase {
    /// The case translated so its leading edge is the origin.
    pub case: MeshCase,
    pub features: FeatureContext,
    /// Node features of every point.
    pub node_feats: Matrix,
    surface_feats: Matrix,
    surface_hoods: Option<RadiusNeighborhoods>,
    /// `k` surface positions per point, nearest first.
    s2v_slots: Vec<usize>,
    k: usize,
    scaler: Option<InputScaler>,
}

impl PreparedCase {
    pub fn new(
        case: &MeshCase,
        variant: FeatureVariant,
        basis: &BasisSettings,
        config: &ModelConfig,
    ) -> Result<Self> {
        let case = case.recentre();
        let features = FeatureContext::new(&case, variant, basis)?;
        let all: Vec<usize> = (0..case.len()).collect();
        let node_feats = Matrix::new(
            case.len(),
            features.node_width(),
            features.node_matrix(&case, &all),
        )?;
        let surface_feats = node_feats.select_rows(&case.surface_idx);
        let (surface_hoods, s2v_slots) = if config.architecture.uses_surface() {
            let hoods = RadiusNeighborhoods::build(&case.surface_points(), config.surface_radius);
            let graph = SurfaceIndex::new(&case).graph_for(&case, &all, config.k)?;
            (Some(hoods), graph.surface_slots)
        } else {
            (None, Vec::new())
        };
        Ok(PreparedCase {
            case,
            features,
            node_feats,
            surface_feats,
            surface_hoods,
            s2v_slots,
            k: config.k,
            scaler: None,
        })
    }

    /// Standardizes node features now and edge features as they are built.
    pub fn with_scaler(mut self, scaler: &InputScaler) -> Result<Self> {
        if self.scaler.is_some() {
            return Err(Error::Invariant("case already has an input scaler".into()));
        }
        if scaler.node.width() != self.features.node_width()
            || scaler.edge.width() != self.features.edge_width()
        {
            return Err(Error::Config(
                "input scaler widths do not match the feature variant".into(),
            ));
        }
        scaler.node.apply(self.node_feats.data_mut());
        scaler.node.apply(self.surface_feats.data_mut());
        self.scaler = Some(scaler.clone());
        Ok(self)
    }

    /// Adds this case's node features and its full-mesh edge features
    /// (neighbor-cap sample of epoch 0) to the running statistics.
    pub fn accumulate_stats(
        &self,
        config: &ModelConfig,
        seed: u64,
        node: &mut ColumnStats,
        edge: &mut ColumnStats,
    ) -> Result<()> {
        node.push_rows(self.node_feats.data());
        let all: Vec<usize> = (0..self.len()).collect();
        let input = self.build_input(config, &all, seed, 0)?;
        if let Some(s) = &input.surface {
            edge.push_rows(s.edge_feats.data());
        }
        if let Some(s) = &input.s2v {
            edge.push_rows(s.edge_feats.data());
        }
        if let Some(v) = &input.volume_graph {
            edge.push_rows(v.edge_feats.data());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.case.len()
    }

    pub fn is_empty(&self) -> bool {
        self.case.is_empty()
    }

    pub fn field_values(&self, field: FieldId) -> Result<Vec<f64>> {
        self.case
            .field_values(field)
            .ok_or_else(|| Error::Invariant(format!("case '{}' has no targets", self.case.case_id)))
    }

    /// Surface neighbors of point `i`, as positions in the surface list.
    pub fn surf2vol_neighbors(&self, i: usize) -> &[usize] {
        &self.s2v_slots[i * self.k..(i + 1) * self.k]
    }

    fn edge_matrix(
        &self,
        pairs: impl Iterator<Item = (usize, usize)>,
        rows: usize,
    ) -> Result<Matrix> {
        let w = self.features.edge_width();
        let mut data = Vec::with_capacity(rows * w);
        for (y, x) in pairs {
            self.features
                .edge_features_into(self.case.points[y], self.case.points[x], &mut data);
        }
        if let Some(sc) = &self.scaler {
            sc.edge.apply(&mut data);
        }
        Matrix::new(rows, w, data)
    }

    /// Model input for the case points in `query`. `epoch` selects the
    /// neighbor-cap sample of the radius graphs; evaluation uses epoch 0.
    pub fn build_input(
        &self,
        config: &ModelConfig,
        query: &[usize],
        seed: u64,
        epoch: u64,
    ) -> Result<ModelInput> {
        let arch = config.architecture;
        let node_feats = self.node_feats.select_rows(query);
        let cap_seed = derive_seed(seed, Stream::NeighborCap, epoch, 0);

        let (surface, s2v) = if arch.uses_surface() {
            let hoods = self
                .surface_hoods
                .as_ref()
                .ok_or_else(|| Error::Config("case prepared without a surface graph".into()))?;
            let g = hoods.capped(config.surface_max_neighbors, cap_seed);
            let sidx = &self.case.surface_idx;
            let edge_feats = self.edge_matrix(
                g.src.iter().zip(&g.dst).map(|(&s, &d)| (sidx[s], sidx[d])),
                g.num_edges(),
            )?;
            let surface = SurfaceGraphInput {
                node_feats: self.surface_feats.clone(),
                edge_feats,
                src: g.src.into(),
                dst: g.dst.into(),
            };
            let k = self.k;
            let slots: Rc<[usize]> = query
                .iter()
                .flat_map(|&q| self.surf2vol_neighbors(q).iter().copied())
                .collect();
            let edge_feats = self.edge_matrix(
                slots
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| (sidx[s], query[e / k])),
                slots.len(),
            )?;
            let s2v = Surf2VolInput {
                edge_feats,
                surface_slots: slots,
                k,
            };
            (Some(surface), Some(s2v))
        } else {
            (None, None)
        };

        let volume_graph = if arch.uses_volume_graph() {
            let pts: Vec<_> = query.iter().map(|&q| self.case.points[q]).collect();
            let g = RadiusNeighborhoods::build(&pts, config.volume_radius)
                .capped(config.volume_max_neighbors, cap_seed ^ 0x76_6f6c);
            let edge_feats = self.edge_matrix(
                g.src
                    .iter()
                    .zip(&g.dst)
                    .map(|(&s, &d)| (query[s], query[d])),
                g.num_edges(),
            )?;
            Some(VolumeGraphInput {
                edge_feats,
                src: g.src.into(),
                dst: g.dst.into(),
            })
        } else {
            None
        };

        Ok(ModelInput {
            node_feats,
            surface,
            s2v,
            volume_graph,
        })
    }
}

/// Prepares every case, in parallel when the `parallel` feature is on.
pub fn prepare_all(
    cases: &[MeshCase],
    variant: FeatureVariant,
    basis: &BasisSettings,
    config: &ModelConfig,
    scaler: Option<&InputScaler>,
) -> Result<Vec<PreparedCase>> {
    let prepare = |c: &MeshCase| {
        let p = PreparedCase::new(c, variant, basis, config)?;
        match scaler {
            Some(sc) => p.with_scaler(sc),
            None => Ok(p),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cases.par_iter().map(prepare).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cases.iter().map(prepare).collect()
    }
}

/// Query points per forward pass at inference. Architectures without a
/// volume graph predict every point independently, so chunking only bounds
/// memory; with a volume graph the whole query runs at once.
pub const PREDICT_CHUNK: usize = 1024;

/// Predictions with the time spent building inputs and running the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPrediction {
    pub values: Vec<f64>,
    pub build: Duration,
    pub forward: Duration,
}

/// Normalized predictions of `model` at the case points in `query`.
pub fn predict(
    model: &GeoModel,
    prepared: &PreparedCase,
    query: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    predict_timed(model, prepared, query, seed).map(|t| t.values)
}

pub fn predict_timed(
    model: &GeoModel,
    prepared: &PreparedCase,
    query: &[usize],
    seed: u64,
) -> Result<TimedPrediction> {
    let chunk = if model.config.architecture.uses_volume_graph() {
        query.len().max(1)
    } else {
        PREDICT_CHUNK
    };
    let mut out = TimedPrediction {
        values: Vec::with_capacity(query.len()),
        build: Duration::ZERO,
        forward: Duration::ZERO,
    };
    for part in query.chunks(chunk) {
        let t = Instant::now();
        let input = prepared.build_input(&model.config, part, seed, 0)?;
        out.build += t.elapsed();
        let t = Instant::now();
        out.values.extend(model.predict(&input)?);
        out.forward += t.elapsed();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, JoukowskiParams};
    use crate::Point2;

    fn setup() -> (PreparedCase, ModelConfig) {
        let shape = JoukowskiParams {
            thickness: 0.1,
            camber: 0.05,
        };
        let case = generate_synthetic("t", shape, Point2::new(1.0, 0.1), 300, 48, 5).unwrap();
        let basis = BasisSettings::fit(std::slice::from_ref(&case)).unwrap();
        let config = ModelConfig {
            hidden: 8,
            ..ModelConfig::small()
        };
        let p = PreparedCase::new(&case, FeatureVariant::SpH, &basis, &config).unwrap();
        (p, config)
    }

    #[test]
    fn input_shapes() {
        let (p, config) = setup();
        let query = [0, 5, 17, 100];
        let input = p.build_input(&config, &query, 1, 0).unwrap();
        assert_eq!(input.node_feats.shape(), (4, 251));
        let s2v = input.s2v.unwrap();
        assert_eq!(s2v.edge_feats.shape(), (4 * 8, 115));
        assert_eq!(input.surface.unwrap().node_feats.rows(), 48);
    }

    #[test]
    fn subset_predictions_match_full() {
        let (p, config) = setup();
        let model = GeoModel::new(config, 251, 115, 3);
        let all: Vec<usize> = (0..p.len()).collect();
        let full = predict(&model, &p, &all, 0).unwrap();
        let sub: Vec<usize> = (0..p.len()).step_by(7).collect();
        let part = predict(&model, &p, &sub, 0).unwrap();
        for (j, &i) in sub.iter().enumerate() {
            assert!((part[j] - full[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn chunked_prediction_matches_single_pass() {
        let (p, config) = setup();
        let model = GeoModel::new(config, 251, 115, 4);
        let query: Vec<usize> = (0..p.len()).rev().collect();
        let whole = model
            .predict(&p.build_input(&model.config, &query, 0, 0).unwrap())
            .unwrap();
        let big: Vec<usize> = query
            .iter()
            .cycle()
            .take(3 * PREDICT_CHUNK + 5)
            .copied()
            .collect();
        let chunked = predict(&model, &p, &big, 0).unwrap();
        for (j, &q) in big.iter().enumerate() {
            let i = query.iter().position(|&x| x == q).unwrap();
            assert!((chunked[j] - whole[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn scaler_standardizes_training_columns() {
        let (p, config) = setup();
        let mut node = ColumnStats::new(251);
        let mut edge = ColumnStats::new(115);
        p.accumulate_stats(&config, 0, &mut node, &mut edge)
            .unwrap();
        let scaler = InputScaler {
            node: node.finish(),
            edge: edge.finish(),
        };
        let scaled = p.clone().with_scaler(&scaler).unwrap();
        let col: Vec<f64> = (0..scaled.len())
            .map(|i| scaled.node_feats.get(i, 0))
            .collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        assert!(scaled.with_scaler(&scaler).is_err());
    }
}
