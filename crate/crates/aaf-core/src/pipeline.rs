//! Composition of alignment, attention, and fusion into one configurable
//! operator, fanned out over the classes of an episode and optionally over
//! pyramid levels.
//!
//! Both sides are transformed in two stages (spatial alignment and channel
//! attention, in either order), then combined by fusion. Each stage reads
//! the maps produced by the previous stage: when both sides transform in
//! the same stage, both consume the pre-stage values.

use std::collections::BTreeMap;
use std::fmt::Display;

use rand::Rng;

use crate::error::AafError;
use crate::ops::{
    align, attend, fuse, AffinityKind, AffinityScale, AttentionKind, FusionComponent,
    FusionKind, FusionOp,
};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tape::{GradTape, PoolMode, Var};

/// Stage order shared by both sides of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpOrder {
    AlignThenAttend,
    AttendThenAlign,
}

/// How multiple support shots of one class collapse to one output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotAggregation {
    /// Average the transformed maps across shots, then fuse once.
    MeanFeatures,
    /// Fuse per shot, then average the fused outputs.
    MeanOutputs,
}

/// Complete description of one alignment–attention–fusion operator.
///
/// `align_query` set to anything but `Identity` moves the query map onto
/// the support grid; `align_support` moves the support map onto the query
/// grid. `Identity` means "leave the map on its own grid", with no extent
/// requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub order: OpOrder,
    pub shots: ShotAggregation,
    pub align_query: AffinityKind,
    pub align_support: AffinityKind,
    pub attend_query: AttentionKind,
    pub attend_support: AttentionKind,
    pub fusion: FusionKind,
}

/// Spatial/channel extents predicted for a pipeline's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeReport {
    pub positions: usize,
    pub channels: usize,
}

impl PipelineConfig {
    /// Pass-through on every stage: the query map survives unchanged.
    pub fn identity() -> Self {
        PipelineConfig {
            order: OpOrder::AlignThenAttend,
            shots: ShotAggregation::MeanFeatures,
            align_query: AffinityKind::Identity,
            align_support: AffinityKind::Identity,
            attend_query: AttentionKind::None,
            attend_support: AttentionKind::None,
            fusion: FusionKind::none(),
        }
    }

    /// Predicts the output extents for the given input extents, failing
    /// with the same error the forward pass would raise. `positions_*`
    /// count grid cells per side.
    pub fn check_shapes(
        &self,
        query_positions: usize,
        support_positions: usize,
        query_channels: usize,
        support_channels: usize,
    ) -> Result<ShapeReport, AafError> {
        if query_channels != support_channels {
            return Err(AafError::ChannelMismatch {
                op: "pipeline",
                lhs: query_channels,
                rhs: support_channels,
            });
        }
        let d = query_channels;
        let extent_q = match self.align_query {
            AffinityKind::Identity => query_positions,
            _ => support_positions,
        };
        let extent_s = match self.align_support {
            AffinityKind::Identity => support_positions,
            _ => query_positions,
        };
        if !self.fusion.is_none()
            && self.fusion.support_pool.is_none()
            && extent_q != extent_s
        {
            return Err(AafError::FusionExtent {
                m: extent_q,
                n: extent_s,
            });
        }
        Ok(ShapeReport {
            positions: extent_q,
            channels: self.fusion.out_channels(d),
        })
    }

    /// Names of the learnable per-component affine maps, in order.
    pub fn psi_names(&self) -> Vec<(String, String)> {
        self.fusion
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.learnable)
            .map(|(i, _)| (format!("fusion.psi{i}.w"), format!("fusion.psi{i}.b")))
            .collect()
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Fresh parameters for every learnable fusion component: weights start at
/// identity plus small Gaussian noise, biases at zero, so an untrained
/// pipeline is close to a pass-through.
pub fn init_pipeline_params<S: Scalar, R: Rng>(
    config: &PipelineConfig,
    channels: usize,
    rng: &mut R,
) -> Result<ParamSet<S>, AafError> {
    let mut params = ParamSet::new();
    for (i, component) in config.fusion.components.iter().enumerate() {
        if !component.learnable {
            continue;
        }
        let width = component.op.out_channels(channels);
        let mut w = crate::tensor::Tensor::eye(width);
        for v in w.data_mut() {
            *v += S::lit(0.01 * gaussian(rng));
        }
        params.insert(&format!("fusion.psi{i}.w"), w)?;
        params.insert(
            &format!("fusion.psi{i}.b"),
            crate::tensor::Tensor::zeros(vec![1, width]),
        )?;
    }
    Ok(params)
}

/// Resolves the per-component `(weight, bias)` pairs from bound parameters.
pub fn bind_fusion_psi(
    config: &PipelineConfig,
    bindings: &BTreeMap<String, Var>,
) -> Result<Vec<Option<(Var, Var)>>, AafError> {
    config
        .fusion
        .components
        .iter()
        .enumerate()
        .map(|(i, component)| {
            if !component.learnable {
                return Ok(None);
            }
            let w_name = format!("fusion.psi{i}.w");
            let b_name = format!("fusion.psi{i}.b");
            let w = *bindings
                .get(&w_name)
                .ok_or(AafError::MissingGrad { name: w_name })?;
            let b = *bindings
                .get(&b_name)
                .ok_or(AafError::MissingGrad { name: b_name })?;
            Ok(Some((w, b)))
        })
        .collect()
}

fn align_stage<S: Scalar>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    q: Var,
    s: Var,
) -> Result<(Var, Var), AafError> {
    let mut q_next = q;
    let mut s_next = s;
    if config.align_query != AffinityKind::Identity {
        q_next = align(tape, q, s, config.align_query)?;
    }
    if config.align_support != AffinityKind::Identity {
        s_next = align(tape, s, q, config.align_support)?;
    }
    Ok((q_next, s_next))
}

fn attend_stage<S: Scalar>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    q: Var,
    s: Var,
) -> Result<(Var, Var), AafError> {
    let q_next = attend(tape, q, s, config.attend_query)?;
    let s_next = attend(tape, s, q, config.attend_support)?;
    Ok((q_next, s_next))
}

fn transform_pair<S: Scalar>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    q: Var,
    s: Var,
) -> Result<(Var, Var), AafError> {
    match config.order {
        OpOrder::AlignThenAttend => {
            let (q, s) = align_stage(tape, config, q, s)?;
            attend_stage(tape, config, q, s)
        }
        OpOrder::AttendThenAlign => {
            let (q, s) = attend_stage(tape, config, q, s)?;
            align_stage(tape, config, q, s)
        }
    }
}

/// Average of tape values with identical shapes. Returns the input node
/// untouched when all entries are the same node, keeping no-op pipelines
/// bit-exact.
fn mean_vars<S: Scalar>(tape: &mut GradTape<S>, vars: &[Var]) -> Result<Var, AafError> {
    let first = vars[0];
    if vars.iter().all(|&v| v == first) {
        return Ok(first);
    }
    let mut acc = first;
    for &v in &vars[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(tape.scale(acc, S::lit(1.0 / vars.len() as f64)))
}

/// Runs the full operator for one query map against one class's support
/// shots. `psi` follows [`fuse`]'s contract.
pub fn class_forward<S: Scalar>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    query: Var,
    shots: &[Var],
    psi: &[Option<(Var, Var)>],
) -> Result<Var, AafError> {
    if shots.is_empty() {
        return Err(AafError::NoSupportShots);
    }
    let mut q_maps = Vec::with_capacity(shots.len());
    let mut s_maps = Vec::with_capacity(shots.len());
    for (k, &s) in shots.iter().enumerate() {
        let (q_k, s_k) = transform_pair(tape, config, query, s)
            .map_err(|e| e.in_context(format!("shot {k}")))?;
        q_maps.push(q_k);
        s_maps.push(s_k);
    }
    match config.shots {
        ShotAggregation::MeanFeatures => {
            let q_mean = mean_vars(tape, &q_maps)?;
            let s_mean = mean_vars(tape, &s_maps)?;
            fuse(tape, q_mean, s_mean, &config.fusion, psi)
        }
        ShotAggregation::MeanOutputs => {
            let outputs: Vec<Var> = q_maps
                .iter()
                .zip(&s_maps)
                .map(|(&q_k, &s_k)| fuse(tape, q_k, s_k, &config.fusion, psi))
                .collect::<Result<_, _>>()?;
            mean_vars(tape, &outputs)
        }
    }
}

/// Produces one class-specific map per entry of `supports`, each on the
/// query grid (or the support grid if the query side is re-aligned).
/// Errors carry the offending class and shot.
pub fn aaf_forward<S: Scalar, K: Ord + Clone + Display>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    query: Var,
    supports: &BTreeMap<K, Vec<Var>>,
    psi: &[Option<(Var, Var)>],
) -> Result<BTreeMap<K, Var>, AafError> {
    supports
        .iter()
        .map(|(class, shots)| {
            class_forward(tape, config, query, shots, psi)
                .map(|out| (class.clone(), out))
                .map_err(|e| e.in_context(format!("class {class}")))
        })
        .collect()
}

/// Runs the operator independently per pyramid level with shared fusion
/// parameters. Each level carries its own query map and support shots.
pub fn multiscale_forward<S: Scalar, K: Ord + Clone + Display>(
    tape: &mut GradTape<S>,
    config: &PipelineConfig,
    levels: &[(Var, BTreeMap<K, Vec<Var>>)],
    psi: &[Option<(Var, Var)>],
) -> Result<Vec<BTreeMap<K, Var>>, AafError> {
    levels
        .iter()
        .enumerate()
        .map(|(index, (query, supports))| {
            aaf_forward(tape, config, *query, supports, psi)
                .map_err(|e| e.in_context(format!("pyramid level {index}")))
        })
        .collect()
}

/// Named ready-made configurations.
pub const PRESET_NAMES: [&str; 5] = ["identity", "frw", "drl", "dana_lite", "mfrcn_lite"];

/// Looks up a ready-made configuration by name.
pub fn preset(name: &str) -> Result<PipelineConfig, AafError> {
    let base = PipelineConfig::identity();
    match name {
        // No-op reference point.
        "identity" => Ok(base),
        // Feature reweighting: the pooled support vector scales the query
        // channels; no alignment, no fusion stage.
        "frw" => Ok(PipelineConfig {
            attend_query: AttentionKind::SupportPoolReweight {
                mode: PoolMode::Max,
            },
            ..base
        }),
        // Distance/relation-style fusion: mean-pooled support broadcast
        // against the query, three fixed components.
        "drl" => Ok(PipelineConfig {
            fusion: FusionKind {
                support_pool: Some(PoolMode::Avg),
                components: vec![
                    FusionComponent {
                        op: FusionOp::Mul,
                        learnable: false,
                    },
                    FusionComponent {
                        op: FusionOp::Sub,
                        learnable: false,
                    },
                    FusionComponent {
                        op: FusionOp::Identity,
                        learnable: false,
                    },
                ],
            },
            ..base
        }),
        // Attenuate support background first, then transport the support
        // map onto the query grid and concatenate.
        "dana_lite" => Ok(PipelineConfig {
            order: OpOrder::AttendThenAlign,
            align_support: AffinityKind::SoftmaxDotProduct {
                scale: AffinityScale::InvSqrtChannels,
            },
            attend_support: AttentionKind::BackgroundAttenuation,
            fusion: FusionKind {
                support_pool: None,
                components: vec![FusionComponent {
                    op: FusionOp::Cat,
                    learnable: false,
                }],
            },
            ..base
        }),
        // Transport support onto the query grid, reweight it by global
        // similarity, then fuse with learnable difference + concat maps.
        "mfrcn_lite" => Ok(PipelineConfig {
            align_support: AffinityKind::SoftmaxDotProduct {
                scale: AffinityScale::InvSqrtChannels,
            },
            attend_support: AttentionKind::SimilarityReweight,
            fusion: FusionKind {
                support_pool: None,
                components: vec![
                    FusionComponent {
                        op: FusionOp::Sub,
                        learnable: true,
                    },
                    FusionComponent {
                        op: FusionOp::Cat,
                        learnable: true,
                    },
                ],
            },
            ..base
        }),
        other => Err(AafError::UnknownPreset {
            name: other.to_string(),
        }),
    }
}
