//! Anchor-free detection head: a small pointwise network per cell
//! producing a class score logit and four log-scale box offsets, shared
//! across classes.

use crate::backbone::binding;
use crate::error::HarnessError;
use aaf_core::params::ParamSet;
use aaf_core::tape::Var;
use aaf_core::{GradTape64, Tensor64};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// Columns per cell: score logit then left/top/right/bottom offsets.
pub const HEAD_OUTPUTS: usize = 5;

/// Hidden width of the per-cell network.
pub const HEAD_HIDDEN: usize = 64;

/// Starting score bias; keeps early sigmoid scores low so the focal loss
/// is not swamped by confident false positives.
const SCORE_BIAS: f64 = -2.0;

/// Inserts head weights for maps of `in_channels` channels: a hidden
/// pointwise layer (`head.hidden.*`) and the output map (`head.out.*`).
pub fn init_head_params<R: Rng>(
    params: &mut ParamSet<f64>,
    rng: &mut R,
    in_channels: usize,
) -> Result<(), HarnessError> {
    let hidden_sigma = (2.0 / in_channels as f64).sqrt();
    let hidden: Vec<f64> = (0..in_channels * HEAD_HIDDEN)
        .map(|_| hidden_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    params.insert(
        "head.hidden.w",
        Tensor64::new(vec![in_channels, HEAD_HIDDEN], hidden).expect("hidden buffer size"),
    )?;
    params.insert("head.hidden.b", Tensor64::zeros(vec![1, HEAD_HIDDEN]))?;

    let out_sigma = 0.05;
    let out: Vec<f64> = (0..HEAD_HIDDEN * HEAD_OUTPUTS)
        .map(|_| out_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    params.insert(
        "head.out.w",
        Tensor64::new(vec![HEAD_HIDDEN, HEAD_OUTPUTS], out).expect("output buffer size"),
    )?;
    let mut bias = vec![0.0; HEAD_OUTPUTS];
    bias[0] = SCORE_BIAS;
    params.insert(
        "head.out.b",
        Tensor64::new(vec![1, HEAD_OUTPUTS], bias).expect("bias size"),
    )?;
    Ok(())
}

/// Applies the head to a fused `[positions, channels]` map, returning raw
/// `[positions, 5]` outputs (no sigmoid or exp applied yet).
pub fn head_forward(
    tape: &mut GradTape64,
    bindings: &BTreeMap<String, Var>,
    fused: Var,
) -> Result<Var, HarnessError> {
    let hw = binding(bindings, "head.hidden.w")?;
    let hb = binding(bindings, "head.hidden.b")?;
    let ow = binding(bindings, "head.out.w")?;
    let ob = binding(bindings, "head.out.b")?;
    let pre = tape.pointwise_linear(fused, hw, hb)?;
    let act = tape.relu(pre);
    Ok(tape.pointwise_linear(act, ow, ob)?)
}
