//! A four-block convolutional feature extractor shared by query images
//! and support crops, built from patch extraction and matrix products so
//! every weight is reachable by the reverse pass.

use crate::error::HarnessError;
use aaf_core::params::ParamSet;
use aaf_core::tape::{ConvGeom, GradTape, Var};
use aaf_core::{Tensor64, GradTape64};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// Channel width of the final feature map.
pub const FEATURE_CHANNELS: usize = 64;

/// `(input channels, output channels, stride)` per block; 3×3 kernels
/// with one pixel of padding throughout.
const BLOCKS: [(usize, usize, usize); 4] = [(3, 8, 2), (8, 16, 2), (16, 32, 2), (32, 64, 1)];

/// Extra stride-2 block appended when a second pyramid level is wanted.
const LEVEL2_BLOCK: (usize, usize, usize) = (64, 64, 2);

/// One resolution of backbone output.
#[derive(Debug, Clone, Copy)]
pub struct FeatureLevel {
    /// `[grid * grid, channels]` feature map on the tape.
    pub map: Var,
    /// Cells per side.
    pub grid: usize,
    /// Input pixels per cell.
    pub stride: usize,
}

fn blocks(two_level: bool) -> Vec<(usize, usize, usize)> {
    let mut all = BLOCKS.to_vec();
    if two_level {
        all.push(LEVEL2_BLOCK);
    }
    all
}

/// Inserts freshly initialized convolution weights: He-scaled Gaussian
/// kernels and zero biases, named `backbone.conv{i}.w` / `.b`.
pub fn init_backbone_params<R: Rng>(
    params: &mut ParamSet<f64>,
    rng: &mut R,
    two_level: bool,
) -> Result<(), HarnessError> {
    for (i, (in_c, out_c, _)) in blocks(two_level).into_iter().enumerate() {
        let fan_in = 9 * in_c;
        let sigma = (2.0 / fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * out_c)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        params.insert(
            &format!("backbone.conv{i}.w"),
            Tensor64::new(vec![fan_in, out_c], data).expect("kernel buffer size"),
        )?;
        params.insert(
            &format!("backbone.conv{i}.b"),
            Tensor64::zeros(vec![1, out_c]),
        )?;
    }
    Ok(())
}

/// Runs the stack over a `[size, size, 3]` image already known to the
/// tape, returning one entry per pyramid level (coarsest last).
pub fn backbone_forward(
    tape: &mut GradTape64,
    bindings: &BTreeMap<String, Var>,
    image: Var,
    two_level: bool,
) -> Result<Vec<FeatureLevel>, HarnessError> {
    let shape = tape.shape_of(image).to_vec();
    if shape.len() != 3 || shape[0] != shape[1] || shape[2] != 3 {
        return Err(HarnessError::BadImage { got: shape });
    }
    let mut side = shape[0];
    let mut x = image;
    let mut total_stride = 1;
    let mut levels = Vec::new();
    let all = blocks(two_level);
    let last_main = BLOCKS.len() - 1;
    for (i, (in_c, out_c, stride)) in all.into_iter().enumerate() {
        let geom = ConvGeom {
            in_h: side,
            in_w: side,
            in_c,
            kernel: 3,
            stride,
            pad: 1,
        };
        let w = binding(bindings, &format!("backbone.conv{i}.w"))?;
        let b = binding(bindings, &format!("backbone.conv{i}.b"))?;
        let cols = tape.im2col(x, geom)?;
        let lin = tape.matmul(cols, w)?;
        let lin = tape.add_row(lin, b)?;
        let act = tape.relu(lin);
        side = geom.out_h();
        total_stride *= stride;
        if i >= last_main {
            levels.push(FeatureLevel {
                map: act,
                grid: side,
                stride: total_stride,
            });
        }
        x = tape.reshape(act, vec![side, side, out_c])?;
    }
    Ok(levels)
}

pub(crate) fn binding(
    bindings: &BTreeMap<String, Var>,
    name: &str,
) -> Result<Var, HarnessError> {
    bindings
        .get(name)
        .copied()
        .ok_or_else(|| aaf_core::AafError::MissingGrad { name: name.into() }.into())
}

/// Registers an image tensor on the tape without gradient tracking.
pub fn image_input(tape: &mut GradTape<f64>, image: &Tensor64) -> Var {
    tape.constant(image)
}
