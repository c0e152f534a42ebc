//! Assembly of the full detector: shared backbone, class-conditioning
//! pipeline, and detection head, with all parameters in one store.

use crate::backbone::{
    backbone_forward, image_input, init_backbone_params, FeatureLevel, FEATURE_CHANNELS,
};
use crate::classes::ClassId;
use crate::error::HarnessError;
use crate::head::{head_forward, init_head_params};
use aaf_core::pipeline::{aaf_forward, bind_fusion_psi, init_pipeline_params, PipelineConfig};
use aaf_core::tape::Var;
use aaf_core::{GradTape64, ParamSet64, Tensor64};
use rand::Rng;
use std::collections::BTreeMap;

/// Architecture description: the class-conditioning pipeline plus whether
/// a second, coarser pyramid level is used.
#[derive(Debug, Clone)]
pub struct DetectorSpec {
    pub pipeline: PipelineConfig,
    pub two_level: bool,
}

impl DetectorSpec {
    pub fn new(pipeline: PipelineConfig) -> Self {
        DetectorSpec {
            pipeline,
            two_level: false,
        }
    }

    /// Channel count entering the head.
    pub fn fused_channels(&self) -> usize {
        self.pipeline.fusion.out_channels(FEATURE_CHANNELS)
    }
}

/// Freshly initialized parameters for every stage.
pub fn init_detector_params<R: Rng>(
    spec: &DetectorSpec,
    rng: &mut R,
) -> Result<ParamSet64, HarnessError> {
    let mut params = ParamSet64::new();
    init_backbone_params(&mut params, rng, spec.two_level)?;
    init_head_params(&mut params, rng, spec.fused_channels())?;
    let psi = init_pipeline_params::<f64, _>(&spec.pipeline, FEATURE_CHANNELS, rng)?;
    for (name, tensor) in psi.iter() {
        params.insert(name, tensor.clone())?;
    }
    Ok(params)
}

/// Backbone features of every support crop, grouped per pyramid level
/// then per class. Computed once per parameter state and shared by all
/// query images.
pub fn support_feature_maps(
    tape: &mut GradTape64,
    bindings: &BTreeMap<String, Var>,
    spec: &DetectorSpec,
    support: &BTreeMap<ClassId, Vec<Tensor64>>,
) -> Result<Vec<BTreeMap<ClassId, Vec<Var>>>, HarnessError> {
    let n_levels = if spec.two_level { 2 } else { 1 };
    let mut per_level: Vec<BTreeMap<ClassId, Vec<Var>>> = vec![BTreeMap::new(); n_levels];
    for (class, crops) in support {
        if crops.is_empty() {
            return Err(HarnessError::NoShots);
        }
        for crop in crops {
            let img = image_input(tape, crop);
            let levels = backbone_forward(tape, bindings, img, spec.two_level)?;
            for (level, feat) in levels.into_iter().enumerate() {
                per_level[level]
                    .entry(*class)
                    .or_default()
                    .push(feat.map);
            }
        }
    }
    Ok(per_level)
}

/// Raw head outputs for one query image, per pyramid level and class.
pub struct LevelHeads {
    pub grid: usize,
    pub stride: usize,
    pub class_outputs: BTreeMap<ClassId, Var>,
}

/// Full forward pass for one image: backbone, per-class conditioning
/// against the support maps, then the shared head.
pub fn detector_forward(
    tape: &mut GradTape64,
    bindings: &BTreeMap<String, Var>,
    spec: &DetectorSpec,
    image: &Tensor64,
    supports_per_level: &[BTreeMap<ClassId, Vec<Var>>],
) -> Result<Vec<LevelHeads>, HarnessError> {
    let img = image_input(tape, image);
    let levels: Vec<FeatureLevel> = backbone_forward(tape, bindings, img, spec.two_level)?;
    if levels.len() != supports_per_level.len() {
        return Err(HarnessError::BadImage {
            got: vec![levels.len(), supports_per_level.len()],
        });
    }
    let psi = bind_fusion_psi(&spec.pipeline, bindings)?;
    let mut out = Vec::with_capacity(levels.len());
    for (feat, supports) in levels.iter().zip(supports_per_level) {
        let fused = aaf_forward(tape, &spec.pipeline, feat.map, supports, &psi)?;
        let mut class_outputs = BTreeMap::new();
        for (class, map) in fused {
            class_outputs.insert(class, head_forward(tape, bindings, map)?);
        }
        out.push(LevelHeads {
            grid: feat.grid,
            stride: feat.stride,
            class_outputs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ALL_CLASSES;
    use crate::head::HEAD_OUTPUTS;
    use aaf_core::pipeline::preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_support(k: usize) -> BTreeMap<ClassId, Vec<Tensor64>> {
        let mut support = BTreeMap::new();
        for (i, class) in ALL_CLASSES.iter().take(2).enumerate() {
            let crops = (0..k)
                .map(|j| Tensor64::full(vec![32, 32, 3], 0.2 + 0.1 * (i + j) as f64))
                .collect();
            support.insert(*class, crops);
        }
        support
    }

    #[test]
    fn every_preset_produces_head_outputs_per_class() {
        for name in aaf_core::pipeline::PRESET_NAMES {
            let spec = DetectorSpec::new(preset(name).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let params = init_detector_params(&spec, &mut rng).unwrap();
            let mut tape = GradTape64::new();
            let bindings = params.bind(&mut tape);
            let supports =
                support_feature_maps(&mut tape, &bindings, &spec, &tiny_support(2)).unwrap();
            let image = Tensor64::full(vec![64, 64, 3], 0.5);
            let heads =
                detector_forward(&mut tape, &bindings, &spec, &image, &supports).unwrap();
            assert_eq!(heads.len(), 1, "{name}: single pyramid level");
            assert_eq!(heads[0].grid, 8);
            assert_eq!(heads[0].class_outputs.len(), 2, "{name}: one map per class");
            for out in heads[0].class_outputs.values() {
                assert_eq!(tape.shape_of(*out), &[64, HEAD_OUTPUTS], "{name}");
            }
        }
    }

    #[test]
    fn class_outputs_differ_when_supports_differ() {
        let spec = DetectorSpec::new(preset("frw").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = init_detector_params(&spec, &mut rng).unwrap();
        let mut tape = GradTape64::new();
        let bindings = params.bind(&mut tape);
        let supports =
            support_feature_maps(&mut tape, &bindings, &spec, &tiny_support(1)).unwrap();
        let image = Tensor64::full(vec![64, 64, 3], 0.5);
        let heads = detector_forward(&mut tape, &bindings, &spec, &image, &supports).unwrap();
        let outs: Vec<Var> = heads[0].class_outputs.values().copied().collect();
        let diff = tape
            .value(outs[0])
            .max_abs_diff(tape.value(outs[1]))
            .unwrap();
        assert!(
            diff > 1e-9,
            "different supports should condition the head differently"
        );
    }

    #[test]
    fn two_level_spec_yields_two_head_grids() {
        let mut spec = DetectorSpec::new(preset("frw").unwrap());
        spec.two_level = true;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = init_detector_params(&spec, &mut rng).unwrap();
        let mut tape = GradTape64::new();
        let bindings = params.bind(&mut tape);
        let supports =
            support_feature_maps(&mut tape, &bindings, &spec, &tiny_support(1)).unwrap();
        let image = Tensor64::full(vec![64, 64, 3], 0.5);
        let heads = detector_forward(&mut tape, &bindings, &spec, &image, &supports).unwrap();
        assert_eq!(heads.len(), 2);
        assert_eq!((heads[0].grid, heads[0].stride), (8, 8));
        assert_eq!((heads[1].grid, heads[1].stride), (4, 16));
    }

    #[test]
    fn learnable_preset_registers_psi_parameters() {
        let spec = DetectorSpec::new(preset("mfrcn_lite").unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = init_detector_params(&spec, &mut rng).unwrap();
        assert!(params.get("fusion.psi0.w").is_some());
        assert!(params.get("fusion.psi1.w").is_some());
        assert!(params.get("head.hidden.w").is_some());
        assert!(params.get("head.out.w").is_some());
        assert!(params.get("backbone.conv0.w").is_some());
    }
}
