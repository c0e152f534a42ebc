//! Property tests for the operator invariants: convexity of softmax
//! alignment, concat/slice inversion, exact pass-through of the identity
//! pipeline, and agreement between shape prediction and execution.

use aaf_core::ops::{
    align, AffinityKind, AffinityScale, AttentionKind, FusionComponent, FusionKind, FusionOp,
};
use aaf_core::pipeline::{class_forward, OpOrder, PipelineConfig, ShotAggregation};
use aaf_core::tape::PoolMode;
use aaf_core::{AafError, GradTape64, Tensor64};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..6, 1usize..6, 1usize..5)
}

proptest! {
    /// Every softmax-aligned value is a convex combination of the source
    /// column, so it can never escape that column's range.
    #[test]
    fn aligned_values_stay_inside_source_range(
        (m, n, d) in dims(),
        raw in proptest::collection::vec(-3.0f64..3.0, 64),
        fixed_scale in prop_oneof![Just(None), (0.1f64..3.0).prop_map(Some)],
    ) {
        let phi = Tensor64::new(vec![m, d], raw[..m * d].to_vec()).unwrap();
        let rho = Tensor64::new(vec![n, d], raw[32..32 + n * d].to_vec()).unwrap();
        let scale = match fixed_scale {
            Some(c) => AffinityScale::Fixed(c),
            None => AffinityScale::InvSqrtChannels,
        };
        let mut tape = GradTape64::new();
        let p = tape.constant(&phi);
        let r = tape.constant(&rho);
        let out = align(&mut tape, p, r, AffinityKind::SoftmaxDotProduct { scale }).unwrap();
        let out = tape.value(out);
        prop_assert_eq!(out.shape(), &[n, d]);
        for c in 0..d {
            let column: Vec<f64> = (0..m).map(|i| phi.at2(i, c)).collect();
            let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for j in 0..n {
                let v = out.at2(j, c);
                prop_assert!(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    "row {} channel {}: {} outside [{}, {}]", j, c, v, lo, hi
                );
            }
        }
    }

    /// Softmax over source positions produces strictly positive weights
    /// that sum to one per output position.
    #[test]
    fn affinity_columns_are_distributions(
        (m, n, d) in dims(),
        data in proptest::collection::vec(-4.0f64..4.0, 64),
    ) {
        let phi = Tensor64::new(vec![m, d], data[..m * d].to_vec()).unwrap();
        let rho = Tensor64::new(vec![n, d], data[32 - n * d..32].to_vec()).unwrap();
        let mut tape = GradTape64::new();
        let p = tape.constant(&phi);
        let r = tape.constant(&rho);
        let kind = AffinityKind::SoftmaxDotProduct { scale: AffinityScale::InvSqrtChannels };
        let a = aaf_core::ops::build_affinity(&mut tape, kind, p, r).unwrap();
        let a = tape.value(a);
        prop_assert_eq!(a.shape(), &[m, n]);
        for j in 0..n {
            let mut total = 0.0;
            for i in 0..m {
                let w = a.at2(i, j);
                prop_assert!(w > 0.0, "weight ({}, {}) is {}", i, j, w);
                total += w;
            }
            prop_assert!((total - 1.0).abs() <= 1e-12, "column {} sums to {}", j, total);
        }
    }

    /// Concatenating along channels and slicing back returns the original
    /// bytes: the pair is an exact inverse.
    #[test]
    fn concat_then_slice_is_identity(
        rows in 1usize..5,
        d1 in 1usize..4,
        d2 in 1usize..4,
        raw in proptest::collection::vec(-9.0f64..9.0, 48),
    ) {
        let a = Tensor64::new(vec![rows, d1], raw[..rows * d1].to_vec()).unwrap();
        let b = Tensor64::new(vec![rows, d2], raw[24..24 + rows * d2].to_vec()).unwrap();
        let mut tape = GradTape64::new();
        let va = tape.constant(&a);
        let vb = tape.constant(&b);
        let cat = tape.concat_channels(&[va, vb]).unwrap();
        let left = tape.slice_cols(cat, 0, d1).unwrap();
        let right = tape.slice_cols(cat, d1, d2).unwrap();
        prop_assert_eq!(tape.value(left).data(), a.data());
        prop_assert_eq!(tape.value(right).data(), b.data());
    }

    /// The all-identity pipeline hands the query tensor back bit for bit,
    /// regardless of shot count or support contents.
    #[test]
    fn identity_pipeline_is_bit_exact(
        (m, n, d) in dims(),
        shots in 1usize..4,
        raw in proptest::collection::vec(-3.0f64..3.0, 150),
    ) {
        let query = Tensor64::new(vec![m, d], raw[..m * d].to_vec()).unwrap();
        let mut tape = GradTape64::new();
        let q = tape.constant(&query);
        let shot_vars: Vec<_> = (0..shots)
            .map(|s| {
                let t = Tensor64::new(vec![n, d], raw[30 + s * n * d..30 + (s + 1) * n * d].to_vec()).unwrap();
                tape.constant(&t)
            })
            .collect();
        let config = PipelineConfig::identity();
        let out = class_forward(&mut tape, &config, q, &shot_vars, &[]).unwrap();
        prop_assert_eq!(out, q, "identity pipeline should return the query node itself");
        prop_assert_eq!(tape.value(out).data(), query.data());
    }

    /// Whatever `check_shapes` promises, execution delivers: accepted
    /// configurations run and produce the predicted extents; rejected ones
    /// fail in the forward pass with the same underlying error kind.
    #[test]
    fn shape_prediction_matches_execution(
        (m, n, d) in dims(),
        support_d in 1usize..5,
        order_flip in any::<bool>(),
        shots_flip in any::<bool>(),
        aq in 0usize..3,
        as_ in 0usize..3,
        tq in 0usize..4,
        ts in 0usize..4,
        pool in prop_oneof![Just(None), Just(Some(PoolMode::Max)), Just(Some(PoolMode::Avg))],
        ops in proptest::collection::vec(0usize..5, 0..3),
        raw in proptest::collection::vec(-2.0f64..2.0, 200),
    ) {
        let affinity = |i: usize| match i {
            0 => AffinityKind::Identity,
            1 => AffinityKind::DotProduct,
            _ => AffinityKind::SoftmaxDotProduct { scale: AffinityScale::InvSqrtChannels },
        };
        let attention = |i: usize| match i {
            0 => AttentionKind::None,
            1 => AttentionKind::SupportPoolReweight { mode: PoolMode::Max },
            2 => AttentionKind::BackgroundAttenuation,
            _ => AttentionKind::SimilarityReweight,
        };
        let fusion_op = |i: usize| match i {
            0 => FusionOp::Mul,
            1 => FusionOp::Sub,
            2 => FusionOp::Add,
            3 => FusionOp::Identity,
            _ => FusionOp::Cat,
        };
        let config = PipelineConfig {
            order: if order_flip { OpOrder::AttendThenAlign } else { OpOrder::AlignThenAttend },
            shots: if shots_flip { ShotAggregation::MeanOutputs } else { ShotAggregation::MeanFeatures },
            align_query: affinity(aq),
            align_support: affinity(as_),
            attend_query: attention(tq),
            attend_support: attention(ts),
            fusion: FusionKind {
                support_pool: pool,
                components: ops
                    .iter()
                    .map(|&i| FusionComponent { op: fusion_op(i), learnable: false })
                    .collect(),
            },
        };
        let query = Tensor64::new(vec![m, d], raw[..m * d].to_vec()).unwrap();
        let shot = Tensor64::new(vec![n, support_d], raw[50..50 + n * support_d].to_vec()).unwrap();

        let predicted = config.check_shapes(m, n, d, support_d);
        let mut tape = GradTape64::new();
        let q = tape.constant(&query);
        let s = tape.constant(&shot);
        let supports = BTreeMap::from([("c", vec![s])]);
        let ran = aaf_core::pipeline::aaf_forward(&mut tape, &config, q, &supports, &[]);

        match (predicted, ran) {
            (Ok(report), Ok(outs)) => {
                let out = tape.value(outs["c"]);
                prop_assert_eq!(
                    out.shape(),
                    &[report.positions, report.channels],
                    "prediction and execution disagree on the output shape"
                );
            }
            (Err(want), Err(got)) => {
                let want = std::mem::discriminant(want.root_cause());
                let got = std::mem::discriminant(got.root_cause());
                prop_assert_eq!(want, got, "prediction and execution fail differently");
            }
            (Ok(report), Err(e)) => {
                return Err(TestCaseError::fail(format!(
                    "accepted by check_shapes ({report:?}) but execution failed: {e}"
                )));
            }
            (Err(e), Ok(_)) => {
                return Err(TestCaseError::fail(format!(
                    "rejected by check_shapes ({e}) but execution succeeded"
                )));
            }
        }
    }

    /// Min of two tensors never invents values: the result equals one of
    /// the inputs per coordinate and is symmetric.
    #[test]
    fn elementwise_min_is_symmetric_selection(
        rows in 1usize..4,
        cols in 1usize..4,
        raw in proptest::collection::vec(-5.0f64..5.0, 32),
    ) {
        let a = Tensor64::new(vec![rows, cols], raw[..rows * cols].to_vec()).unwrap();
        let b = Tensor64::new(vec![rows, cols], raw[16..16 + rows * cols].to_vec()).unwrap();
        let mut tape = GradTape64::new();
        let va = tape.constant(&a);
        let vb = tape.constant(&b);
        let m1 = tape.min(va, vb).unwrap();
        let m2 = tape.min(vb, va).unwrap();
        prop_assert_eq!(tape.value(m1).data(), tape.value(m2).data());
        for (i, &v) in tape.value(m1).data().iter().enumerate() {
            prop_assert!(v == a.data()[i].min(b.data()[i]));
        }
    }
}

#[test]
fn channel_mismatch_is_refused_before_any_work() {
    let config = PipelineConfig::identity();
    let err = config.check_shapes(4, 4, 8, 16).unwrap_err();
    assert!(
        matches!(err, AafError::ChannelMismatch { .. }),
        "expected a channel mismatch, got {err}"
    );
}
