//! Alignment, attention, and fusion operators over `[positions, channels]`
//! feature maps.
//!
//! Conventions: a map with `m` spatial positions and `d` channels is a
//! rank-2 tensor `[m, d]`. `align(phi, rho, ..)` re-expresses `phi` on
//! `rho`'s grid; `attend(phi, rho, ..)` reweights `phi`'s channels,
//! consulting `rho` when the variant calls for it; `fuse(phi, rho, ..)`
//! combines two maps on a shared grid into one.

use crate::error::AafError;
use crate::scalar::Scalar;
use crate::tape::{EwOp, GradTape, PoolMode, Var};
use crate::tensor::Tensor;

/// Temperature applied to raw dot products before the affinity softmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffinityScale {
    Fixed(f64),
    /// `1 / sqrt(channels)`, resolved against the maps at hand.
    InvSqrtChannels,
}

impl AffinityScale {
    pub fn resolve(&self, channels: usize) -> f64 {
        match *self {
            AffinityScale::Fixed(c) => c,
            AffinityScale::InvSqrtChannels => 1.0 / (channels as f64).sqrt(),
        }
    }
}

/// How the soft-assignment matrix between two maps is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffinityKind {
    /// The identity matrix; only meaningful when both grids match. In a
    /// pipeline this reads as "no alignment performed".
    Identity,
    /// Raw similarities `phi . rho^T`, unnormalized.
    DotProduct,
    /// Softmax over source positions of the scaled similarities, so each
    /// output position is a convex combination of source features.
    SoftmaxDotProduct { scale: AffinityScale },
}

/// Channel reweighting applied to one map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttentionKind {
    None,
    /// Reweight `phi` by `rho` pooled over positions.
    SupportPoolReweight { mode: PoolMode },
    /// Self-gating: reweight `phi` by a sigmoid of its own per-channel mean.
    BackgroundAttenuation,
    /// Reweight `phi` by a similarity-weighted average of `rho`'s rows.
    SimilarityReweight,
}

/// One fusion component, taking the pair of maps to a single map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionOp {
    /// `phi * rho` per element.
    Mul,
    /// `phi - rho` per element.
    Sub,
    /// `phi + rho` per element.
    Add,
    /// The first map unchanged.
    Identity,
    /// `[phi ; rho]` along channels.
    Cat,
}

impl FusionOp {
    /// Channel width of this component's output for `d`-channel inputs.
    pub fn out_channels(&self, d: usize) -> usize {
        match self {
            FusionOp::Cat => 2 * d,
            _ => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionComponent {
    pub op: FusionOp,
    /// Apply a per-position affine map to the component output before
    /// concatenation.
    pub learnable: bool,
}

/// Full fusion recipe: optional pooling of the support side to a single
/// broadcastable position, then a channel concatenation of components.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionKind {
    pub support_pool: Option<PoolMode>,
    pub components: Vec<FusionComponent>,
}

impl FusionKind {
    /// Pass-through: the first map survives untouched.
    pub fn none() -> Self {
        FusionKind {
            support_pool: None,
            components: Vec::new(),
        }
    }

    pub fn is_none(&self) -> bool {
        self.components.is_empty()
    }

    /// Output channel width for `d`-channel inputs (`d` when pass-through).
    pub fn out_channels(&self, d: usize) -> usize {
        if self.components.is_empty() {
            d
        } else {
            self.components.iter().map(|c| c.op.out_channels(d)).sum()
        }
    }
}

fn check_channels<S: Scalar>(
    tape: &GradTape<S>,
    op: &'static str,
    a: Var,
    b: Var,
) -> Result<(usize, usize, usize), AafError> {
    let sa = tape.shape_of(a);
    let sb = tape.shape_of(b);
    if sa.len() != 2 {
        return Err(AafError::RankMismatch {
            op,
            expected: 2,
            shape: sa.to_vec(),
        });
    }
    if sb.len() != 2 {
        return Err(AafError::RankMismatch {
            op,
            expected: 2,
            shape: sb.to_vec(),
        });
    }
    if sa[1] != sb[1] {
        return Err(AafError::ChannelMismatch {
            op,
            lhs: sa[1],
            rhs: sb[1],
        });
    }
    Ok((sa[0], sb[0], sa[1]))
}

/// Soft-assignment matrix from each position of `phi` to each position of
/// `rho`, shape `[m, n]`. With the softmax variant every column is a convex
/// weighting over `phi`'s positions.
pub fn build_affinity<S: Scalar>(
    tape: &mut GradTape<S>,
    kind: AffinityKind,
    phi: Var,
    rho: Var,
) -> Result<Var, AafError> {
    let (m, n, d) = check_channels(tape, "build_affinity", phi, rho)?;
    match kind {
        AffinityKind::Identity => {
            if m != n {
                return Err(AafError::IdentityExtent { m, n });
            }
            Ok(tape.constant(&Tensor::eye(m)))
        }
        AffinityKind::DotProduct => {
            let rho_t = tape.transpose(rho)?;
            tape.matmul(phi, rho_t)
        }
        AffinityKind::SoftmaxDotProduct { scale } => {
            let rho_t = tape.transpose(rho)?;
            let mut dots = tape.matmul(phi, rho_t)?;
            let c = scale.resolve(d);
            if c != 1.0 {
                dots = tape.scale(dots, S::lit(c));
            }
            tape.softmax(dots, 0)
        }
    }
}

/// Transports `phi` onto `rho`'s grid: `A(phi, rho)^T . phi`, shape `[n, d]`.
/// The identity kind returns `phi` unchanged (grids must already match).
pub fn align<S: Scalar>(
    tape: &mut GradTape<S>,
    phi: Var,
    rho: Var,
    kind: AffinityKind,
) -> Result<Var, AafError> {
    if let AffinityKind::Identity = kind {
        let (m, n, _) = check_channels(tape, "align", phi, rho)?;
        if m != n {
            return Err(AafError::IdentityExtent { m, n });
        }
        return Ok(phi);
    }
    let affinity = build_affinity(tape, kind, phi, rho)?;
    let at = tape.transpose(affinity)?;
    tape.matmul(at, phi)
}

/// Applies one attention variant to `phi`. `None` returns `phi` untouched
/// (same tape node). Reweighting values are used as-is; negative weights
/// are allowed.
pub fn attend<S: Scalar>(
    tape: &mut GradTape<S>,
    phi: Var,
    rho: Var,
    kind: AttentionKind,
) -> Result<Var, AafError> {
    check_channels(tape, "attend", phi, rho)?;
    match kind {
        AttentionKind::None => Ok(phi),
        AttentionKind::SupportPoolReweight { mode } => {
            let weights = tape.global_pool(rho, mode)?;
            tape.mul_row(phi, weights)
        }
        AttentionKind::BackgroundAttenuation => {
            let pooled = tape.global_pool(phi, PoolMode::Avg)?;
            let gate = tape.sigmoid(pooled);
            tape.mul_row(phi, gate)
        }
        AttentionKind::SimilarityReweight => {
            let rho_t = tape.transpose(rho)?;
            let sim = tape.matmul(phi, rho_t)?;
            let pooled = tape.global_pool(sim, PoolMode::Avg)?;
            let weights = tape.softmax(pooled, 1)?;
            let summary = tape.matmul(weights, rho)?;
            tape.mul_row(phi, summary)
        }
    }
}

/// Combines two maps on a shared grid. Components run point-wise, so `rho`
/// must share `phi`'s grid unless `support_pool` collapses it to one
/// broadcastable position first. An empty component list passes `phi`
/// through unchanged.
///
/// `psi` carries one optional `(weight, bias)` pair per component; it must
/// be `Some` exactly for the components marked learnable. When nothing is
/// learnable the slice may simply be left empty.
pub fn fuse<S: Scalar>(
    tape: &mut GradTape<S>,
    phi: Var,
    rho: Var,
    kind: &FusionKind,
    psi: &[Option<(Var, Var)>],
) -> Result<Var, AafError> {
    let (m_q, m_s, _) = check_channels(tape, "fuse", phi, rho)?;
    if kind.components.is_empty() {
        return Ok(phi);
    }
    let no_learnables = kind.components.iter().all(|c| !c.learnable);
    if psi.len() != kind.components.len() && !(psi.is_empty() && no_learnables) {
        return Err(AafError::ParamStore(format!(
            "fusion has {} components but {} affine maps were supplied",
            kind.components.len(),
            psi.len()
        )));
    }
    let none_psi = vec![None; kind.components.len()];
    let psi = if psi.is_empty() { &none_psi } else { psi };

    let rho = match kind.support_pool {
        Some(mode) => {
            let pooled = tape.global_pool(rho, mode)?;
            tape.broadcast_rows(pooled, m_q)?
        }
        None => {
            if m_s != m_q {
                return Err(AafError::FusionExtent { m: m_q, n: m_s });
            }
            rho
        }
    };

    let mut parts = Vec::with_capacity(kind.components.len());
    for (i, (component, maps)) in kind.components.iter().zip(psi).enumerate() {
        let raw = match component.op {
            FusionOp::Mul => tape.elementwise(EwOp::Mul, phi, rho)?,
            FusionOp::Sub => tape.elementwise(EwOp::Sub, phi, rho)?,
            FusionOp::Add => tape.elementwise(EwOp::Add, phi, rho)?,
            FusionOp::Identity => phi,
            FusionOp::Cat => tape.concat_channels(&[phi, rho])?,
        };
        let part = match (component.learnable, maps) {
            (true, Some((w, b))) => tape.pointwise_linear(raw, *w, *b)?,
            (false, None) => raw,
            (true, None) => {
                return Err(AafError::ParamStore(format!(
                    "fusion component {i} is learnable but no affine map was supplied"
                )))
            }
            (false, Some(_)) => {
                return Err(AafError::ParamStore(format!(
                    "fusion component {i} is fixed but an affine map was supplied"
                )))
            }
        };
        parts.push(part);
    }
    tape.concat_channels(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_affinity_is_the_identity_matrix() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]));
        let a = build_affinity(&mut tape, AffinityKind::Identity, phi, phi).unwrap();
        assert_eq!(tape.value(a), &Tensor::eye(3));
    }

    #[test]
    fn identity_affinity_rejects_extent_mismatch() {
        let mut tape = GradTape::<f64>::new();
        let phi = tape.constant(&Tensor::zeros(vec![3, 2]));
        let rho = tape.constant(&Tensor::zeros(vec![2, 2]));
        assert!(matches!(
            build_affinity(&mut tape, AffinityKind::Identity, phi, rho),
            Err(AafError::IdentityExtent { m: 3, n: 2 })
        ));
        assert!(matches!(
            align(&mut tape, phi, rho, AffinityKind::Identity),
            Err(AafError::IdentityExtent { m: 3, n: 2 })
        ));
    }

    #[test]
    fn dot_product_affinity_hand_oracle() {
        // [[1,0],[0,2]] . [[0,1]]^T = [[0],[2]]
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![0.0, 1.0]]));
        let a = build_affinity(&mut tape, AffinityKind::DotProduct, phi, rho).unwrap();
        assert_eq!(tape.value(a).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_affinity_columns_are_convex_weights() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]));
        let rho = tape.constant(&t2(&[vec![0.0, 1.0], vec![2.0, -1.0]]));
        let kind = AffinityKind::SoftmaxDotProduct {
            scale: AffinityScale::Fixed(1.0),
        };
        let a = build_affinity(&mut tape, kind, phi, rho).unwrap();
        assert_eq!(tape.shape_of(a), &[3, 2]);
        let v = tape.value(a);
        for j in 0..2 {
            let col: f64 = (0..3).map(|i| v.at2(i, j)).sum();
            assert!((col - 1.0).abs() < 1e-12);
            for i in 0..3 {
                assert!(v.at2(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn align_hand_oracle() {
        // Source rows [1,0] and [0,2]; reference position [0,1]. Dot
        // products are 0 and 2, so the weights are softmax([0, 2]) and the
        // aligned row is w0*[1,0] + w1*[0,2].
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![0.0, 1.0]]));
        let kind = AffinityKind::SoftmaxDotProduct {
            scale: AffinityScale::Fixed(1.0),
        };
        let moved = align(&mut tape, phi, rho, kind).unwrap();
        assert_eq!(tape.shape_of(moved), &[1, 2]);
        let e2 = 2.0f64.exp();
        let (w0, w1) = (1.0 / (1.0 + e2), e2 / (1.0 + e2));
        let got = tape.value(moved);
        assert!((got.at2(0, 0) - w0).abs() < 1e-15);
        assert!((got.at2(0, 1) - 2.0 * w1).abs() < 1e-15);
    }

    #[test]
    fn align_identity_kind_passes_through() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.5, -2.0], vec![0.0, 3.0]]));
        let rho = tape.constant(&t2(&[vec![9.0, 9.0], vec![8.0, 8.0]]));
        let out = align(&mut tape, phi, rho, AffinityKind::Identity).unwrap();
        assert_eq!(out, phi);
    }

    #[test]
    fn align_constant_rows_reproduce_the_row() {
        // Every row of phi equals v, so any convex combination equals v.
        let mut tape = GradTape::new();
        let v = vec![0.7, -1.3, 2.2];
        let phi = tape.constant(&t2(&[v.clone(), v.clone(), v.clone(), v.clone()]));
        let rho = tape.constant(&t2(&[vec![1.0, 0.5, -2.0], vec![0.0, 0.0, 1.0]]));
        let kind = AffinityKind::SoftmaxDotProduct {
            scale: AffinityScale::Fixed(0.7),
        };
        let out = align(&mut tape, phi, rho, kind).unwrap();
        for i in 0..2 {
            for (j, &vj) in v.iter().enumerate() {
                assert!((tape.value(out).at2(i, j) - vj).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affinity_scale_changes_sharpness() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![0.0, 1.0]]));
        let at = |scale| AffinityKind::SoftmaxDotProduct {
            scale: AffinityScale::Fixed(scale),
        };
        let soft = build_affinity(&mut tape, at(0.1), phi, rho).unwrap();
        let sharp = build_affinity(&mut tape, at(10.0), phi, rho).unwrap();
        assert!(tape.value(sharp).at2(1, 0) > tape.value(soft).at2(1, 0));
    }

    #[test]
    fn inv_sqrt_scale_resolves_against_channels() {
        assert_eq!(AffinityScale::InvSqrtChannels.resolve(64), 0.125);
        assert_eq!(AffinityScale::Fixed(0.5).resolve(64), 0.5);
    }

    #[test]
    fn attend_pool_reweight_oracle() {
        // Context pools (max) to [2, 5]; target rows scale channel-wise.
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let rho = tape.constant(&t2(&[vec![2.0, 1.0], vec![0.0, 5.0]]));
        let kind = AttentionKind::SupportPoolReweight {
            mode: PoolMode::Max,
        };
        let out = attend(&mut tape, phi, rho, kind).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 10.0, 6.0, 20.0]);
    }

    #[test]
    fn attend_all_ones_context_is_identity() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.5, -2.5], vec![0.25, 4.0]]));
        let ones = tape.constant(&Tensor::full(vec![3, 2], 1.0));
        let kind = AttentionKind::SupportPoolReweight {
            mode: PoolMode::Max,
        };
        let out = attend(&mut tape, phi, ones, kind).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(phi).data());
    }

    #[test]
    fn attend_none_is_the_same_node() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![9.0, 9.0]]));
        let out = attend(&mut tape, phi, rho, AttentionKind::None).unwrap();
        assert_eq!(out, phi);
    }

    #[test]
    fn attend_background_attenuation_gates_by_own_mean() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![2.0, -4.0], vec![4.0, 0.0]]));
        let rho = tape.constant(&t2(&[vec![0.0, 0.0]]));
        let out = attend(&mut tape, phi, rho, AttentionKind::BackgroundAttenuation).unwrap();
        // Means are [3, -2]; gates are sigmoid(3), sigmoid(-2).
        let g0 = 1.0 / (1.0 + (-3.0f64).exp());
        let g1 = 1.0 / (1.0 + 2.0f64.exp());
        let v = tape.value(out);
        assert!((v.at2(0, 0) - 2.0 * g0).abs() < 1e-15);
        assert!((v.at2(0, 1) + 4.0 * g1).abs() < 1e-15);
        assert!((v.at2(1, 0) - 4.0 * g0).abs() < 1e-15);
        assert!((v.at2(1, 1) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn attend_similarity_reweight_hand_case() {
        // Single position [1, 0] against context rows e_1, e_2:
        // similarities [1, 0], softmax weights blend the context rows.
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 0.0]]));
        let rho = tape.constant(&t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let out = attend(&mut tape, phi, rho, AttentionKind::SimilarityReweight).unwrap();
        let e = 1.0f64.exp();
        let w = e / (e + 1.0);
        let v = tape.value(out);
        assert!((v.at2(0, 0) - w).abs() < 1e-15);
        assert_eq!(v.at2(0, 1), 0.0);
    }

    #[test]
    fn attend_rejects_channel_mismatch() {
        let mut tape = GradTape::<f64>::new();
        let phi = tape.constant(&Tensor::zeros(vec![2, 3]));
        let rho = tape.constant(&Tensor::zeros(vec![2, 4]));
        assert!(matches!(
            attend(&mut tape, phi, rho, AttentionKind::None),
            Err(AafError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn fuse_mul_sub_oracle() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![3.0, 4.0]]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![
                FusionComponent {
                    op: FusionOp::Mul,
                    learnable: false,
                },
                FusionComponent {
                    op: FusionOp::Sub,
                    learnable: false,
                },
            ],
        };
        let out = fuse(&mut tape, phi, rho, &kind, &[None, None]).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 8.0, -2.0, -2.0]);
    }

    #[test]
    fn fuse_self_sub_is_zero() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, -2.0], vec![0.5, 3.0]]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![
                FusionComponent {
                    op: FusionOp::Mul,
                    learnable: false,
                },
                FusionComponent {
                    op: FusionOp::Sub,
                    learnable: false,
                },
            ],
        };
        let out = fuse(&mut tape, phi, phi, &kind, &[None, None]).unwrap();
        let v = tape.value(out);
        for i in 0..2 {
            assert_eq!(v.at2(i, 2), 0.0);
            assert_eq!(v.at2(i, 3), 0.0);
        }
    }

    #[test]
    fn fuse_identity_component_returns_phi() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let rho = tape.constant(&t2(&[vec![9.0, 9.0], vec![8.0, 8.0]]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Identity,
                learnable: false,
            }],
        };
        let out = fuse(&mut tape, phi, rho, &kind, &[None]).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(phi).data());
    }

    #[test]
    fn fuse_add_component() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![3.0, 4.0]]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Add,
                learnable: false,
            }],
        };
        let out = fuse(&mut tape, phi, rho, &kind, &[None]).unwrap();
        assert_eq!(tape.value(out).data(), &[4.0, 6.0]);
    }

    #[test]
    fn fuse_empty_components_pass_phi_through() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![9.0, 9.0]]));
        let out = fuse(&mut tape, phi, rho, &FusionKind::none(), &[]).unwrap();
        assert_eq!(out, phi);
    }

    #[test]
    fn fuse_pools_support_onto_query_grid() {
        // Support on a 2-position grid, query on 3 positions: mean-pooled
        // support broadcasts to every query position.
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]));
        let rho = tape.constant(&t2(&[vec![2.0, 0.0], vec![4.0, 6.0]]));
        let kind = FusionKind {
            support_pool: Some(PoolMode::Avg),
            components: vec![FusionComponent {
                op: FusionOp::Mul,
                learnable: false,
            }],
        };
        let out = fuse(&mut tape, phi, rho, &kind, &[None]).unwrap();
        // Pooled support is [3, 3].
        assert_eq!(tape.value(out).data(), &[3.0, 3.0, 6.0, 6.0, 9.0, 9.0]);
    }

    #[test]
    fn fuse_rejects_grid_mismatch_without_pooling() {
        let mut tape = GradTape::<f64>::new();
        let phi = tape.constant(&Tensor::zeros(vec![3, 2]));
        let rho = tape.constant(&Tensor::zeros(vec![2, 2]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Sub,
                learnable: false,
            }],
        };
        let err = fuse(&mut tape, phi, rho, &kind, &[None]).unwrap_err();
        assert!(matches!(err, AafError::FusionExtent { m: 3, n: 2 }));
        let msg = err.to_string();
        assert!(msg.contains("align"), "should point at alignment: {msg}");
    }

    #[test]
    fn fuse_cat_doubles_channels() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0]]));
        let rho = tape.constant(&t2(&[vec![3.0, 4.0]]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Cat,
                learnable: false,
            }],
        };
        assert_eq!(kind.out_channels(2), 4);
        let out = fuse(&mut tape, phi, rho, &kind, &[None]).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn fuse_learnable_identity_map_matches_fixed() {
        let mut tape = GradTape::new();
        let phi = tape.constant(&t2(&[vec![1.0, 2.0], vec![-0.5, 0.25]]));
        let rho = tape.constant(&t2(&[vec![3.0, 4.0], vec![1.0, -1.0]]));
        let fixed = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Sub,
                learnable: false,
            }],
        };
        let learned = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Sub,
                learnable: true,
            }],
        };
        let eye = tape.constant(&Tensor::eye(2));
        let zero = tape.constant(&Tensor::zeros(vec![1, 2]));
        let a = fuse(&mut tape, phi, rho, &fixed, &[None]).unwrap();
        let b = fuse(&mut tape, phi, rho, &learned, &[Some((eye, zero))]).unwrap();
        assert_eq!(tape.value(a).data(), tape.value(b).data());
    }

    #[test]
    fn fuse_learnable_requires_maps() {
        let mut tape = GradTape::<f64>::new();
        let phi = tape.constant(&Tensor::zeros(vec![2, 2]));
        let rho = tape.constant(&Tensor::zeros(vec![2, 2]));
        let kind = FusionKind {
            support_pool: None,
            components: vec![FusionComponent {
                op: FusionOp::Mul,
                learnable: true,
            }],
        };
        assert!(fuse(&mut tape, phi, rho, &kind, &[None]).is_err());
        assert!(fuse(&mut tape, phi, rho, &kind, &[]).is_err());
    }

    #[test]
    fn fuse_rejects_channel_mismatch() {
        let mut tape = GradTape::<f64>::new();
        let phi = tape.constant(&Tensor::zeros(vec![2, 3]));
        let rho = tape.constant(&Tensor::zeros(vec![2, 4]));
        let err = fuse(&mut tape, phi, rho, &FusionKind::none(), &[]).unwrap_err();
        assert!(matches!(err, AafError::ChannelMismatch { .. }));
    }
}
