//! Episodic sampling: N-way K-shot support sets plus query scenes, with
//! held-out classes entering only at fine-tuning time and keeping the
//! same support crops for the whole run.

use crate::classes::{ClassId, ClassSplit};
use crate::error::HarnessError;
use crate::geometry::BoundingBox;
use crate::scene::{crop_resize, generate_scene, LayoutParams, SyntheticScene, SUPPORT_SIZE};
use aaf_core::Tensor64;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Which training phase an episode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Base,
    Finetune,
}

/// One N-way K-shot task: support crops per class and annotated queries.
#[derive(Debug, Clone)]
pub struct Episode {
    pub classes: Vec<ClassId>,
    /// `[32, 32, 3]` crops, exactly K per class.
    pub support: BTreeMap<ClassId, Vec<Tensor64>>,
    pub queries: Vec<SyntheticScene>,
}

/// The fixed exemplar crops of the held-out classes. Sampled once per
/// run; every fine-tuning episode and evaluation reuses them unchanged.
#[derive(Debug, Clone)]
pub struct NovelSupportRegistry {
    crops: BTreeMap<ClassId, Vec<Tensor64>>,
    k: usize,
}

impl NovelSupportRegistry {
    pub fn shots(&self) -> usize {
        self.k
    }

    pub fn crops(&self, class: ClassId) -> Option<&[Tensor64]> {
        self.crops.get(&class).map(|v| v.as_slice())
    }
}

/// Largest extra margin added to a support crop, as a fraction of the
/// object extent per side.
const CROP_MARGIN_FRAC: f64 = 0.35;

/// Draws one support crop: a fresh single-object scene of `class`,
/// cropped around the object box and resized. The crop window carries
/// annotation-style jitter — variable margins, an off-center shift of
/// up to `layout.support_shift` of the object extent, and a per-channel
/// tint of up to `layout.support_light` — so a single shot is a noisy
/// view of the class while several shots average out to a stable one.
pub fn fresh_support_crop<R: Rng>(rng: &mut R, class: ClassId, layout: &LayoutParams) -> Tensor64 {
    let solo = LayoutParams {
        min_objects: 1,
        max_objects: 1,
        ..layout.clone()
    };
    let scene = generate_scene(rng, &[class], &solo);
    let (_, bb) = &scene.objects[0];
    let (w, h) = (bb.width(), bb.height());
    let shift = layout.support_shift;
    let dx = rng.gen_range(-shift..=shift) * w;
    let dy = rng.gen_range(-shift..=shift) * h;
    let window = BoundingBox {
        x0: bb.x0 - rng.gen_range(0.0..=CROP_MARGIN_FRAC) * w + dx,
        y0: bb.y0 - rng.gen_range(0.0..=CROP_MARGIN_FRAC) * h + dy,
        x1: bb.x1 + rng.gen_range(0.0..=CROP_MARGIN_FRAC) * w + dx,
        y1: bb.y1 + rng.gen_range(0.0..=CROP_MARGIN_FRAC) * h + dy,
    };
    let mut crop = crop_resize(&scene.image, &window, SUPPORT_SIZE);
    if layout.support_gray > 0.0 && rng.gen_bool(layout.support_gray.min(1.0)) {
        let data = crop.data_mut();
        for px in data.chunks_exact_mut(3) {
            let mean = (px[0] + px[1] + px[2]) / 3.0;
            px.fill(mean);
        }
    }
    if layout.support_light > 0.0 {
        let l = layout.support_light;
        let tint = [
            rng.gen_range(-l..=l),
            rng.gen_range(-l..=l),
            rng.gen_range(-l..=l),
        ];
        for (i, v) in crop.data_mut().iter_mut().enumerate() {
            *v = (*v + tint[i % 3]).clamp(0.0, 1.0);
        }
    }
    crop
}

/// Samples the K exemplars for every held-out class.
pub fn register_novel_supports<R: Rng>(
    rng: &mut R,
    split: &ClassSplit,
    k: usize,
    layout: &LayoutParams,
) -> NovelSupportRegistry {
    let mut crops = BTreeMap::new();
    for &class in split.novel() {
        let shots: Vec<Tensor64> = (0..k).map(|_| fresh_support_crop(rng, class, layout)).collect();
        crops.insert(class, shots);
    }
    NovelSupportRegistry { crops, k }
}

/// Samples one episode.
///
/// Base phase: `n_way` classes drawn from the base pool, all supports
/// freshly rendered. Fine-tune phase: every held-out class is included
/// (their supports come from `registry`), topped up with random base
/// classes; base supports are still freshly rendered.
pub fn sample_episode<R: Rng>(
    rng: &mut R,
    split: &ClassSplit,
    phase: Phase,
    n_way: usize,
    k: usize,
    queries_per_class: usize,
    layout: &LayoutParams,
    registry: Option<&NovelSupportRegistry>,
) -> Result<Episode, HarnessError> {
    if k == 0 {
        return Err(HarnessError::NoShots);
    }
    let classes = match phase {
        Phase::Base => {
            if n_way > split.base().len() {
                return Err(HarnessError::NotEnoughClasses {
                    requested: n_way,
                    available: split.base().len(),
                });
            }
            let mut pool = split.base().to_vec();
            pool.shuffle(rng);
            pool.truncate(n_way);
            pool.sort();
            pool
        }
        Phase::Finetune => {
            let novel = split.novel().to_vec();
            if n_way < novel.len() || n_way - novel.len() > split.base().len() {
                return Err(HarnessError::NotEnoughClasses {
                    requested: n_way,
                    available: split.base().len() + novel.len(),
                });
            }
            let mut pool = split.base().to_vec();
            pool.shuffle(rng);
            pool.truncate(n_way - novel.len());
            let mut classes: Vec<ClassId> = novel.into_iter().chain(pool).collect();
            classes.sort();
            classes
        }
    };

    let mut support = BTreeMap::new();
    for &class in &classes {
        let shots = match (phase, registry) {
            (Phase::Finetune, Some(reg)) if split.is_novel(class) => {
                let fixed = reg.crops(class).ok_or(HarnessError::NoShots)?;
                if fixed.len() < k {
                    return Err(HarnessError::NoShots);
                }
                fixed[..k].to_vec()
            }
            _ => (0..k).map(|_| fresh_support_crop(rng, class, layout)).collect(),
        };
        support.insert(class, shots);
    }

    let queries = (0..n_way * queries_per_class)
        .map(|_| generate_scene(rng, &classes, layout))
        .collect();

    Ok(Episode {
        classes,
        support,
        queries,
    })
}
