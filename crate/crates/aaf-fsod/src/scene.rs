//! Procedural scenes: colored shapes on a noisy background, with exact
//! bounding boxes, plus the crop-and-resize used for support examples.

use crate::classes::{ClassId, ColorTag, ShapeKind};
use crate::geometry::{compute_iou, BoundingBox};
use aaf_core::Tensor64;
use rand::Rng;

/// Query image side length in pixels.
pub const IMAGE_SIZE: usize = 64;
/// Support crop side length in pixels after resizing.
pub const SUPPORT_SIZE: usize = 32;

/// Knobs for scene generation.
#[derive(Debug, Clone)]
pub struct LayoutParams {
    pub image_size: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Smallest and largest object box side, in pixels.
    pub min_extent: f64,
    pub max_extent: f64,
    /// Amplitude of the uniform background texture.
    pub noise: f64,
    /// Two placed boxes may overlap at most this much.
    pub max_overlap_iou: f64,
    /// Placement attempts per object before giving up on it.
    pub attempts: usize,
    /// Support-annotation sloppiness: the crop window may be displaced
    /// by up to this fraction of the object extent per axis, so a single
    /// exemplar sometimes shows mostly background.
    pub support_shift: f64,
    /// Support lighting spread: each crop gets a per-channel tint drawn
    /// uniformly from ±this value, so a single exemplar can misreport
    /// the class color.
    pub support_light: f64,
    /// Probability that a support crop is desaturated to its per-pixel
    /// channel mean, i.e. an exemplar that carries shape but no color.
    pub support_gray: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            image_size: IMAGE_SIZE,
            min_objects: 1,
            max_objects: 4,
            min_extent: 12.0,
            max_extent: 26.0,
            noise: 0.08,
            max_overlap_iou: 0.2,
            attempts: 40,
            support_shift: 0.25,
            support_light: 0.0,
            support_gray: 0.0,
        }
    }
}

/// A rendered image with its ground-truth objects.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// `[size, size, 3]` values in `[0, 1]`, row-major `(y, x, channel)`.
    pub image: Tensor64,
    pub objects: Vec<(ClassId, BoundingBox)>,
}

fn base_color(color: ColorTag) -> [f64; 3] {
    match color {
        ColorTag::Red => [0.85, 0.15, 0.15],
        ColorTag::Blue => [0.15, 0.20, 0.85],
    }
}

/// Per-instance shape parameters. Each class spans a range of these, so
/// one exemplar undersamples its class's appearance; several exemplars
/// pin it down — the reason extra support shots carry information.
#[derive(Debug, Clone, Copy)]
pub struct Morphology {
    /// Ring hole radius relative to the outer radius.
    pub ring_inner: f64,
    /// Cross bar half-width relative to the box extent.
    pub cross_bar: f64,
    /// Horizontal triangle apex offset relative to half the box width.
    pub tri_skew: f64,
}

impl Default for Morphology {
    fn default() -> Self {
        Morphology {
            ring_inner: 0.55,
            cross_bar: 0.18,
            tri_skew: 0.0,
        }
    }
}

fn sample_morphology<R: Rng>(rng: &mut R) -> Morphology {
    Morphology {
        ring_inner: rng.gen_range(0.35..=0.75),
        cross_bar: rng.gen_range(0.10..=0.32),
        tri_skew: rng.gen_range(-0.45..=0.45),
    }
}

/// Whether the point `(px, py)` falls inside `shape` drawn to fill `bb`.
fn covers(shape: ShapeKind, bb: &BoundingBox, morph: &Morphology, px: f64, py: f64) -> bool {
    if px < bb.x0 || px > bb.x1 || py < bb.y0 || py > bb.y1 {
        return false;
    }
    let (cx, cy) = bb.center();
    let a = bb.width() / 2.0;
    let b = bb.height() / 2.0;
    match shape {
        ShapeKind::Square => true,
        ShapeKind::Disk => {
            let dx = (px - cx) / a;
            let dy = (py - cy) / b;
            dx * dx + dy * dy <= 1.0
        }
        ShapeKind::Triangle => {
            // Apex on the top edge (offset by the skew), base along the
            // bottom edge; the silhouette interpolates between them.
            let apex_x = cx + morph.tri_skew * a;
            let t = (py - bb.y0) / bb.height();
            let left = apex_x + (bb.x0 - apex_x) * t;
            let right = apex_x + (bb.x1 - apex_x) * t;
            (left..=right).contains(&px)
        }
        ShapeKind::Cross => {
            (px - cx).abs() <= morph.cross_bar * bb.width()
                || (py - cy).abs() <= morph.cross_bar * bb.height()
        }
        ShapeKind::Ring => {
            let dx = (px - cx) / a;
            let dy = (py - cy) / b;
            let r = (dx * dx + dy * dy).sqrt();
            (morph.ring_inner..=1.0).contains(&r)
        }
    }
}

/// Renders a scene whose objects are drawn uniformly from `classes`.
/// Object count, sizes, colors, and positions come from `rng` in a fixed
/// order, so equal seeds give equal scenes byte for byte.
pub fn generate_scene<R: Rng>(
    rng: &mut R,
    classes: &[ClassId],
    layout: &LayoutParams,
) -> SyntheticScene {
    assert!(!classes.is_empty(), "scene needs a non-empty class palette");
    let size = layout.image_size;
    let mut image = vec![0.0; size * size * 3];
    for v in image.iter_mut() {
        *v = 0.40 + layout.noise * (2.0 * rng.gen::<f64>() - 1.0);
    }

    let want = rng.gen_range(layout.min_objects..=layout.max_objects);
    let mut objects: Vec<(ClassId, BoundingBox)> = Vec::with_capacity(want);
    let mut instances: Vec<(ClassId, BoundingBox, [f64; 3], Morphology)> =
        Vec::with_capacity(want);
    for _ in 0..want {
        let class = classes[rng.gen_range(0..classes.len())];
        let mut placed = None;
        for _ in 0..layout.attempts {
            let w = rng.gen_range(layout.min_extent..=layout.max_extent);
            let h = (w * rng.gen_range(0.8..=1.25))
                .clamp(layout.min_extent, layout.max_extent);
            let x0 = rng.gen_range(0.0..=(size as f64 - w));
            let y0 = rng.gen_range(0.0..=(size as f64 - h));
            let bb = BoundingBox {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
            };
            let crowded = objects
                .iter()
                .any(|(_, other)| compute_iou(&bb, other) > layout.max_overlap_iou);
            if !crowded {
                placed = Some(bb);
                break;
            }
        }
        let Some(bb) = placed else { continue };
        let mut color = base_color(class.color);
        for ch in color.iter_mut() {
            *ch = (*ch + rng.gen_range(-0.25..=0.25)).clamp(0.0, 1.0);
        }
        let morph = sample_morphology(rng);
        objects.push((class, bb));
        instances.push((class, bb, color, morph));
    }

    for (class, bb, color, morph) in &instances {
        let x_lo = bb.x0.floor().max(0.0) as usize;
        let x_hi = (bb.x1.ceil() as usize).min(size);
        let y_lo = bb.y0.floor().max(0.0) as usize;
        let y_hi = (bb.y1.ceil() as usize).min(size);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if covers(class.shape, bb, morph, px, py) {
                    let at = (y * size + x) * 3;
                    image[at..at + 3].copy_from_slice(color);
                }
            }
        }
    }

    SyntheticScene {
        image: Tensor64::new(vec![size, size, 3], image).expect("render buffer size"),
        objects,
    }
}

/// Bilinear crop of `bb` from a `[h, w, 3]` image, resized to a square of
/// `out` pixels.
pub fn crop_resize(image: &Tensor64, bb: &BoundingBox, out: usize) -> Tensor64 {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let data = image.data();
    let sample = |sy: f64, sx: f64, c: usize| -> f64 {
        let sy = sy.clamp(0.0, (h - 1) as f64);
        let sx = sx.clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let at = |y: usize, x: usize| data[(y * w + x) * 3 + c];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    let mut out_data = vec![0.0; out * out * 3];
    for i in 0..out {
        for j in 0..out {
            let sy = bb.y0 + (i as f64 + 0.5) * bb.height() / out as f64 - 0.5;
            let sx = bb.x0 + (j as f64 + 0.5) * bb.width() / out as f64 - 0.5;
            for c in 0..3 {
                out_data[(i * out + j) * 3 + c] = sample(sy, sx, c);
            }
        }
    }
    Tensor64::new(vec![out, out, 3], out_data).expect("resize buffer size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::ALL_CLASSES;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_seeds_give_equal_scenes() {
        let layout = LayoutParams::default();
        let a = generate_scene(&mut ChaCha8Rng::seed_from_u64(5), &ALL_CLASSES, &layout);
        let b = generate_scene(&mut ChaCha8Rng::seed_from_u64(5), &ALL_CLASSES, &layout);
        assert_eq!(a.image.data(), b.image.data(), "pixel data must match");
        assert_eq!(a.objects.len(), b.objects.len());
    }

    #[test]
    fn boxes_stay_inside_the_image() {
        let layout = LayoutParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let scene = generate_scene(&mut rng, &ALL_CLASSES, &layout);
            assert!(!scene.objects.is_empty(), "at least one object per scene");
            assert!(scene.objects.len() <= layout.max_objects);
            for (_, bb) in &scene.objects {
                assert!(bb.x0 >= 0.0 && bb.y0 >= 0.0);
                assert!(bb.x1 <= IMAGE_SIZE as f64 && bb.y1 <= IMAGE_SIZE as f64);
                assert!(bb.is_well_formed());
            }
        }
    }

    #[test]
    fn pixels_stay_in_unit_range() {
        let scene = generate_scene(
            &mut ChaCha8Rng::seed_from_u64(7),
            &ALL_CLASSES,
            &LayoutParams::default(),
        );
        for &v in scene.image.data() {
            assert!((0.0..=1.0).contains(&v), "pixel value {v} out of range");
        }
    }

    #[test]
    fn class_histogram_is_roughly_uniform() {
        let layout = LayoutParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = std::collections::BTreeMap::new();
        let mut total = 0usize;
        for _ in 0..4000 {
            let scene = generate_scene(&mut rng, &ALL_CLASSES, &layout);
            for (class, _) in &scene.objects {
                *counts.entry(*class).or_insert(0usize) += 1;
                total += 1;
            }
        }
        let expect = total as f64 / ALL_CLASSES.len() as f64;
        for class in ALL_CLASSES {
            let n = counts.get(&class).copied().unwrap_or(0) as f64;
            assert!(
                (n - expect).abs() < 0.15 * expect,
                "{class}: {n} draws vs {expect:.0} expected"
            );
        }
    }

    #[test]
    fn drawn_shape_touches_its_box_but_not_outside() {
        // A square fills its box exactly; check a border pixel inside and
        // one outside.
        let bb = BoundingBox {
            x0: 10.0,
            y0: 10.0,
            x1: 20.0,
            y1: 20.0,
        };
        let m = Morphology::default();
        assert!(covers(ShapeKind::Square, &bb, &m, 10.5, 10.5));
        assert!(!covers(ShapeKind::Square, &bb, &m, 9.5, 10.5));
        // A ring has a hole: the exact center is uncovered.
        assert!(!covers(ShapeKind::Ring, &bb, &m, 15.0, 15.0));
        assert!(covers(ShapeKind::Ring, &bb, &m, 15.0, 10.6));
        // A disk misses the box corners.
        assert!(covers(ShapeKind::Disk, &bb, &m, 15.0, 15.0));
        assert!(!covers(ShapeKind::Disk, &bb, &m, 10.4, 10.4));
    }

    #[test]
    fn morphology_changes_the_silhouette() {
        let bb = BoundingBox {
            x0: 0.0,
            y0: 0.0,
            x1: 20.0,
            y1: 20.0,
        };
        // A point between the two hole radii is inside a thin ring but
        // inside the hole of a thick one.
        let thin = Morphology {
            ring_inner: 0.40,
            ..Morphology::default()
        };
        let thick = Morphology {
            ring_inner: 0.70,
            ..Morphology::default()
        };
        // radius 0.55 relative point: (10 + 5.5, 10)
        assert!(covers(ShapeKind::Ring, &bb, &thin, 15.5, 10.0));
        assert!(!covers(ShapeKind::Ring, &bb, &thick, 15.5, 10.0));
        // A skewed triangle covers ground an upright one does not.
        let skewed = Morphology {
            tri_skew: 0.3,
            ..Morphology::default()
        };
        let upright = Morphology::default();
        assert!(covers(ShapeKind::Triangle, &bb, &skewed, 12.5, 2.0));
        assert!(!covers(ShapeKind::Triangle, &bb, &upright, 12.5, 2.0));
    }

    #[test]
    fn crop_of_constant_region_is_constant() {
        let flat = Tensor64::full(vec![16, 16, 3], 0.25);
        let bb = BoundingBox {
            x0: 2.0,
            y0: 3.0,
            x1: 10.0,
            y1: 12.0,
        };
        let crop = crop_resize(&flat, &bb, 8);
        assert_eq!(crop.shape(), &[8, 8, 3]);
        for &v in crop.data() {
            assert!((v - 0.25).abs() < 1e-12, "constant image should crop flat");
        }
    }

    #[test]
    fn crop_interpolates_between_pixels() {
        // Two-pixel image: left channel 0, right channel 1. Sampling the
        // middle must blend them.
        let img = Tensor64::new(
            vec![1, 2, 3],
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let bb = BoundingBox {
            x0: 0.0,
            y0: 0.0,
            x1: 2.0,
            y1: 1.0,
        };
        let crop = crop_resize(&img, &bb, 2);
        let left = crop.data()[0];
        let right = crop.data()[3];
        assert!(left < 0.3 && right > 0.7, "got {left} and {right}");
    }
}
