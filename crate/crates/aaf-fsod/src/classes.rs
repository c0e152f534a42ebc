//! The ten shape-and-color object classes and their base/novel split.

use crate::error::HarnessError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Geometric family of an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    Square,
    Disk,
    Triangle,
    Cross,
    Ring,
}

/// Fill color family of an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColorTag {
    Red,
    Blue,
}

/// One detectable class: a shape drawn in a color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId {
    pub shape: ShapeKind,
    pub color: ColorTag,
}

impl ClassId {
    pub const fn new(shape: ShapeKind, color: ColorTag) -> Self {
        ClassId { shape, color }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match self.shape {
            ShapeKind::Square => "square",
            ShapeKind::Disk => "disk",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Cross => "cross",
            ShapeKind::Ring => "ring",
        };
        let color = match self.color {
            ColorTag::Red => "red",
            ColorTag::Blue => "blue",
        };
        write!(f, "{shape}-{color}")
    }
}

/// Every class the synthetic world can draw, in a fixed order.
pub const ALL_CLASSES: [ClassId; 10] = [
    ClassId::new(ShapeKind::Square, ColorTag::Red),
    ClassId::new(ShapeKind::Square, ColorTag::Blue),
    ClassId::new(ShapeKind::Disk, ColorTag::Red),
    ClassId::new(ShapeKind::Disk, ColorTag::Blue),
    ClassId::new(ShapeKind::Triangle, ColorTag::Red),
    ClassId::new(ShapeKind::Triangle, ColorTag::Blue),
    ClassId::new(ShapeKind::Cross, ColorTag::Red),
    ClassId::new(ShapeKind::Cross, ColorTag::Blue),
    ClassId::new(ShapeKind::Ring, ColorTag::Red),
    ClassId::new(ShapeKind::Ring, ColorTag::Blue),
];

/// Disjoint partition of classes into a training pool and a held-out pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    base: Vec<ClassId>,
    novel: Vec<ClassId>,
}

impl ClassSplit {
    /// Builds a split after checking the two pools do not overlap and
    /// are drawn from the known classes.
    pub fn new(base: Vec<ClassId>, novel: Vec<ClassId>) -> Result<Self, HarnessError> {
        for c in base.iter().chain(&novel) {
            if !ALL_CLASSES.contains(c) {
                return Err(HarnessError::BadSplit(format!("unknown class {c}")));
            }
        }
        for c in &base {
            if novel.contains(c) {
                return Err(HarnessError::BadSplit(format!(
                    "class {c} appears in both pools"
                )));
            }
        }
        if base.is_empty() {
            return Err(HarnessError::BadSplit("empty base pool".into()));
        }
        Ok(ClassSplit { base, novel })
    }

    /// The standard 7 base / 3 novel split. Each held-out class shares
    /// its shape with a class that stays in the base pool, so novelty is
    /// mostly a matter of color and a conditioned detector has a fair
    /// chance of recombining traits it saw during base training.
    pub fn default_split() -> Self {
        let novel = vec![
            ClassId::new(ShapeKind::Square, ColorTag::Blue),
            ClassId::new(ShapeKind::Disk, ColorTag::Red),
            ClassId::new(ShapeKind::Triangle, ColorTag::Blue),
        ];
        let base = ALL_CLASSES
            .iter()
            .copied()
            .filter(|c| !novel.contains(c))
            .collect();
        ClassSplit { base, novel }
    }

    pub fn base(&self) -> &[ClassId] {
        &self.base
    }

    pub fn novel(&self) -> &[ClassId] {
        &self.novel
    }

    pub fn is_base(&self, c: ClassId) -> bool {
        self.base.contains(&c)
    }

    pub fn is_novel(&self, c: ClassId) -> bool {
        self.novel.contains(&c)
    }

    /// Base classes followed by novel classes.
    pub fn all(&self) -> Vec<ClassId> {
        self.base.iter().chain(&self.novel).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_are_unique() {
        for (i, a) in ALL_CLASSES.iter().enumerate() {
            for b in &ALL_CLASSES[i + 1..] {
                assert_ne!(a.to_string(), b.to_string());
            }
        }
    }

    #[test]
    fn default_split_is_seven_three_and_disjoint() {
        let split = ClassSplit::default_split();
        assert_eq!(split.base().len(), 7, "base pool size");
        assert_eq!(split.novel().len(), 3, "novel pool size");
        for c in split.novel() {
            assert!(!split.is_base(*c), "{c} leaked into the base pool");
        }
        assert_eq!(split.all().len(), 10);
    }

    #[test]
    fn each_novel_shape_also_appears_in_base() {
        let split = ClassSplit::default_split();
        for c in split.novel() {
            assert!(
                split.base().iter().any(|b| b.shape == c.shape),
                "{c} has no same-shape sibling in the base pool"
            );
        }
    }

    #[test]
    fn overlapping_split_is_rejected() {
        let c = ALL_CLASSES[0];
        let err = ClassSplit::new(vec![c], vec![c]).unwrap_err();
        assert!(err.to_string().contains("both pools"), "got {err}");
    }

    #[test]
    fn display_round_trips_by_eye() {
        assert_eq!(
            ClassId::new(ShapeKind::Disk, ColorTag::Blue).to_string(),
            "disk-blue"
        );
        assert_eq!(
            ClassId::new(ShapeKind::Cross, ColorTag::Red).to_string(),
            "cross-red"
        );
    }
}
