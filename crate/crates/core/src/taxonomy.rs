//! Segmentation class sets and dense label grids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u8;

pub const BACKGROUND: ClassId = 0;

const BEETLE5: [&str; 6] = [
    "background",
    "head",
    "pronotum",
    "elytra",
    "legs",
    "antennas",
];
const BEETLE9: [&str; 10] = [
    "background",
    "head",
    "pronotum",
    "elytra",
    "legs",
    "antennas",
    "eyes",
    "mouthparts",
    "tail",
    "pin",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaxonomyName {
    #[serde(rename = "beetle5")]
    Beetle5,
    #[serde(rename = "beetle9")]
    Beetle9,
}

impl TaxonomyName {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaxonomyName::Beetle5 => "beetle5",
            TaxonomyName::Beetle9 => "beetle9",
        }
    }
}

impl fmt::Display for TaxonomyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaxonomyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beetle5" => Ok(TaxonomyName::Beetle5),
            "beetle9" => Ok(TaxonomyName::Beetle9),
            other => Err(Error::config(format!(
                "unknown taxonomy {other:?} (expected \"beetle5\" or \"beetle9\")"
            ))),
        }
    }
}

/// Ordered class list; index 0 is always background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    name: TaxonomyName,
    classes: &'static [&'static str],
}

impl Taxonomy {
    pub fn new(name: TaxonomyName) -> Self {
        let classes: &'static [&'static str] = match name {
            TaxonomyName::Beetle5 => &BEETLE5,
            TaxonomyName::Beetle9 => &BEETLE9,
        };
        Taxonomy { name, classes }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn name(&self) -> TaxonomyName {
        self.name
    }

    pub fn background_id(&self) -> ClassId {
        BACKGROUND
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(class_id, class_name)` pairs in id order, background first.
    pub fn classes(&self) -> impl Iterator<Item = (ClassId, &'static str)> + '_ {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, n)| (i as ClassId, *n))
    }

    /// Foreground ids `1..N`.
    pub fn part_ids(&self) -> impl Iterator<Item = ClassId> {
        1..self.classes.len() as ClassId
    }

    pub fn class_name(&self, id: ClassId) -> Option<&'static str> {
        self.classes.get(id as usize).copied()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.classes
            .iter()
            .position(|c| *c == name)
            .map(|i| i as ClassId)
    }

    pub fn contains(&self, id: ClassId) -> bool {
        (id as usize) < self.classes.len()
    }
}

/// Row-major grid of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    labels: Vec<ClassId>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, labels: Vec<ClassId>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("label mask must have non-zero dimensions"));
        }
        if labels.len() as u64 != width as u64 * height as u64 {
            return Err(Error::input(format!(
                "label mask {width}x{height} needs {} labels, got {}",
                width as u64 * height as u64,
                labels.len()
            )));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: u32, height: u32, label: ClassId) -> Result<Self> {
        Self::new(width, height, vec![label; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> ClassId) -> Result<Self> {
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, label: ClassId) {
        self.labels[y as usize * self.width as usize + x as usize] = label;
    }

    /// Errors on the first label outside the taxonomy.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        match self.labels.iter().find(|&&l| !taxonomy.contains(l)) {
            Some(bad) => Err(Error::config(format!(
                "label {bad} is not a class of taxonomy {} ({} classes)",
                taxonomy.name(),
                taxonomy.len()
            ))),
            None => Ok(()),
        }
    }

    /// Sorted distinct labels present in the mask.
    pub fn label_set(&self) -> Vec<ClassId> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn count(&self, label: ClassId) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Nearest-neighbour resample; never invents labels.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Result<LabelMask> {
        if width == 0 || height == 0 {
            return Err(Error::input("cannot resize a mask to zero size"));
        }
        let src = |dst: u32, dst_len: u32, src_len: u32| -> u32 {
            let s = ((dst as u64 * 2 + 1) * src_len as u64) / (dst_len as u64 * 2);
            s.min(src_len as u64 - 1) as u32
        };
        let xs: Vec<u32> = (0..width).map(|x| src(x, width, self.width)).collect();
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = src(y, height, self.height);
            labels.extend(xs.iter().map(|&sx| self.get(sx, sy)));
        }
        LabelMask::new(width, height, labels)
    }
}
