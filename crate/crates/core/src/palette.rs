//! Class-to-colour tables for colourised masks and overlays.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{ClassId, Taxonomy, BACKGROUND};

pub type Rgb = [u8; 3];

/// Default colour per class name. Background is black; the rest are spread
/// for perceptual separation.
pub const DEFAULT_COLORS: [(&str, Rgb); 10] = [
    ("background", [0, 0, 0]),
    ("head", [230, 25, 75]),
    ("pronotum", [60, 180, 75]),
    ("elytra", [0, 130, 200]),
    ("legs", [245, 130, 48]),
    ("antennas", [145, 30, 180]),
    ("eyes", [255, 225, 25]),
    ("mouthparts", [70, 240, 240]),
    ("tail", [240, 50, 230]),
    ("pin", [128, 128, 128]),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    colors: BTreeMap<ClassId, Rgb>,
}

impl Palette {
    /// Builds a palette covering `taxonomy`, checking coverage, the black
    /// background and injectivity.
    pub fn new(taxonomy: &Taxonomy, colors: BTreeMap<ClassId, Rgb>) -> Result<Self> {
        for (id, name) in taxonomy.classes() {
            if !colors.contains_key(&id) {
                return Err(Error::config(format!(
                    "palette has no colour for class {id} ({name})"
                )));
            }
        }
        if colors.get(&BACKGROUND) != Some(&[0, 0, 0]) {
            return Err(Error::config("palette must map background to (0,0,0)"));
        }
        let mut seen: BTreeMap<Rgb, ClassId> = BTreeMap::new();
        for (&id, &c) in &colors {
            if let Some(prev) = seen.insert(c, id) {
                return Err(Error::config(format!(
                    "palette colour {c:?} used by both class {prev} and class {id}"
                )));
            }
        }
        Ok(Palette { colors })
    }

    pub fn default_for(taxonomy: &Taxonomy) -> Self {
        let colors = taxonomy
            .classes()
            .map(|(id, name)| {
                let c = DEFAULT_COLORS
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, c)| *c)
                    .expect("every built-in class has a default colour");
                (id, c)
            })
            .collect();
        Palette { colors }
    }

    /// Overrides entries by class name on top of the defaults.
    pub fn with_overrides(taxonomy: &Taxonomy, overrides: &BTreeMap<String, Rgb>) -> Result<Self> {
        let mut colors = Self::default_for(taxonomy).colors;
        for (name, c) in overrides {
            let id = taxonomy
                .class_id(name)
                .ok_or_else(|| Error::config(format!("palette names unknown class {name:?}")))?;
            colors.insert(id, *c);
        }
        Self::new(taxonomy, colors)
    }

    pub fn color(&self, id: ClassId) -> Option<Rgb> {
        self.colors.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn class_of(&self, rgb: Rgb) -> Option<ClassId> {
        self.colors
            .iter()
            .find(|(_, &c)| c == rgb)
            .map(|(&id, _)| id)
    }

    /// Dense table indexed by class id, for palette-indexed image files.
    /// Ids missing from the palette get black.
    pub fn as_table(&self) -> Vec<Rgb> {
        let n = self
            .colors
            .keys()
            .next_back()
            .map_or(0, |&m| m as usize + 1);
        (0..n)
            .map(|i| {
                self.colors
                    .get(&(i as ClassId))
                    .copied()
                    .unwrap_or([0, 0, 0])
            })
            .collect()
    }
}
