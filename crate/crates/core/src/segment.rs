//! Stage 3: segmentation at model resolution and everything derived from
//! the label mask (colourised mask, overlay, part crops, completeness).

use std::collections::BTreeMap;

use image::{imageops::FilterType, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::backends::SegmenterBackend;
use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::palette::{Palette, Rgb as Color};
use crate::taxonomy::{ClassId, LabelMask, Taxonomy, TaxonomyName, BACKGROUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub taxonomy: TaxonomyName,
    /// `[width, height]` the segmenter expects.
    pub model_resolution: [u32; 2],
    pub overlay_alpha: f64,
    /// Per-class colour overrides by class name, applied over the defaults.
    pub palette: BTreeMap<String, Color>,
    pub required_classes: Vec<String>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            taxonomy: TaxonomyName::Beetle5,
            model_resolution: [512, 512],
            overlay_alpha: 0.5,
            palette: BTreeMap::new(),
            required_classes: vec!["head".into(), "pronotum".into(), "elytra".into()],
        }
    }
}

impl SegmentationConfig {
    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::new(self.taxonomy)
    }

    pub fn palette(&self) -> Result<Palette> {
        Palette::with_overrides(&self.taxonomy(), &self.palette)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlay_alpha) {
            return Err(Error::config(format!(
                "segmentation.overlay_alpha = {} is outside [0,1]",
                self.overlay_alpha
            )));
        }
        if self.model_resolution.contains(&0) {
            return Err(Error::config(
                "segmentation.model_resolution must be non-zero",
            ));
        }
        let t = self.taxonomy();
        for c in &self.required_classes {
            match t.class_id(c) {
                Some(BACKGROUND) => {
                    return Err(Error::config("background cannot be a required class"))
                }
                Some(_) => {}
                None => {
                    return Err(Error::config(format!(
                        "required class {c:?} is not part of taxonomy {}",
                        t.name()
                    )))
                }
            }
        }
        self.palette()?;
        Ok(())
    }
}

/// Resizes the crop to model resolution (bilinear, aspect not preserved),
/// runs the backend and maps the labels back with nearest-neighbour.
pub fn segment_crop(
    image: &RgbImage,
    backend: &mut dyn SegmenterBackend,
    config: &SegmentationConfig,
) -> Result<LabelMask> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::input("cannot segment an empty image"));
    }
    let [mw, mh] = config.model_resolution;
    let taxonomy = config.taxonomy();
    let model_input = if (w, h) == (mw, mh) {
        image.clone()
    } else {
        image::imageops::resize(image, mw, mh, FilterType::Triangle)
    };
    let mask = backend.segment(&model_input, &taxonomy)?;
    if mask.dimensions() != (mw, mh) {
        return Err(Error::Backend(format!(
            "segmenter returned a {}x{} mask for a {mw}x{mh} input",
            mask.width(),
            mask.height()
        )));
    }
    mask.validate(&taxonomy)
        .map_err(|e| Error::Backend(format!("segmenter output: {e}")))?;
    if (w, h) == (mw, mh) {
        Ok(mask)
    } else {
        mask.resize_nearest(w, h)
    }
}

pub fn colorize_mask(mask: &LabelMask, palette: &Palette) -> Result<RgbImage> {
    let mut lut: [Option<Color>; 256] = [None; 256];
    for l in mask.label_set() {
        lut[l as usize] = Some(
            palette
                .color(l)
                .ok_or_else(|| Error::config(format!("palette has no colour for label {l}")))?,
        );
    }
    Ok(RgbImage::from_fn(mask.width(), mask.height(), |x, y| {
        Rgb(lut[mask.get(x, y) as usize].expect("filled above"))
    }))
}

/// Inverse of [`colorize_mask`] for an injective palette.
pub fn decode_colorized(image: &RgbImage, palette: &Palette) -> Result<LabelMask> {
    let mut labels = Vec::with_capacity(image.len() / 3);
    for p in image.pixels() {
        labels.push(
            palette
                .class_of(p.0)
                .ok_or_else(|| Error::input(format!("colour {:?} is not in the palette", p.0)))?,
        );
    }
    LabelMask::new(image.width(), image.height(), labels)
}

/// Blends part colours over the image; background pixels are left alone.
pub fn overlay_mask(
    image: &RgbImage,
    mask: &LabelMask,
    palette: &Palette,
    alpha: f64,
) -> Result<RgbImage> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::input(format!(
            "image is {:?} but mask is {:?}",
            image.dimensions(),
            mask.dimensions()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!(
            "overlay alpha {alpha} is outside [0,1]"
        )));
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let label = mask.get(x, y);
        if label == BACKGROUND {
            continue;
        }
        let c = palette
            .color(label)
            .ok_or_else(|| Error::config(format!("palette has no colour for label {label}")))?;
        for (p, &k) in px.0.iter_mut().zip(c.iter()) {
            let v = (1.0 - alpha) * *p as f64 + alpha * k as f64;
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Tight bounding rectangle of `class_id`, grown by `padding` and clamped.
pub fn part_rect(mask: &LabelMask, class_id: ClassId, padding: u32) -> Result<Option<PixelRect>> {
    if class_id == BACKGROUND {
        return Err(Error::input("background is not a morphological part"));
    }
    let mut bounds: Option<(u32, u32, u32, u32)> = None;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == class_id {
                bounds = Some(match bounds {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    Ok(bounds.map(|(x0, y0, x1, y1)| PixelRect {
        x0: x0.saturating_sub(padding),
        y0: y0.saturating_sub(padding),
        x1: (x1 as u64 + 1 + padding as u64).min(mask.width() as u64) as u32,
        y1: (y1 as u64 + 1 + padding as u64).min(mask.height() as u64) as u32,
    }))
}

pub fn crop_part(
    image: &RgbImage,
    mask: &LabelMask,
    class_id: ClassId,
    padding: u32,
) -> Result<Option<RgbImage>> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::input(format!(
            "image is {:?} but mask is {:?}",
            image.dimensions(),
            mask.dimensions()
        )));
    }
    Ok(part_rect(mask, class_id, padding)?
        .map(|r| image::imageops::crop_imm(image, r.x0, r.y0, r.width(), r.height()).to_image()))
}

/// Required classes with no pixels, in taxonomy order.
pub fn completeness_check(mask: &LabelMask, config: &SegmentationConfig) -> Vec<String> {
    let taxonomy = config.taxonomy();
    let present = mask.label_set();
    taxonomy
        .classes()
        .filter(|(_, name)| config.required_classes.iter().any(|r| r == name))
        .filter(|(id, _)| !present.contains(id))
        .map(|(_, name)| name.to_owned())
        .collect()
}
