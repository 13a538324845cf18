//! Contracts for the three external models and their implementations.
//!
//! The pipeline only ever talks to a [`DetectorBackend`], a
//! [`VerifierBackend`] and a [`SegmenterBackend`]. Instances carry call
//! state and are single-consumer: every tray gets fresh instances from a
//! [`BackendFactory`].

mod process;
mod scripted;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BBox;
use crate::taxonomy::{LabelMask, Taxonomy};

pub use process::{ProcessBackend, REFERENCE_CHECKPOINTS};
pub use scripted::{
    DetectorScript, ScriptedDetector, ScriptedLibrary, ScriptedSegmenter, ScriptedVerifier,
    SegmenterScript, VerifierScript,
};

/// Unfiltered detector output in corner format, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(flatten)]
    pub bbox: BBox,
    pub box_score: f64,
    pub text_score: f64,
}

impl Candidate {
    pub fn new(bbox: BBox, box_score: f64, text_score: f64) -> Self {
        Candidate {
            bbox,
            box_score,
            text_score,
        }
    }
}

pub trait DetectorBackend {
    /// Every candidate the model proposes for `prompt`; thresholding is the
    /// caller's job.
    fn detect(&mut self, image: &RgbImage, prompt: &str) -> Result<Vec<Candidate>>;
}

pub trait VerifierBackend {
    fn ask(&mut self, image: &RgbImage, question: &str) -> Result<String>;
}

pub trait SegmenterBackend {
    /// Must return a mask with the input's dimensions.
    fn segment(&mut self, image: &RgbImage, taxonomy: &Taxonomy) -> Result<LabelMask>;
}

impl<T: DetectorBackend + ?Sized> DetectorBackend for Box<T> {
    fn detect(&mut self, image: &RgbImage, prompt: &str) -> Result<Vec<Candidate>> {
        (**self).detect(image, prompt)
    }
}

impl<T: VerifierBackend + ?Sized> VerifierBackend for Box<T> {
    fn ask(&mut self, image: &RgbImage, question: &str) -> Result<String> {
        (**self).ask(image, question)
    }
}

impl<T: SegmenterBackend + ?Sized> SegmenterBackend for Box<T> {
    fn segment(&mut self, image: &RgbImage, taxonomy: &Taxonomy) -> Result<LabelMask> {
        (**self).segment(image, taxonomy)
    }
}

/// Hands out fresh backend instances per tray. Shared across worker threads.
pub trait BackendFactory: Send + Sync {
    fn detector(&self, tray_id: &str) -> Result<Box<dyn DetectorBackend>>;
    fn verifier(&self, tray_id: &str) -> Result<Box<dyn VerifierBackend>>;
    fn segmenter(&self, tray_id: &str) -> Result<Box<dyn SegmenterBackend>>;
}
