//! Replay backends driven by canned responses, for hermetic runs.
//!
//! Detector and verifier scripts are JSON; segmenter scripts are JSON lists
//! of palette-indexed mask files. The k-th call returns the k-th entry. Past
//! the end, the detector returns an empty list and the other two repeat
//! their final entry.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{Candidate, DetectorBackend, SegmenterBackend, VerifierBackend};
use crate::error::{Error, Result};
use crate::maskfile::read_mask_png;
use crate::taxonomy::{LabelMask, Taxonomy};

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: malformed fixture: {e}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorScript {
    pub responses: Vec<Vec<Candidate>>,
}

impl DetectorScript {
    pub fn load(path: &Path) -> Result<Self> {
        let script: Self = read_json(path)?;
        script
            .validate()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        for (call, cands) in self.responses.iter().enumerate() {
            for (i, c) in cands.iter().enumerate() {
                c.bbox.validate().map_err(|e| {
                    Error::config(format!("detector call {call}, candidate {i}: {e}"))
                })?;
                for s in [c.box_score, c.text_score] {
                    if !(0.0..=1.0).contains(&s) {
                        return Err(Error::config(format!(
                            "detector call {call}, candidate {i}: score {s} outside [0,1]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierScript {
    pub answers: Vec<String>,
}

impl VerifierScript {
    pub fn load(path: &Path) -> Result<Self> {
        let script: Self = read_json(path)?;
        script
            .validate()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::config("verifier script needs at least one answer"));
        }
        if self.answers.iter().any(|a| a.trim().is_empty()) {
            return Err(Error::config("verifier answers must be non-empty"));
        }
        Ok(())
    }
}

/// On-disk segmenter script: mask paths relative to the script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterScript {
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ScriptedDetector {
    script: DetectorScript,
    calls: usize,
}

impl ScriptedDetector {
    pub fn new(script: DetectorScript) -> Result<Self> {
        script.validate()?;
        Ok(ScriptedDetector { script, calls: 0 })
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl DetectorBackend for ScriptedDetector {
    fn detect(&mut self, _image: &RgbImage, _prompt: &str) -> Result<Vec<Candidate>> {
        let out = self
            .script
            .responses
            .get(self.calls)
            .cloned()
            .unwrap_or_default();
        self.calls += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedVerifier {
    script: VerifierScript,
    calls: usize,
}

impl ScriptedVerifier {
    pub fn new(script: VerifierScript) -> Result<Self> {
        script.validate()?;
        Ok(ScriptedVerifier { script, calls: 0 })
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl VerifierBackend for ScriptedVerifier {
    fn ask(&mut self, _image: &RgbImage, _question: &str) -> Result<String> {
        let answers = &self.script.answers;
        let out = answers[self.calls.min(answers.len() - 1)].clone();
        self.calls += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedSegmenter {
    masks: Vec<LabelMask>,
    calls: usize,
}

impl ScriptedSegmenter {
    /// Every mask must be valid under `taxonomy`.
    pub fn new(masks: Vec<LabelMask>, taxonomy: &Taxonomy) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::config("segmenter script needs at least one mask"));
        }
        for (i, m) in masks.iter().enumerate() {
            m.validate(taxonomy)
                .map_err(|e| Error::config(format!("segmenter mask {i}: {e}")))?;
        }
        Ok(ScriptedSegmenter { masks, calls: 0 })
    }

    pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<Self> {
        let script: SegmenterScript = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let masks = script
            .masks
            .iter()
            .map(|p| read_mask_png(&base.join(p)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::new(masks, taxonomy).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl SegmenterBackend for ScriptedSegmenter {
    fn segment(&mut self, _image: &RgbImage, _taxonomy: &Taxonomy) -> Result<LabelMask> {
        let out = self.masks[self.calls.min(self.masks.len() - 1)].clone();
        self.calls += 1;
        Ok(out)
    }
}

/// Directory of per-tray scripts: `<dir>/<tray_id>.json`, falling back to
/// `<dir>/default.json`.
#[derive(Debug, Clone)]
pub struct ScriptedLibrary {
    dir: PathBuf,
}

impl ScriptedLibrary {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "scripted fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ScriptedLibrary { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn script_path(&self, tray_id: &str) -> Result<PathBuf> {
        let specific = self.dir.join(format!("{tray_id}.json"));
        if specific.is_file() {
            return Ok(specific);
        }
        let fallback = self.dir.join("default.json");
        if fallback.is_file() {
            return Ok(fallback);
        }
        Err(Error::config(format!(
            "no script for tray {tray_id} in {} (and no default.json)",
            self.dir.display()
        )))
    }

    pub fn detector(&self, tray_id: &str) -> Result<ScriptedDetector> {
        ScriptedDetector::new(DetectorScript::load(&self.script_path(tray_id)?)?)
    }

    pub fn verifier(&self, tray_id: &str) -> Result<ScriptedVerifier> {
        ScriptedVerifier::new(VerifierScript::load(&self.script_path(tray_id)?)?)
    }

    pub fn segmenter(&self, tray_id: &str, taxonomy: &Taxonomy) -> Result<ScriptedSegmenter> {
        ScriptedSegmenter::load(&self.script_path(tray_id)?, taxonomy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::taxonomy::TaxonomyName;

    fn cand(x: f64) -> Candidate {
        Candidate::new(BBox::new(x, 0.0, x + 5.0, 5.0).unwrap(), 0.9, 0.9)
    }

    fn img() -> RgbImage {
        RgbImage::new(4, 4)
    }

    #[test]
    fn detector_replays_then_empties() {
        let mut d = ScriptedDetector::new(DetectorScript {
            responses: vec![vec![]],
        })
        .unwrap();
        assert!(d.detect(&img(), "a beetle.").unwrap().is_empty());

        let script = DetectorScript {
            responses: vec![
                vec![cand(0.0), cand(10.0), cand(20.0)],
                vec![cand(30.0), cand(40.0)],
                vec![],
            ],
        };
        let mut d = ScriptedDetector::new(script).unwrap();
        let counts: Vec<usize> = (0..4)
            .map(|_| d.detect(&img(), "p").unwrap().len())
            .collect();
        assert_eq!(counts, [3, 2, 0, 0]);
    }

    #[test]
    fn detector_rejects_bad_fixture() {
        let bad = DetectorScript {
            responses: vec![vec![Candidate {
                bbox: BBox {
                    x_min: 5.0,
                    y_min: 0.0,
                    x_max: 1.0,
                    y_max: 2.0,
                },
                box_score: 0.5,
                text_score: 0.5,
            }]],
        };
        assert!(matches!(ScriptedDetector::new(bad), Err(Error::Config(_))));
        let bad_score = DetectorScript {
            responses: vec![vec![Candidate {
                box_score: 1.5,
                ..cand(0.0)
            }]],
        };
        assert!(ScriptedDetector::new(bad_score).is_err());
    }

    #[test]
    fn detector_json_format() {
        let json = r#"{"responses": [[{"x_min": 1, "y_min": 2, "x_max": 3, "y_max": 4,
            "box_score": 0.5, "text_score": 0.4}], []]}"#;
        let s: DetectorScript = serde_json::from_str(json).unwrap();
        assert_eq!(s.responses[0][0].bbox.y_max, 4.0);
        assert!(s.responses[1].is_empty());
    }

    #[test]
    fn verifier_replays_and_repeats_last() {
        let mut v = ScriptedVerifier::new(VerifierScript {
            answers: vec!["NO".into()],
        })
        .unwrap();
        assert_eq!(v.ask(&img(), "q").unwrap(), "NO");
        let mut v = ScriptedVerifier::new(VerifierScript {
            answers: vec!["maybe".into(), "I still see one. YES".into()],
        })
        .unwrap();
        assert_eq!(v.ask(&img(), "q").unwrap(), "maybe");
        assert_eq!(v.ask(&img(), "q").unwrap(), "I still see one. YES");
        assert_eq!(v.ask(&img(), "q").unwrap(), "I still see one. YES");
        assert!(ScriptedVerifier::new(VerifierScript { answers: vec![] }).is_err());
    }

    #[test]
    fn segmenter_replays_and_validates() {
        let t5 = Taxonomy::new(TaxonomyName::Beetle5);
        let bg = LabelMask::filled(3, 3, 0).unwrap();
        let head = LabelMask::filled(3, 3, 1).unwrap();
        let mut s = ScriptedSegmenter::new(vec![bg.clone()], &t5).unwrap();
        assert_eq!(s.segment(&img(), &t5).unwrap(), bg);

        let mut s = ScriptedSegmenter::new(vec![bg.clone(), head.clone()], &t5).unwrap();
        assert_eq!(s.segment(&img(), &t5).unwrap(), bg);
        assert_eq!(s.segment(&img(), &t5).unwrap(), head);
        assert_eq!(s.segment(&img(), &t5).unwrap(), head);

        let seven = LabelMask::filled(2, 2, 7).unwrap();
        assert!(matches!(
            ScriptedSegmenter::new(vec![seven], &t5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn library_falls_back_to_default() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("default.json"), r#"{"answers": ["NO"]}"#).unwrap();
        std::fs::write(dir.path().join("t2.json"), r#"{"answers": ["YES"]}"#).unwrap();
        let lib = ScriptedLibrary::new(dir.path()).unwrap();
        assert_eq!(lib.verifier("t1").unwrap().ask(&img(), "q").unwrap(), "NO");
        assert_eq!(lib.verifier("t2").unwrap().ask(&img(), "q").unwrap(), "YES");
        std::fs::write(dir.path().join("t3.json"), "not json").unwrap();
        assert!(matches!(lib.verifier("t3"), Err(Error::Config(_))));
    }
}
