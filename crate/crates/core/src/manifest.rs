//! The run manifest: one JSON document per output directory recording what
//! each stage produced for each tray. Paths are relative to the output root.
//! The document is rewritten atomically (temp file + rename) so an
//! interrupted batch can be resumed from it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{Detection, Verdict};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    #[default]
    Pending,
    Done,
    Flagged,
    Failed,
}

impl StageStatus {
    /// Done or flagged: the stage produced output later stages may consume.
    pub fn is_complete(&self) -> bool {
        matches!(self, StageStatus::Done | StageStatus::Flagged)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectStage {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Per-tray detection JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_answer: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CropStage {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Crop files in reading order.
    #[serde(default)]
    pub crops: Vec<String>,
    /// Detection indices in reading order (`crops[i]` is detection `order[i]`).
    #[serde(default)]
    pub order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default)]
    pub metadata_matched: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentedCrop {
    pub crop: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<String>,
    #[serde(default)]
    pub missing_parts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStage {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<String>,
    #[serde(default)]
    pub crops: Vec<SegmentedCrop>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrayEntry {
    pub tray_id: String,
    pub image_path: String,
    #[serde(default)]
    pub detect: DetectStage,
    #[serde(default)]
    pub crop: CropStage,
    #[serde(default)]
    pub segment: SegmentStage,
}

impl TrayEntry {
    pub fn new(tray_id: impl Into<String>, image_path: impl Into<String>) -> Self {
        TrayEntry {
            tray_id: tray_id.into(),
            image_path: image_path.into(),
            ..Default::default()
        }
    }

    /// Reasons of every flagged stage, prefixed with the stage name.
    pub fn flags(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (stage, status, reason) in [
            ("detect", self.detect.status, &self.detect.reason),
            ("crop", self.crop.status, &self.crop.reason),
            ("segment", self.segment.status, &self.segment.reason),
        ] {
            if matches!(status, StageStatus::Flagged | StageStatus::Failed) {
                let label = if status == StageStatus::Failed {
                    "failed"
                } else {
                    "flagged"
                };
                out.push(format!(
                    "{stage} {label}: {}",
                    reason.as_deref().unwrap_or("no reason recorded")
                ));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let id = &self.tray_id;
        for (stage, status, reason) in [
            ("detect", self.detect.status, &self.detect.reason),
            ("crop", self.crop.status, &self.crop.reason),
            ("segment", self.segment.status, &self.segment.reason),
        ] {
            if status == StageStatus::Flagged
                && reason.as_deref().is_none_or(|r| r.trim().is_empty())
            {
                return Err(Error::input(format!(
                    "tray {id}: {stage} is flagged without a reason"
                )));
            }
        }
        if !self.crop.crops.is_empty() && !self.detect.status.is_complete() {
            return Err(Error::input(format!(
                "tray {id}: crops recorded before detection finished"
            )));
        }
        if !self.segment.crops.is_empty() && !self.crop.status.is_complete() {
            return Err(Error::input(format!(
                "tray {id}: masks recorded before cropping finished"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub run_id: String,
    pub trays: BTreeMap<String, TrayEntry>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunManifest {
            version: MANIFEST_VERSION,
            run_id: run_id.into(),
            trays: BTreeMap::new(),
        }
    }

    /// Loads `path`, or starts an empty manifest if it does not exist.
    pub fn load_or_new(path: &Path, run_id: &str) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new(run_id));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: unreadable manifest: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::config(format!(
                "{}: manifest version {} is not supported",
                path.display(),
                m.version
            )));
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, t) in &self.trays {
            if key != &t.tray_id {
                return Err(Error::input(format!(
                    "manifest key {key} holds tray {}",
                    t.tray_id
                )));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn entry(&mut self, tray_id: &str, image_path: &str) -> &mut TrayEntry {
        self.trays
            .entry(tray_id.to_owned())
            .or_insert_with(|| TrayEntry::new(tray_id, image_path))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flagged_needs_reason() {
        let mut m = RunManifest::new("r");
        m.entry("t1", "t1.png").detect.status = StageStatus::Flagged;
        assert!(m.validate().is_err());
        m.entry("t1", "t1.png").detect.reason = Some("verifier said YES".into());
        m.validate().unwrap();
    }

    #[test]
    fn stage_order_enforced() {
        let mut m = RunManifest::new("r");
        m.entry("t1", "t1.png")
            .crop
            .crops
            .push("crops/t1_000.png".into());
        assert!(m.validate().is_err());
        m.entry("t1", "t1.png").detect.status = StageStatus::Done;
        m.validate().unwrap();
        m.entry("t1", "t1.png")
            .segment
            .crops
            .push(SegmentedCrop::default());
        assert!(m.validate().is_err());
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let mut m = RunManifest::new("abc");
        let e = m.entry("t1", "trays/t1.png");
        e.detect.status = StageStatus::Done;
        e.detect.verdict = Some(Verdict::VerifiedClear);
        m.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"VERIFIED_CLEAR\""));
        assert!(text.contains("\"done\""));
        assert_eq!(RunManifest::load_or_new(&p, "other").unwrap(), m);
        assert_eq!(
            RunManifest::load_or_new(&dir.path().join("nope.json"), "x")
                .unwrap()
                .run_id,
            "x"
        );
    }
}
