//! Pipeline configuration, loaded from a TOML document.
//!
//! ```toml
//! input_dir = "trays"
//! output_dir = "out"
//! metadata = "metadata.csv"        # optional: master CSV or directory of <tray_id>.csv
//! ground_truth = "counts.csv"      # optional: tray_id,ground_truth_count
//! workers = 4
//!
//! [backends]
//! detector = { kind = "scripted", path = "fixtures/detector" }
//! verifier = { kind = "reference-verifier", command = ["python3", "python/reference_backends.py"] }
//! segmenter = { kind = "scripted", path = "fixtures/segmenter" }
//!
//! [detection]
//! box_threshold = 0.3
//!
//! [segmentation]
//! taxonomy = "beetle9"
//! ```
//!
//! Relative paths resolve against the config file's directory. Relative
//! scripted fixture paths resolve against `$TRAYSCAN_FIXTURE_ROOT` when it
//! is set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    BackendFactory, DetectorBackend, ProcessBackend, ScriptedLibrary, SegmenterBackend,
    VerifierBackend,
};
use crate::crop::SortConfig;
use crate::detect::DetectionConfig;
use crate::error::{Error, Result};
use crate::segment::SegmentationConfig;
use crate::taxonomy::Taxonomy;

pub const FIXTURE_ROOT_ENV: &str = "TRAYSCAN_FIXTURE_ROOT";

fn default_command() -> Vec<String> {
    vec!["python3".into(), "python/reference_backends.py".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendSpec {
    Scripted {
        path: PathBuf,
    },
    ReferenceDetector {
        #[serde(default = "default_command")]
        command: Vec<String>,
    },
    ReferenceVerifier {
        #[serde(default = "default_command")]
        command: Vec<String>,
    },
    ReferenceSegmenter {
        #[serde(default = "default_command")]
        command: Vec<String>,
    },
}

impl BackendSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendSpec::Scripted { .. } => "scripted",
            BackendSpec::ReferenceDetector { .. } => "reference-detector",
            BackendSpec::ReferenceVerifier { .. } => "reference-verifier",
            BackendSpec::ReferenceSegmenter { .. } => "reference-segmenter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub detector: BackendSpec,
    pub verifier: BackendSpec,
    pub segmenter: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub run_id: Option<String>,
    pub backends: BackendsConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub sort: SortConfig,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
}

fn default_workers() -> usize {
    1
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    fn resolve_paths(&mut self, base: &Path) {
        self.input_dir = resolve(base, &self.input_dir);
        self.output_dir = resolve(base, &self.output_dir);
        self.metadata = self.metadata.as_deref().map(|p| resolve(base, p));
        self.ground_truth = self.ground_truth.as_deref().map(|p| resolve(base, p));
        let fixture_base = std::env::var_os(FIXTURE_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| base.to_path_buf());
        for spec in [
            &mut self.backends.detector,
            &mut self.backends.verifier,
            &mut self.backends.segmenter,
        ] {
            if let BackendSpec::Scripted { path } = spec {
                *path = resolve(&fixture_base, path);
            }
        }
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        self.sort.validate()?;
        self.segmentation.validate()?;
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if !self.input_dir.is_dir() {
            return Err(Error::config(format!(
                "input directory {} does not exist",
                self.input_dir.display()
            )));
        }
        for (name, p) in [
            ("metadata", &self.metadata),
            ("ground_truth", &self.ground_truth),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        for (slot, spec, allowed) in [
            ("detector", &self.backends.detector, "reference-detector"),
            ("verifier", &self.backends.verifier, "reference-verifier"),
            ("segmenter", &self.backends.segmenter, "reference-segmenter"),
        ] {
            match spec {
                BackendSpec::Scripted { path } if !path.is_dir() => {
                    return Err(Error::config(format!(
                        "scripted {slot} fixture directory {} does not exist",
                        path.display()
                    )))
                }
                BackendSpec::Scripted { .. } => {}
                other if other.kind() != allowed => {
                    return Err(Error::config(format!(
                        "backend {} cannot serve as the {slot}",
                        other.kind()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Stable identifier derived from the inputs and stage settings.
    pub fn derived_run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        let mut h = Sha256::new();
        h.update(self.input_dir.to_string_lossy().as_bytes());
        for part in [
            serde_json::to_string(&self.detection),
            serde_json::to_string(&self.sort),
            serde_json::to_string(&self.segmentation),
            serde_json::to_string(&self.backends),
        ] {
            h.update(part.unwrap_or_default().as_bytes());
        }
        h.finalize()[..6]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Builds per-tray backend instances from the configured specs.
pub struct ConfiguredBackends {
    backends: BackendsConfig,
    taxonomy: Taxonomy,
}

impl ConfiguredBackends {
    pub fn new(config: &PipelineConfig) -> Self {
        ConfiguredBackends {
            backends: config.backends.clone(),
            taxonomy: config.segmentation.taxonomy(),
        }
    }
}

fn command_of(spec: &BackendSpec) -> &[String] {
    match spec {
        BackendSpec::ReferenceDetector { command }
        | BackendSpec::ReferenceVerifier { command }
        | BackendSpec::ReferenceSegmenter { command } => command,
        BackendSpec::Scripted { .. } => &[],
    }
}

impl BackendFactory for ConfiguredBackends {
    fn detector(&self, tray_id: &str) -> Result<Box<dyn DetectorBackend>> {
        match &self.backends.detector {
            BackendSpec::Scripted { path } => {
                Ok(Box::new(ScriptedLibrary::new(path)?.detector(tray_id)?))
            }
            spec => Ok(Box::new(ProcessBackend::spawn(command_of(spec))?)),
        }
    }

    fn verifier(&self, tray_id: &str) -> Result<Box<dyn VerifierBackend>> {
        match &self.backends.verifier {
            BackendSpec::Scripted { path } => {
                Ok(Box::new(ScriptedLibrary::new(path)?.verifier(tray_id)?))
            }
            spec => Ok(Box::new(ProcessBackend::spawn(command_of(spec))?)),
        }
    }

    fn segmenter(&self, tray_id: &str) -> Result<Box<dyn SegmenterBackend>> {
        match &self.backends.segmenter {
            BackendSpec::Scripted { path } => Ok(Box::new(
                ScriptedLibrary::new(path)?.segmenter(tray_id, &self.taxonomy)?,
            )),
            spec => Ok(Box::new(ProcessBackend::spawn(command_of(spec))?)),
        }
    }
}
