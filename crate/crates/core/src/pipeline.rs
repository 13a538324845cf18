//! Stage drivers behind the CLI subcommands.
//!
//! Each stage fans trays out to `workers` threads; results come back over a
//! channel to the single thread that owns the manifest, which is rewritten
//! after every tray.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::backends::BackendFactory;
use crate::config::{ConfiguredBackends, PipelineConfig};
use crate::crop::{
    crop_boxes, crop_filename, match_metadata, set_missing_parts_column, sort_reading_order,
    write_tray_csv,
};
use crate::detect::{run_iterative_detection, Detection, DetectionOutcome, Verdict};
use crate::error::{Error, Result};
use crate::eval::{
    count_accuracy, dataset_report, CountReport, EvalOptions, MaskPair, SegReport, TrayCount,
};
use crate::geometry::BBox;
use crate::manifest::{
    write_atomic, CropStage, DetectStage, RunManifest, SegmentStage, SegmentedCrop, StageStatus,
    MANIFEST_FILE,
};
use crate::maskfile::{read_mask_png, write_mask_png};
use crate::records::{load_ground_truth, MetadataSource, TrayRecord};
use crate::segment::{completeness_check, overlay_mask, segment_crop};

pub const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "tif", "tiff"];
pub const FLAGGED_FILE: &str = "flagged.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detect,
    Crop,
    Segment,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Crop => "crop",
            Stage::Segment => "segment",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Glob over tray ids (or image file names); all trays when `None`.
    pub trays: Option<String>,
    /// Skip trays whose stage already completed.
    pub resume: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: Option<Stage>,
    pub selected: usize,
    pub done: Vec<String>,
    pub flagged: Vec<(String, String)>,
    pub failed: Vec<(String, String)>,
    /// Refused because an earlier stage has not run.
    pub refused: Vec<(String, String)>,
    pub resumed: Vec<String>,
}

impl StageSummary {
    pub fn successes(&self) -> usize {
        self.done.len() + self.flagged.len() + self.resumed.len()
    }

    pub fn render(&self) -> String {
        let stage = self.stage.map_or("run", |s| s.name());
        let mut out = format!(
            "{stage}: {} selected, {} done, {} flagged, {} failed, {} skipped (resume), {} not ready\n",
            self.selected,
            self.done.len(),
            self.flagged.len(),
            self.failed.len(),
            self.resumed.len(),
            self.refused.len()
        );
        for (t, r) in &self.flagged {
            out.push_str(&format!("  FLAGGED {t}: {r}\n"));
        }
        for (t, r) in &self.failed {
            out.push_str(&format!("  FAILED {t}: {r}\n"));
        }
        for (t, r) in &self.refused {
            out.push_str(&format!("  SKIPPED {t}: {r}\n"));
        }
        out
    }
}

/// Per-tray detection file written by the detect stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub tray_id: String,
    pub detections: Vec<Detection>,
    pub iterations_used: u32,
    pub verdict: Verdict,
    pub raw_verifier_answer: String,
}

#[derive(Debug, Clone)]
struct TrayInput {
    tray_id: String,
    image_path: PathBuf,
    /// Path as recorded in the manifest.
    image_label: String,
}

enum Update {
    Detect(String, DetectStage),
    Crop(String, CropStage),
    Segment(String, SegmentStage),
}

pub struct Pipeline {
    config: PipelineConfig,
    factory: Arc<dyn BackendFactory>,
}

fn rel(p: &Path, root: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

impl Pipeline {
    /// Validates the config and wires the configured backends.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let factory = Arc::new(ConfiguredBackends::new(&config));
        Ok(Pipeline { config, factory })
    }

    pub fn with_factory(config: PipelineConfig, factory: Arc<dyn BackendFactory>) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config, factory })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config.output_dir.join(MANIFEST_FILE)
    }

    pub fn load_manifest(&self) -> Result<RunManifest> {
        RunManifest::load_or_new(&self.manifest_path(), &self.config.derived_run_id())
    }

    fn discover(&self, selection: Option<&str>) -> Result<Vec<TrayInput>> {
        let pattern = selection
            .map(glob::Pattern::new)
            .transpose()
            .map_err(|e| Error::config(format!("bad tray pattern: {e}")))?;
        let dir = &self.config.input_dir;
        let mut trays = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(str::to_ascii_lowercase);
            if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or(stem);
            if let Some(p) = &pattern {
                if !p.matches(stem) && !p.matches(file_name) {
                    continue;
                }
            }
            trays.push(TrayInput {
                tray_id: stem.to_owned(),
                image_label: rel(&path, &self.config.output_dir),
                image_path: path,
            });
        }
        trays.sort_by(|a, b| a.tray_id.cmp(&b.tray_id));
        if let Some(dup) = trays.windows(2).find(|w| w[0].tray_id == w[1].tray_id) {
            return Err(Error::config(format!(
                "two tray images share the id {}",
                dup[0].tray_id
            )));
        }
        Ok(trays)
    }

    /// Runs `work` over `jobs` on the worker pool, applying each update to the
    /// manifest as it arrives.
    fn run_pool<J, F>(&self, manifest: &mut RunManifest, jobs: Vec<J>, work: F) -> Result<()>
    where
        J: Send + Sync,
        F: Fn(&J) -> Update + Send + Sync,
    {
        let path = self.manifest_path();
        let next = AtomicUsize::new(0);
        let workers = self.config.workers.min(jobs.len()).max(1);
        let (tx, rx) = mpsc::channel::<Update>();
        std::thread::scope(|s| -> Result<()> {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, jobs, work) = (&next, &jobs, &work);
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = jobs.get(i) else { break };
                    if tx.send(work(job)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for update in rx {
                apply(manifest, update);
                manifest.save(&path)?;
            }
            Ok(())
        })
    }

    fn finish(&self, manifest: &RunManifest) -> Result<()> {
        manifest.save(&self.manifest_path())?;
        let mut text = String::new();
        for (id, t) in &manifest.trays {
            for f in t.flags() {
                text.push_str(&format!("{id}\t{f}\n"));
            }
            for c in &t.segment.crops {
                if c.status == StageStatus::Failed {
                    text.push_str(&format!(
                        "{id}\tsegment crop {} failed: {}\n",
                        c.crop,
                        c.reason.as_deref().unwrap_or("")
                    ));
                }
            }
        }
        write_atomic(&self.output_dir().join(FLAGGED_FILE), text.as_bytes())
    }

    fn summarize(
        &self,
        stage: Stage,
        manifest: &RunManifest,
        processed: &[String],
        mut summary: StageSummary,
    ) -> StageSummary {
        summary.stage = Some(stage);
        for id in processed {
            let t = &manifest.trays[id];
            let (status, reason) = match stage {
                Stage::Detect => (t.detect.status, &t.detect.reason),
                Stage::Crop => (t.crop.status, &t.crop.reason),
                Stage::Segment => (t.segment.status, &t.segment.reason),
            };
            let reason = reason.clone().unwrap_or_default();
            match status {
                StageStatus::Done => summary.done.push(id.clone()),
                StageStatus::Flagged => summary.flagged.push((id.clone(), reason)),
                StageStatus::Failed => summary.failed.push((id.clone(), reason)),
                StageStatus::Pending => summary.refused.push((id.clone(), "not processed".into())),
            }
        }
        summary
    }

    /// Stage 1 over the selected trays.
    pub fn detect(&self, opts: &RunOptions) -> Result<StageSummary> {
        let out = self.output_dir().to_path_buf();
        mkdir(&out.join("detections"))?;
        let mut manifest = self.load_manifest()?;
        let trays = self.discover(opts.trays.as_deref())?;
        let mut summary = StageSummary {
            selected: trays.len(),
            ..Default::default()
        };
        let mut jobs = Vec::new();
        for t in trays {
            let entry = manifest.entry(&t.tray_id, &t.image_label);
            if opts.resume && entry.detect.status.is_complete() {
                summary.resumed.push(t.tray_id);
            } else {
                jobs.push(t);
            }
        }
        let processed: Vec<String> = jobs.iter().map(|j| j.tray_id.clone()).collect();
        self.run_pool(&mut manifest, jobs, |t| {
            Update::Detect(t.tray_id.clone(), self.detect_tray(t, &out))
        })?;
        self.finish(&manifest)?;
        Ok(self.summarize(Stage::Detect, &manifest, &processed, summary))
    }

    fn detect_tray(&self, tray: &TrayInput, out: &Path) -> DetectStage {
        let failed = |e: Error| DetectStage {
            status: StageStatus::Failed,
            reason: Some(e.to_string()),
            ..Default::default()
        };
        let run = || -> Result<(DetectionOutcome, String)> {
            let image = load_rgb(&tray.image_path)?;
            let mut detector = self.factory.detector(&tray.tray_id)?;
            let mut verifier = self.factory.verifier(&tray.tray_id)?;
            let outcome = run_iterative_detection(
                &image,
                detector.as_mut(),
                verifier.as_mut(),
                &self.config.detection,
            )?;
            let file = DetectionFile {
                tray_id: tray.tray_id.clone(),
                detections: outcome.detections.clone(),
                iterations_used: outcome.iterations_used,
                verdict: outcome.verdict,
                raw_verifier_answer: outcome.raw_verifier_answer.clone(),
            };
            let path = out
                .join("detections")
                .join(format!("{}.json", tray.tray_id));
            let mut json = serde_json::to_string_pretty(&file)?;
            json.push('\n');
            write_atomic(&path, json.as_bytes())?;
            Ok((outcome, rel(&path, out)))
        };
        match run() {
            Ok((o, output)) => DetectStage {
                status: if o.verdict.is_flagged() {
                    StageStatus::Flagged
                } else {
                    StageStatus::Done
                },
                reason: o.verdict.reason(&o.raw_verifier_answer),
                output: Some(output),
                detections: o.detections,
                iterations_used: Some(o.iterations_used),
                verdict: Some(o.verdict),
                raw_answer: Some(o.raw_verifier_answer),
            },
            Err(e) => failed(e),
        }
    }

    /// Stage 2: reading-order crops, metadata join and tray CSV.
    pub fn crop(&self, opts: &RunOptions) -> Result<StageSummary> {
        let out = self.output_dir().to_path_buf();
        mkdir(&out.join("crops"))?;
        mkdir(&out.join("csv"))?;
        let metadata = self
            .config
            .metadata
            .as_deref()
            .map(MetadataSource::open)
            .transpose()?;
        let mut manifest = self.load_manifest()?;
        let trays = self.discover(opts.trays.as_deref())?;
        let mut summary = StageSummary {
            selected: trays.len(),
            ..Default::default()
        };
        let mut jobs = Vec::new();
        for t in trays {
            let entry = manifest.entry(&t.tray_id, &t.image_label);
            let detection_file = entry.detect.output.as_ref().map(|p| out.join(p));
            if !entry.detect.status.is_complete()
                || !detection_file.as_ref().is_some_and(|p| p.is_file())
            {
                summary.refused.push((
                    t.tray_id,
                    "detection output missing; run detect first".into(),
                ));
            } else if opts.resume && entry.crop.status.is_complete() {
                summary.resumed.push(t.tray_id);
            } else {
                jobs.push((
                    t,
                    detection_file.unwrap_or_default(),
                    entry.crop.crops.clone(),
                ));
            }
        }
        let processed: Vec<String> = jobs.iter().map(|j| j.0.tray_id.clone()).collect();
        self.run_pool(&mut manifest, jobs, |(t, det_file, stale)| {
            Update::Crop(
                t.tray_id.clone(),
                self.crop_tray(t, det_file, stale, metadata.as_ref(), &out),
            )
        })?;
        self.finish(&manifest)?;
        let mut s = self.summarize(Stage::Crop, &manifest, &processed, summary);
        s.refused.sort();
        Ok(s)
    }

    fn crop_tray(
        &self,
        tray: &TrayInput,
        detection_file: &Path,
        stale: &[String],
        metadata: Option<&MetadataSource>,
        out: &Path,
    ) -> CropStage {
        let run = || -> Result<CropStage> {
            let text = std::fs::read_to_string(detection_file)
                .map_err(|e| Error::io(detection_file, e))?;
            let det: DetectionFile = serde_json::from_str(&text)?;
            let image = load_rgb(&tray.image_path)?;
            let boxes: Vec<BBox> = det.detections.iter().map(|d| d.bbox).collect();
            let order = sort_reading_order(&boxes, &self.config.sort);
            let crops = crop_boxes(&image, &boxes, &order, self.config.sort.crop_padding)?;

            for s in stale {
                let _ = std::fs::remove_file(out.join(s));
            }
            let crop_dir = out.join("crops").join(&tray.tray_id);
            mkdir(&crop_dir)?;
            let mut crop_paths = Vec::with_capacity(crops.len());
            for (i, c) in crops.iter().enumerate() {
                let p = crop_dir.join(crop_filename(&tray.tray_id, i));
                c.save(&p)?;
                crop_paths.push(rel(&p, out));
            }

            let ordered: Vec<Detection> = order.iter().map(|&i| det.detections[i]).collect();
            let mut status = StageStatus::Done;
            let mut reason = None;
            let matches = match metadata {
                None => None,
                Some(src) => {
                    let mut record = TrayRecord::new(&tray.tray_id, &tray.image_label);
                    record.metadata_rows = src.rows_for(&tray.tray_id)?;
                    record.validate()?;
                    match match_metadata(ordered.len(), &record) {
                        Ok(m) => Some(m),
                        Err(e @ Error::MetadataMismatch { .. }) => {
                            status = StageStatus::Flagged;
                            reason = Some(e.to_string());
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            let csv_path = out.join("csv").join(format!("{}.csv", tray.tray_id));
            write_tray_csv(&tray.tray_id, matches.as_deref(), &ordered, &csv_path)?;
            Ok(CropStage {
                status,
                reason,
                crops: crop_paths,
                order,
                csv: Some(rel(&csv_path, out)),
                metadata_matched: matches.is_some(),
            })
        };
        run().unwrap_or_else(|e| CropStage {
            status: StageStatus::Failed,
            reason: Some(e.to_string()),
            ..Default::default()
        })
    }

    /// Stage 3: masks, overlays and defect flags for every crop.
    pub fn segment(&self, opts: &RunOptions) -> Result<StageSummary> {
        let out = self.output_dir().to_path_buf();
        let mut manifest = self.load_manifest()?;
        let trays = self.discover(opts.trays.as_deref())?;
        let mut summary = StageSummary {
            selected: trays.len(),
            ..Default::default()
        };
        let mut jobs = Vec::new();
        for t in trays {
            let entry = manifest.entry(&t.tray_id, &t.image_label);
            let crops_present = entry.crop.status.is_complete()
                && entry.crop.crops.iter().all(|c| out.join(c).is_file());
            if !crops_present {
                summary
                    .refused
                    .push((t.tray_id, "crops missing; run crop first".into()));
            } else if opts.resume && entry.segment.status.is_complete() {
                summary.resumed.push(t.tray_id);
            } else {
                jobs.push((t.tray_id, entry.crop.clone()));
            }
        }
        for d in ["masks", "overlays"] {
            mkdir(&out.join(d))?;
        }
        let processed: Vec<String> = jobs.iter().map(|j| j.0.clone()).collect();
        self.run_pool(&mut manifest, jobs, |(id, crop)| {
            Update::Segment(id.clone(), self.segment_tray(id, crop, &out))
        })?;
        self.finish(&manifest)?;
        Ok(self.summarize(Stage::Segment, &manifest, &processed, summary))
    }

    fn segment_tray(&self, tray_id: &str, crop: &CropStage, out: &Path) -> SegmentStage {
        let cfg = &self.config.segmentation;
        let run = || -> Result<SegmentStage> {
            let palette = cfg.palette()?;
            let mut backend = self.factory.segmenter(tray_id)?;
            let (mask_dir, overlay_dir) = (
                out.join("masks").join(tray_id),
                out.join("overlays").join(tray_id),
            );
            mkdir(&mask_dir)?;
            mkdir(&overlay_dir)?;
            let mut items = Vec::with_capacity(crop.crops.len());
            for crop_rel in &crop.crops {
                let crop_path = out.join(crop_rel);
                let stem = crop_path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("crop")
                    .to_owned();
                let mut one = || -> Result<SegmentedCrop> {
                    let image = load_rgb(&crop_path)?;
                    let mask = segment_crop(&image, backend.as_mut(), cfg)?;
                    let overlay = overlay_mask(&image, &mask, &palette, cfg.overlay_alpha)?;
                    let mask_path = mask_dir.join(format!("{stem}_mask.png"));
                    let overlay_path = overlay_dir.join(format!("{stem}_overlay.png"));
                    write_mask_png(&mask_path, &mask, &palette)?;
                    overlay.save(&overlay_path)?;
                    let missing = completeness_check(&mask, cfg);
                    Ok(SegmentedCrop {
                        crop: crop_rel.clone(),
                        status: if missing.is_empty() {
                            StageStatus::Done
                        } else {
                            StageStatus::Flagged
                        },
                        reason: (!missing.is_empty())
                            .then(|| format!("missing {}", missing.join(", "))),
                        mask: Some(rel(&mask_path, out)),
                        overlay: Some(rel(&overlay_path, out)),
                        missing_parts: missing,
                    })
                };
                items.push(one().unwrap_or_else(|e| SegmentedCrop {
                    crop: crop_rel.clone(),
                    status: StageStatus::Failed,
                    reason: Some(e.to_string()),
                    ..Default::default()
                }));
            }
            if let Some(csv) = &crop.csv {
                let missing: Vec<Vec<String>> =
                    items.iter().map(|i| i.missing_parts.clone()).collect();
                set_missing_parts_column(&out.join(csv), &missing)?;
            }
            let problems: Vec<String> = items
                .iter()
                .filter(|i| i.status != StageStatus::Done)
                .map(|i| {
                    let name = Path::new(&i.crop)
                        .file_name()
                        .and_then(|n| n.to_str())
                        .unwrap_or(&i.crop);
                    format!("{name} {}", i.reason.as_deref().unwrap_or(""))
                })
                .collect();
            Ok(SegmentStage {
                status: if problems.is_empty() {
                    StageStatus::Done
                } else {
                    StageStatus::Flagged
                },
                reason: (!problems.is_empty()).then(|| problems.join("; ")),
                taxonomy: Some(cfg.taxonomy.to_string()),
                crops: items,
            })
        };
        run().unwrap_or_else(|e| SegmentStage {
            status: StageStatus::Failed,
            reason: Some(e.to_string()),
            taxonomy: Some(cfg.taxonomy.to_string()),
            ..Default::default()
        })
    }

    /// `detect`, `crop` and `segment` in sequence.
    pub fn run_all(&self, opts: &RunOptions) -> Result<Vec<StageSummary>> {
        Ok(vec![
            self.detect(opts)?,
            self.crop(opts)?,
            self.segment(opts)?,
        ])
    }

    /// Count accuracy of completed detections against the ground-truth file.
    pub fn evaluate_counts(&self, ground_truth: Option<&Path>) -> Result<CountReport> {
        let gt_path = ground_truth
            .map(Path::to_path_buf)
            .or_else(|| self.config.ground_truth.clone())
            .ok_or_else(|| Error::input("counts evaluation needs a ground truth file (ground_truth in config or --ground-truth)"))?;
        if !gt_path.is_file() {
            return Err(Error::input(format!(
                "ground truth file {} does not exist",
                gt_path.display()
            )));
        }
        let gt = load_ground_truth(&gt_path)?;
        let manifest = self.load_manifest()?;
        let counts: Vec<TrayCount> = manifest
            .trays
            .values()
            .filter(|t| t.detect.status.is_complete())
            .filter_map(|t| {
                gt.get(&t.tray_id).map(|&g| TrayCount {
                    tray_id: t.tray_id.clone(),
                    detected: t.detect.detections.len(),
                    ground_truth: g,
                })
            })
            .collect();
        let report = count_accuracy(&counts)?;
        self.write_report("counts", &report, &report.to_text())?;
        Ok(report)
    }

    pub fn write_report<T: Serialize>(&self, name: &str, report: &T, text: &str) -> Result<()> {
        write_report(&self.output_dir().join("reports"), name, report, text)
    }
}

fn apply(manifest: &mut RunManifest, update: Update) {
    match update {
        Update::Detect(id, stage) => {
            let e = manifest.trays.get_mut(&id).expect("entry exists");
            e.detect = stage;
            e.crop = CropStage::default();
            e.segment = SegmentStage::default();
        }
        Update::Crop(id, stage) => {
            let e = manifest.trays.get_mut(&id).expect("entry exists");
            e.crop = stage;
            e.segment = SegmentStage::default();
        }
        Update::Segment(id, stage) => {
            manifest.trays.get_mut(&id).expect("entry exists").segment = stage;
        }
    }
}

pub fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T, text: &str) -> Result<()> {
    mkdir(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomic(&dir.join(format!("{name}.json")), json.as_bytes())?;
    write_atomic(&dir.join(format!("{name}.txt")), text.as_bytes())
}

/// Reads `tray_id,detected_count,ground_truth_count` rows.
pub fn load_counts_file(path: &Path) -> Result<Vec<TrayCount>> {
    if !path.is_file() {
        return Err(Error::input(format!(
            "counts file {} does not exist",
            path.display()
        )));
    }
    #[derive(Deserialize)]
    struct Row {
        tray_id: String,
        detected_count: usize,
        ground_truth_count: usize,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
            Ok(TrayCount {
                tray_id: r.tray_id,
                detected: r.detected_count,
                ground_truth: r.ground_truth_count,
            })
        })
        .collect()
}

/// Pairs every mask in `gt_dir` with the same file name in `pred_dir`.
pub fn load_mask_pairs(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<MaskPair>> {
    for d in [pred_dir, gt_dir] {
        if !d.is_dir() {
            return Err(Error::input(format!(
                "mask directory {} does not exist",
                d.display()
            )));
        }
    }
    let mut names: Vec<String> = std::fs::read_dir(gt_dir)
        .map_err(|e| Error::io(gt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_owned))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let pred_path = pred_dir.join(&name);
            if !pred_path.is_file() {
                return Err(Error::input(format!(
                    "no prediction {} for ground truth {name}",
                    pred_path.display()
                )));
            }
            Ok(MaskPair {
                pred: read_mask_png(&pred_path)?,
                gt: read_mask_png(&gt_dir.join(&name))?,
                name,
            })
        })
        .collect()
}

pub fn evaluate_segmentation(
    pred_dir: &Path,
    gt_dir: &Path,
    taxonomy: &crate::taxonomy::Taxonomy,
    options: EvalOptions,
) -> Result<SegReport> {
    let pairs = load_mask_pairs(pred_dir, gt_dir)?;
    dataset_report(&pairs, taxonomy, options)
}

/// Manifest detections keyed by tray, for callers that only need counts.
pub fn detected_counts(manifest: &RunManifest) -> BTreeMap<String, usize> {
    manifest
        .trays
        .iter()
        .filter(|(_, t)| t.detect.status.is_complete())
        .map(|(id, t)| (id.clone(), t.detect.detections.len()))
        .collect()
}
