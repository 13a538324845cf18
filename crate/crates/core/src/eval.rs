//! Evaluation: exact-match count accuracy and per-class IoU / mIoU.
//!
//! mIoU conventions: background is excluded, and a class that appears in
//! neither mask is not applicable and left out of the image mean (unless
//! [`EvalOptions::absent_as_one`] is set, which scores it 1.0 for
//! sensitivity analysis). The dataset mIoU is the unweighted mean of
//! per-image mIoU.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{ClassId, LabelMask, Taxonomy};

fn check_pair(pred: &LabelMask, gt: &LabelMask) -> Result<()> {
    if pred.dimensions() != gt.dimensions() {
        return Err(Error::input(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.dimensions(),
            gt.dimensions()
        )));
    }
    Ok(())
}

/// `(intersection, union)` pixel counts for one class.
pub fn class_counts(pred: &LabelMask, gt: &LabelMask, class_id: ClassId) -> Result<(u64, u64)> {
    check_pair(pred, gt)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        let (a, b) = (p == class_id, g == class_id);
        inter += (a && b) as u64;
        union += (a || b) as u64;
    }
    Ok((inter, union))
}

/// `None` when the class is in neither mask.
pub fn class_iou(pred: &LabelMask, gt: &LabelMask, class_id: ClassId) -> Result<Option<f64>> {
    let (inter, union) = class_counts(pred, gt, class_id)?;
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Score classes absent from both masks as 1.0 instead of skipping them.
    pub absent_as_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: String,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub name: String,
    /// Foreground classes in taxonomy order.
    pub per_class: Vec<ClassIou>,
    pub miou: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn image_miou_with(
    pred: &LabelMask,
    gt: &LabelMask,
    taxonomy: &Taxonomy,
    options: EvalOptions,
) -> Result<(Vec<ClassIou>, Option<f64>)> {
    check_pair(pred, gt)?;
    pred.validate(taxonomy)
        .map_err(|e| Error::input(format!("prediction: {e}")))?;
    gt.validate(taxonomy)
        .map_err(|e| Error::input(format!("ground truth: {e}")))?;
    let row = taxonomy
        .part_ids()
        .map(|id| {
            let iou = class_iou(pred, gt, id)?;
            Ok(ClassIou {
                class: taxonomy.class_name(id).unwrap_or_default().to_owned(),
                iou: iou.or(options.absent_as_one.then_some(1.0)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let miou = mean(row.iter().filter_map(|c| c.iou));
    Ok((row, miou))
}

/// Per-class row and mean over applicable foreground classes.
pub fn image_miou(
    pred: &LabelMask,
    gt: &LabelMask,
    taxonomy: &Taxonomy,
) -> Result<(Vec<ClassIou>, Option<f64>)> {
    image_miou_with(pred, gt, taxonomy, EvalOptions::default())
}

#[derive(Debug, Clone)]
pub struct MaskPair {
    pub name: String,
    pub pred: LabelMask,
    pub gt: LabelMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub taxonomy: String,
    pub options: EvalOptions,
    pub images: Vec<ImageScores>,
    pub dataset_miou: Option<f64>,
    /// Mean per-class IoU over the images where the class is applicable.
    pub per_class: Vec<ClassIou>,
}

pub fn dataset_report(
    pairs: &[MaskPair],
    taxonomy: &Taxonomy,
    options: EvalOptions,
) -> Result<SegReport> {
    if pairs.is_empty() {
        return Err(Error::input("no prediction/ground-truth pairs to evaluate"));
    }
    let images = pairs
        .iter()
        .map(|p| {
            let (per_class, miou) = image_miou_with(&p.pred, &p.gt, taxonomy, options)
                .map_err(|e| Error::input(format!("{}: {e}", p.name)))?;
            Ok(ImageScores {
                name: p.name.clone(),
                per_class,
                miou,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset_miou = mean(images.iter().filter_map(|i| i.miou));
    let per_class = taxonomy
        .part_ids()
        .enumerate()
        .map(|(k, id)| ClassIou {
            class: taxonomy.class_name(id).unwrap_or_default().to_owned(),
            iou: mean(images.iter().filter_map(|img| img.per_class[k].iou)),
        })
        .collect();
    Ok(SegReport {
        taxonomy: taxonomy.name().to_string(),
        options,
        images,
        dataset_miou,
        per_class,
    })
}

pub fn percent(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn opt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), percent)
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, header);
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
    );
    for r in rows {
        line(&mut out, r);
    }
    out
}

impl SegReport {
    pub fn to_text(&self) -> String {
        let mut header = vec!["image".to_owned()];
        header.extend(self.per_class.iter().map(|c| c.class.clone()));
        header.push("mIoU".to_owned());
        let mut rows: Vec<Vec<String>> = self
            .images
            .iter()
            .map(|img| {
                let mut r = vec![img.name.clone()];
                r.extend(img.per_class.iter().map(|c| opt_percent(c.iou)));
                r.push(opt_percent(img.miou));
                r
            })
            .collect();
        let mut mean_row = vec!["mean".to_owned()];
        mean_row.extend(self.per_class.iter().map(|c| opt_percent(c.iou)));
        mean_row.push(opt_percent(self.dataset_miou));
        rows.push(mean_row);
        let mut out = format!(
            "taxonomy: {}  images: {}  dataset mIoU: {}\n\n",
            self.taxonomy,
            self.images.len(),
            opt_percent(self.dataset_miou)
        );
        out.push_str(&render_table(&header, &rows));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrayCount {
    pub tray_id: String,
    pub detected: usize,
    pub ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrayDelta {
    pub tray_id: String,
    pub detected: usize,
    pub ground_truth: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub total_trays: usize,
    pub exact_matches: usize,
    pub over_count_trays: usize,
    pub under_count_trays: usize,
    pub accuracy: f64,
    pub deltas: Vec<TrayDelta>,
}

impl CountReport {
    /// `(exact_matches, total_trays)` as an unreduced fraction.
    pub fn accuracy_fraction(&self) -> (usize, usize) {
        (self.exact_matches, self.total_trays)
    }

    pub fn accuracy_display(&self) -> String {
        percent(self.accuracy)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "trays: {}\nexact matches: {}\nover-count: {}\nunder-count: {}\naccuracy: {} ({}/{})\n",
            self.total_trays,
            self.exact_matches,
            self.over_count_trays,
            self.under_count_trays,
            self.accuracy_display(),
            self.exact_matches,
            self.total_trays,
        );
        let misses: Vec<Vec<String>> = self
            .deltas
            .iter()
            .filter(|d| d.delta != 0)
            .map(|d| {
                vec![
                    d.tray_id.clone(),
                    d.detected.to_string(),
                    d.ground_truth.to_string(),
                    format!("{:+}", d.delta),
                ]
            })
            .collect();
        if !misses.is_empty() {
            out.push('\n');
            let header: Vec<String> = ["tray_id", "detected", "ground_truth", "delta"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            out.push_str(&render_table(&header, &misses));
        }
        out
    }
}

pub fn count_accuracy(trays: &[TrayCount]) -> Result<CountReport> {
    if trays.is_empty() {
        return Err(Error::input("no trays to score"));
    }
    let deltas: Vec<TrayDelta> = trays
        .iter()
        .map(|t| TrayDelta {
            tray_id: t.tray_id.clone(),
            detected: t.detected,
            ground_truth: t.ground_truth,
            delta: t.detected as i64 - t.ground_truth as i64,
        })
        .collect();
    let exact = deltas.iter().filter(|d| d.delta == 0).count();
    let over = deltas.iter().filter(|d| d.delta > 0).count();
    let under = deltas.iter().filter(|d| d.delta < 0).count();
    Ok(CountReport {
        total_trays: trays.len(),
        exact_matches: exact,
        over_count_trays: over,
        under_count_trays: under,
        accuracy: exact as f64 / trays.len() as f64,
        deltas,
    })
}
