//! Stage 2: reading-order sort, per-specimen crops and the per-tray CSV.

use std::cmp::Ordering;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::geometry::{BBox, PixelRect};
use crate::records::{MetadataRecord, TrayRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SortConfig {
    /// Fraction of the median box height within which top edges share a row.
    pub row_tolerance_factor: f64,
    pub crop_padding: u32,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            row_tolerance_factor: 0.5,
            crop_padding: 0,
        }
    }
}

impl SortConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.row_tolerance_factor > 0.0 && self.row_tolerance_factor.is_finite()) {
            return Err(Error::config(format!(
                "sort.row_tolerance_factor must be positive, got {}",
                self.row_tolerance_factor
            )));
        }
        Ok(())
    }
}

pub const CSV_GEOMETRY_COLUMNS: [&str; 8] = [
    "tray_id",
    "crop_index",
    "crop_filename",
    "x_min",
    "y_min",
    "x_max",
    "y_max",
    "box_score",
];

pub const MISSING_PARTS_COLUMN: &str = "missing_parts";

/// `{tray_id}_{index:03}.png`, so lexicographic order is reading order.
pub fn crop_filename(tray_id: &str, index: usize) -> String {
    format!("{tray_id}_{index:03}.png")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Reading-order permutation: rows top to bottom, left to right within a row.
///
/// Boxes are swept by top edge. A box joins the open row while its `y_min`
/// is within `row_tolerance_factor * median height` of the row's first
/// member, otherwise it opens a new row.
pub fn sort_reading_order(boxes: &[BBox], config: &SortConfig) -> Vec<usize> {
    if boxes.is_empty() {
        return Vec::new();
    }
    let tolerance = config.row_tolerance_factor
        * median(&mut boxes.iter().map(BBox::height).collect::<Vec<_>>());

    let mut by_top: Vec<usize> = (0..boxes.len()).collect();
    by_top.sort_by(|&a, &b| boxes[a].y_min.total_cmp(&boxes[b].y_min).then(a.cmp(&b)));

    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut row_ref = f64::NEG_INFINITY;
    for i in by_top {
        let y = boxes[i].y_min;
        match rows.last_mut() {
            Some(row) if (y - row_ref).abs() <= tolerance => row.push(i),
            _ => {
                rows.push(vec![i]);
                row_ref = y;
            }
        }
    }

    let key = |a: &usize, b: &usize| -> Ordering {
        boxes[*a]
            .x_min
            .total_cmp(&boxes[*b].x_min)
            .then(boxes[*a].y_min.total_cmp(&boxes[*b].y_min))
            .then(a.cmp(b))
    };
    rows.into_iter()
        .flat_map(|mut row| {
            row.sort_by(key);
            row
        })
        .collect()
}

fn check_permutation(ordering: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if ordering.len() != n {
        return Err(Error::input(format!(
            "ordering has {} entries for {n} boxes",
            ordering.len()
        )));
    }
    for &i in ordering {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::input(format!(
                "ordering is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Source rectangles of each crop, in `ordering` sequence.
pub fn crop_rects(
    image_dims: (u32, u32),
    boxes: &[BBox],
    ordering: &[usize],
    padding: u32,
) -> Result<Vec<PixelRect>> {
    check_permutation(ordering, boxes.len())?;
    let (w, h) = image_dims;
    ordering
        .iter()
        .map(|&i| {
            let b = &boxes[i];
            b.validate()?;
            if !b.fits_within(w, h) {
                return Err(Error::input(format!(
                    "box {b:?} exceeds image bounds {w}x{h}"
                )));
            }
            Ok(b.pixel_rect(padding, w, h))
        })
        .collect()
}

pub fn crop_boxes(
    image: &RgbImage,
    boxes: &[BBox],
    ordering: &[usize],
    padding: u32,
) -> Result<Vec<RgbImage>> {
    let rects = crop_rects(image.dimensions(), boxes, ordering, padding)?;
    Ok(rects
        .iter()
        .map(|r| image::imageops::crop_imm(image, r.x0, r.y0, r.width(), r.height()).to_image())
        .collect())
}

/// Positional join of reading-order crops with the tray's metadata rows.
pub fn match_metadata(
    ordered_count: usize,
    tray: &TrayRecord,
) -> Result<Vec<(usize, MetadataRecord)>> {
    let rows = tray.metadata_rows.len();
    if rows != ordered_count {
        return Err(Error::MetadataMismatch {
            crops: ordered_count,
            rows,
        });
    }
    Ok(tray.metadata_rows.iter().cloned().enumerate().collect())
}

/// Writes the per-tray CSV. `detections` must already be in reading order;
/// `matches` (if any) supplies the metadata columns for each crop index.
pub fn write_tray_csv(
    tray_id: &str,
    matches: Option<&[(usize, MetadataRecord)]>,
    detections: &[Detection],
    out_path: &Path,
) -> Result<()> {
    let meta_cols: Vec<String> = matches
        .and_then(|m| m.first())
        .map(|(_, r)| r.keys().map(str::to_owned).collect())
        .unwrap_or_default();
    if let Some(m) = matches {
        if m.len() != detections.len() {
            return Err(Error::input(format!(
                "{} metadata matches for {} detections",
                m.len(),
                detections.len()
            )));
        }
    }

    let file = std::fs::File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let header: Vec<&str> = CSV_GEOMETRY_COLUMNS
        .iter()
        .copied()
        .chain(meta_cols.iter().map(String::as_str))
        .collect();
    w.write_record(&header)?;
    for (i, d) in detections.iter().enumerate() {
        let mut row = vec![
            tray_id.to_owned(),
            i.to_string(),
            crop_filename(tray_id, i),
            d.bbox.x_min.to_string(),
            d.bbox.y_min.to_string(),
            d.bbox.x_max.to_string(),
            d.bbox.y_max.to_string(),
            d.box_score.to_string(),
        ];
        if let Some(m) = matches {
            let (idx, rec) = &m[i];
            if *idx != i {
                return Err(Error::input(format!(
                    "metadata match {i} refers to crop {idx}"
                )));
            }
            row.extend(rec.values().map(str::to_owned));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(out_path, e))?;
    Ok(())
}

/// Sets (or replaces) the `missing_parts` column of an existing tray CSV.
/// `missing[i]` belongs to data row `i`.
pub fn set_missing_parts_column(csv_path: &Path, missing: &[Vec<String>]) -> Result<()> {
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let mut header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let existing = header.iter().position(|h| h == MISSING_PARTS_COLUMN);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    if rows.len() != missing.len() {
        return Err(Error::input(format!(
            "{}: {} rows but {} defect entries",
            csv_path.display(),
            rows.len(),
            missing.len()
        )));
    }
    let col = existing.unwrap_or_else(|| {
        header.push(MISSING_PARTS_COLUMN.to_owned());
        for r in rows.iter_mut() {
            r.push(String::new());
        }
        header.len() - 1
    });
    for (r, m) in rows.iter_mut().zip(missing) {
        r[col] = m.join(";");
    }

    let tmp = csv_path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record(&header)?;
        for r in &rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, csv_path).map_err(|e| Error::io(csv_path, e))
}
