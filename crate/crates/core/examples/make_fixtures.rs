//! Regenerates the hermetic fixture corpus under `tests/fixtures/hermetic`.
//!
//!     cargo run -p trayscan --example make_fixtures -- crates/core/tests/fixtures/hermetic
//!
//! The tray image holds six painted beetles in two jittered rows of three.
//! The detector script finds four of them, then the remaining two (plus a
//! sliver over an already-masked beetle and a low-score false positive),
//! then nothing.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde_json::json;
use trayscan::maskfile::write_mask_png;
use trayscan::palette::Palette;
use trayscan::{LabelMask, Taxonomy, TaxonomyName};

const TRAY_W: u32 = 900;
const TRAY_H: u32 = 600;
const RX: f64 = 60.0;
const RY: f64 = 95.0;

/// Beetle centres, row-major reading order.
const CENTRES: [(f64, f64); 6] = [
    (170.0, 140.0),
    (452.0, 155.0),
    (731.0, 148.0),
    (168.0, 425.0),
    (449.0, 410.0),
    (733.0, 430.0),
];

fn inside(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
    dx * dx + dy * dy <= 1.0
}

fn paint_tray() -> RgbImage {
    let mut img = RgbImage::from_pixel(TRAY_W, TRAY_H, Rgb([236, 231, 220]));
    for (i, &(cx, cy)) in CENTRES.iter().enumerate() {
        let shade = 30 + 12 * i as u8;
        for y in 0..TRAY_H {
            for x in 0..TRAY_W {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if inside(px, py, cx, cy + 15.0, RX * 0.9, RY * 0.75) {
                    img.put_pixel(x, y, Rgb([shade + 20, shade + 10, shade]));
                } else if inside(px, py, cx, cy - 55.0, RX * 0.55, RY * 0.22) {
                    img.put_pixel(x, y, Rgb([shade, shade, shade + 8]));
                } else if inside(px, py, cx, cy - 82.0, RX * 0.3, RY * 0.13) {
                    img.put_pixel(x, y, Rgb([shade + 5, shade, shade]));
                }
            }
        }
        // elytral suture
        for y in (cy - 35.0) as u32..(cy + 85.0) as u32 {
            img.put_pixel(cx as u32, y, Rgb([12, 10, 8]));
        }
    }
    img
}

fn bbox(i: usize) -> serde_json::Value {
    let (cx, cy) = CENTRES[i];
    json!({"x_min": cx - 62.5, "y_min": cy - 97.5, "x_max": cx + 62.5, "y_max": cy + 97.5})
}

fn cand(i: usize, box_score: f64, text_score: f64) -> serde_json::Value {
    let mut v = bbox(i);
    v["box_score"] = json!(box_score);
    v["text_score"] = json!(text_score);
    v
}

/// 512x512 part mask; `variant` shifts proportions a little.
fn beetle_mask(variant: u32) -> LabelMask {
    let s = variant as f64 * 8.0;
    LabelMask::from_fn(512, 512, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let leg = |x0: f64, y0: f64, x1: f64, y1: f64| {
            let (dx, dy) = (x1 - x0, y1 - y0);
            let t = (((px - x0) * dx + (py - y0) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            let (qx, qy) = (x0 + t * dx - px, y0 + t * dy - py);
            qx * qx + qy * qy <= 16.0
        };
        if inside(px, py, 256.0, 300.0 + s, 150.0, 170.0 - s) {
            3 // elytra
        } else if inside(px, py, 256.0, 125.0 + s / 2.0, 95.0, 48.0) {
            2 // pronotum
        } else if inside(px, py, 256.0, 62.0, 52.0, 30.0) {
            1 // head
        } else if leg(256.0, 40.0, 150.0 - s, 4.0) || leg(256.0, 40.0, 362.0 + s, 4.0) {
            5 // antennas
        } else if [
            (-1.0, 200.0),
            (-1.0, 300.0),
            (-1.0, 380.0),
            (1.0, 200.0),
            (1.0, 300.0),
            (1.0, 380.0),
        ]
        .iter()
        .any(|&(side, ly)| leg(256.0 + side * 120.0, ly, 256.0 + side * 250.0, ly + 60.0))
        {
            4 // legs
        } else {
            0
        }
    })
    .expect("512x512 mask")
}

fn write_json(path: &Path, v: &serde_json::Value) {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    std::fs::write(path, s).unwrap();
}

fn main() {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures/hermetic".into()),
    );
    for d in ["trays", "detector", "verifier", "segmenter", "gt_masks"] {
        std::fs::create_dir_all(root.join(d)).unwrap();
    }
    paint_tray().save(root.join("trays/tray_001.png")).unwrap();

    write_json(
        &root.join("detector/default.json"),
        &json!({"responses": [
            [cand(5, 0.91, 0.84), cand(0, 0.88, 0.80), cand(2, 0.47, 0.33), cand(3, 0.86, 0.79)],
            [
                cand(1, 0.64, 0.52),
                {"x_min": 110.0, "y_min": 45.5, "x_max": 230.0, "y_max": 237.5, "box_score": 0.41, "text_score": 0.35},
                cand(4, 0.55, 0.41),
                {"x_min": 20.0, "y_min": 540.0, "x_max": 60.0, "y_max": 580.0, "box_score": 0.25, "text_score": 0.31}
            ],
            []
        ]}),
    );
    write_json(
        &root.join("verifier/default.json"),
        &json!({"answers": ["After masking, the tray shows only white rectangles and empty foam. NO"]}),
    );

    let t5 = Taxonomy::new(TaxonomyName::Beetle5);
    let palette = Palette::default_for(&t5);
    for v in 0..2 {
        let m = beetle_mask(v);
        write_mask_png(
            &root.join(format!("segmenter/beetle_{v}.png")),
            &m,
            &palette,
        )
        .unwrap();
        write_mask_png(&root.join(format!("gt_masks/beetle_{v}.png")), &m, &palette).unwrap();
    }
    write_json(
        &root.join("segmenter/default.json"),
        &json!({"masks": ["beetle_0.png", "beetle_1.png", "beetle_0.png", "beetle_1.png", "beetle_0.png", "beetle_1.png"]}),
    );

    std::fs::write(
        root.join("metadata.csv"),
        "tray_id,catalog_number,species,collector\n\
         tray_001,NEON.BET.0001,Pterostichus melanarius,\"Smith, J.\"\n\
         tray_001,NEON.BET.0002,Carabus nemoralis,\"Smith, J.\"\n\
         tray_001,NEON.BET.0003,Harpalus affinis,Lee\n\
         tray_001,NEON.BET.0004,Amara aenea,Lee\n\
         tray_001,NEON.BET.0005,Calosoma scrutator,\"O'Neil, \"\"Pat\"\"\"\n\
         tray_001,NEON.BET.0006,Cicindela sexguttata,Lee\n\
         tray_002,NEON.BET.0007,Amara aenea,Lee\n",
    )
    .unwrap();
    std::fs::write(
        root.join("ground_truth.csv"),
        "tray_id,ground_truth_count\ntray_001,6\n",
    )
    .unwrap();
    std::fs::write(
        root.join("config.toml"),
        "# Hermetic pipeline run over the scripted fixtures in this directory.\n\
         input_dir = \"trays\"\n\
         output_dir = \"out\"\n\
         metadata = \"metadata.csv\"\n\
         ground_truth = \"ground_truth.csv\"\n\
         workers = 2\n\
         run_id = \"hermetic\"\n\
         \n\
         [backends]\n\
         detector = { kind = \"scripted\", path = \"detector\" }\n\
         verifier = { kind = \"scripted\", path = \"verifier\" }\n\
         segmenter = { kind = \"scripted\", path = \"segmenter\" }\n\
         \n\
         [segmentation]\n\
         taxonomy = \"beetle5\"\n",
    )
    .unwrap();
}
