//! Stage 1: detect, threshold, white-mask, redetect until a round comes back
//! empty, then ask the verifier whether anything is left.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::backends::{Candidate, DetectorBackend, VerifierBackend};
use crate::error::{Error, Result};
use crate::geometry::{box_iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BBox,
    pub box_score: f64,
    pub text_score: f64,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub text_prompt: String,
    pub box_threshold: f64,
    pub text_threshold: f64,
    pub max_iterations: u32,
    pub dedup_iou_threshold: f64,
    pub mask_fill: [u8; 3],
    pub verify_prompt: String,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            text_prompt: "a beetle.".into(),
            box_threshold: 0.3,
            text_threshold: 0.2,
            max_iterations: 20,
            dedup_iou_threshold: 0.5,
            mask_fill: [255, 255, 255],
            verify_prompt: "Do you see beetles in this image?".into(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("box_threshold", self.box_threshold),
            ("text_threshold", self.text_threshold),
            ("dedup_iou_threshold", self.dedup_iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!(
                    "detection.{name} = {v} is outside [0,1]"
                )));
            }
        }
        if self.max_iterations < 1 {
            return Err(Error::config("detection.max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    VerifiedClear,
    FlaggedResidual,
    FlaggedUnparseable,
    FlaggedMaxIterations,
}

impl Verdict {
    pub fn is_flagged(&self) -> bool {
        !matches!(self, Verdict::VerifiedClear)
    }

    /// Human-readable reason for the review queue; `None` when clear.
    pub fn reason(&self, raw_answer: &str) -> Option<String> {
        match self {
            Verdict::VerifiedClear => None,
            Verdict::FlaggedResidual => Some(format!(
                "verifier still sees beetles after masking, check manually (answer: {raw_answer:?})"
            )),
            Verdict::FlaggedUnparseable => Some(format!(
                "verifier answer did not end in YES or NO (answer: {raw_answer:?})"
            )),
            Verdict::FlaggedMaxIterations => {
                Some("detection loop hit max_iterations without an empty round".into())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub detections: Vec<Detection>,
    pub iterations_used: u32,
    pub verdict: Verdict,
    pub raw_verifier_answer: String,
}

/// Returns a copy of `image` with every box (rounded outward) filled.
pub fn apply_white_masks(image: &RgbImage, boxes: &[BBox], fill: [u8; 3]) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    let mut out = image.clone();
    for b in boxes {
        b.validate()?;
        if !b.fits_within(w, h) {
            return Err(Error::input(format!(
                "box {b:?} exceeds image bounds {w}x{h}"
            )));
        }
        let r = b.pixel_rect(0, w, h);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                out.put_pixel(x, y, Rgb(fill));
            }
        }
    }
    Ok(out)
}

/// Keeps candidates meeting both thresholds (inclusive), in order.
pub fn filter_candidates(
    candidates: &[Candidate],
    config: &DetectionConfig,
    iteration: u32,
) -> Vec<Detection> {
    candidates
        .iter()
        .filter(|c| c.box_score >= config.box_threshold && c.text_score >= config.text_threshold)
        .map(|c| Detection {
            bbox: c.bbox,
            box_score: c.box_score,
            text_score: c.text_score,
            iteration,
        })
        .collect()
}

/// Drops new detections overlapping any existing one by more than `iou_threshold`.
pub fn dedup_against(
    existing: &[Detection],
    new: &[Detection],
    iou_threshold: f64,
) -> Vec<Detection> {
    new.iter()
        .filter(|n| {
            existing
                .iter()
                .all(|e| box_iou(&e.bbox, &n.bbox) <= iou_threshold)
        })
        .copied()
        .collect()
}

/// Reads the final alphabetic token of a verifier answer.
pub fn parse_verdict(answer: &str) -> Option<Answer> {
    let last = answer
        .split(|c: char| !c.is_alphabetic())
        .rfind(|t| !t.is_empty())?;
    match last.to_uppercase().as_str() {
        "YES" => Some(Answer::Yes),
        "NO" => Some(Answer::No),
        _ => None,
    }
}

/// Runs the mask-and-redetect loop on a copy of `image`.
///
/// Returns the outcome together with the final masked image that was shown
/// to the verifier.
pub fn run_iterative_detection_with_image(
    image: &RgbImage,
    detector: &mut dyn DetectorBackend,
    verifier: &mut dyn VerifierBackend,
    config: &DetectionConfig,
) -> Result<(DetectionOutcome, RgbImage)> {
    config.validate()?;
    let (w, h) = image.dimensions();
    let mut current = image.clone();
    let mut found: Vec<Detection> = Vec::new();
    let mut iterations_used = 0;
    let mut hit_limit = true;

    for iteration in 0..config.max_iterations {
        iterations_used = iteration + 1;
        let raw = detector.detect(&current, &config.text_prompt)?;
        let clamped: Vec<Candidate> = raw
            .iter()
            .filter_map(|c| c.bbox.clamp_to(w, h).map(|bbox| Candidate { bbox, ..*c }))
            .collect();
        let kept = filter_candidates(&clamped, config, iteration);
        let fresh = dedup_against(&found, &kept, config.dedup_iou_threshold);
        if fresh.is_empty() {
            hit_limit = false;
            break;
        }
        let boxes: Vec<BBox> = fresh.iter().map(|d| d.bbox).collect();
        current = apply_white_masks(&current, &boxes, config.mask_fill)?;
        found.extend(fresh);
    }

    let raw_answer = verifier.ask(&current, &config.verify_prompt)?;
    let verdict = if hit_limit {
        Verdict::FlaggedMaxIterations
    } else {
        match parse_verdict(&raw_answer) {
            Some(Answer::No) => Verdict::VerifiedClear,
            Some(Answer::Yes) => Verdict::FlaggedResidual,
            None => Verdict::FlaggedUnparseable,
        }
    };
    let outcome = DetectionOutcome {
        detections: found,
        iterations_used,
        verdict,
        raw_verifier_answer: raw_answer,
    };
    Ok((outcome, current))
}

pub fn run_iterative_detection(
    image: &RgbImage,
    detector: &mut dyn DetectorBackend,
    verifier: &mut dyn VerifierBackend,
    config: &DetectionConfig,
) -> Result<DetectionOutcome> {
    run_iterative_detection_with_image(image, detector, verifier, config).map(|(o, _)| o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{DetectorScript, ScriptedDetector, ScriptedVerifier, VerifierScript};

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn cand(b: BBox, s: f64, t: f64) -> Candidate {
        Candidate::new(b, s, t)
    }

    fn det(b: BBox) -> Detection {
        Detection {
            bbox: b,
            box_score: 0.9,
            text_score: 0.9,
            iteration: 0,
        }
    }

    fn dark(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([20, 30, 40]))
    }

    fn verifier(a: &str) -> ScriptedVerifier {
        ScriptedVerifier::new(VerifierScript {
            answers: vec![a.into()],
        })
        .unwrap()
    }

    #[test]
    fn masks_only_the_box() {
        let img = dark(10, 10);
        assert_eq!(apply_white_masks(&img, &[], [255; 3]).unwrap(), img);
        let b = bb(2.0, 3.0, 5.0, 6.0);
        let out = apply_white_masks(&img, &[b], [255; 3]).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            let inside = (2..5).contains(&x) && (3..6).contains(&y);
            assert_eq!(p.0, if inside { [255; 3] } else { [20, 30, 40] });
        }
        assert_eq!(apply_white_masks(&img, &[b, b], [255; 3]).unwrap(), out);
        assert_eq!(img, dark(10, 10));
    }

    #[test]
    fn mask_rejects_out_of_bounds() {
        assert!(apply_white_masks(&dark(10, 10), &[bb(5.0, 5.0, 11.0, 9.0)], [255; 3]).is_err());
    }

    #[test]
    fn threshold_boundaries() {
        let c = DetectionConfig::default();
        let b = bb(0.0, 0.0, 1.0, 1.0);
        assert!(filter_candidates(&[cand(b, 0.25, 0.9)], &c, 0).is_empty());
        assert!(filter_candidates(&[cand(b, 0.9, 0.15)], &c, 0).is_empty());
        assert_eq!(filter_candidates(&[cand(b, 0.3, 0.2)], &c, 0).len(), 1);
    }

    #[test]
    fn zero_thresholds_keep_everything() {
        let c = DetectionConfig {
            box_threshold: 0.0,
            text_threshold: 0.0,
            ..Default::default()
        };
        let cands: Vec<_> = (0..5)
            .map(|i| cand(bb(i as f64, 0.0, i as f64 + 1.0, 1.0), 0.0, i as f64 / 10.0))
            .collect();
        let kept = filter_candidates(&cands, &c, 2);
        assert_eq!(kept.len(), 5);
        assert!(kept
            .iter()
            .zip(&cands)
            .all(|(k, c)| k.bbox == c.bbox && k.iteration == 2));
    }

    #[test]
    fn dedup_examples() {
        let existing = [det(bb(5.0, 0.0, 15.0, 10.0))];
        let disjoint = det(bb(50.0, 0.0, 60.0, 10.0));
        let same = det(bb(5.0, 0.0, 15.0, 10.0));
        let third = det(bb(0.0, 0.0, 10.0, 10.0));
        assert_eq!(dedup_against(&existing, &[disjoint], 0.5), vec![disjoint]);
        assert!(dedup_against(&existing, &[same], 0.5).is_empty());
        assert_eq!(dedup_against(&existing, &[third], 0.5), vec![third]);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("NO"), Some(Answer::No));
        assert_eq!(
            parse_verdict("I inspected the tray carefully. no."),
            Some(Answer::No)
        );
        assert_eq!(
            parse_verdict("There is still one near the corner. YES"),
            Some(Answer::Yes)
        );
        assert_eq!(parse_verdict("Possibly."), None);
        assert_eq!(parse_verdict("..."), None);
        assert_eq!(parse_verdict(""), None);
    }

    #[test]
    fn empty_first_round() {
        let mut d = ScriptedDetector::new(DetectorScript {
            responses: vec![vec![]],
        })
        .unwrap();
        let mut v = verifier("NO");
        let out =
            run_iterative_detection(&dark(20, 20), &mut d, &mut v, &Default::default()).unwrap();
        assert!(out.detections.is_empty());
        assert_eq!((d.calls(), v.calls(), out.iterations_used), (1, 1, 1));
        assert_eq!(out.verdict, Verdict::VerifiedClear);
    }

    fn three_two_script() -> DetectorScript {
        let row = |y: f64, n: usize| -> Vec<Candidate> {
            (0..n)
                .map(|i| {
                    cand(
                        bb(i as f64 * 20.0, y, i as f64 * 20.0 + 10.0, y + 10.0),
                        0.8,
                        0.6,
                    )
                })
                .collect()
        };
        DetectorScript {
            responses: vec![row(0.0, 3), row(30.0, 2), vec![]],
        }
    }

    #[test]
    fn union_over_iterations() {
        let mut d = ScriptedDetector::new(three_two_script()).unwrap();
        let mut v = verifier("NO");
        let img = dark(100, 100);
        let (out, masked) =
            run_iterative_detection_with_image(&img, &mut d, &mut v, &Default::default()).unwrap();
        assert_eq!(out.detections.len(), 5);
        assert_eq!(out.iterations_used, 3);
        assert_eq!(out.verdict, Verdict::VerifiedClear);
        let iters: Vec<u32> = out.detections.iter().map(|d| d.iteration).collect();
        assert_eq!(iters, [0, 0, 0, 1, 1]);
        assert_eq!(masked.get_pixel(5, 35).0, [255; 3]);
        assert_eq!(masked.get_pixel(95, 95).0, [20, 30, 40]);
        assert_eq!(img, dark(100, 100));
    }

    #[test]
    fn residual_and_unparseable_verdicts() {
        for (answer, expected) in [
            (
                "There is still one near the corner. YES",
                Verdict::FlaggedResidual,
            ),
            ("Possibly.", Verdict::FlaggedUnparseable),
        ] {
            let mut d = ScriptedDetector::new(three_two_script()).unwrap();
            let mut v = verifier(answer);
            let out = run_iterative_detection(&dark(100, 100), &mut d, &mut v, &Default::default())
                .unwrap();
            assert_eq!(out.verdict, expected);
            assert_eq!(out.detections.len(), 5);
            assert_eq!(out.raw_verifier_answer, answer);
            assert!(out.verdict.reason(answer).is_some());
        }
    }

    #[test]
    fn max_iterations_flags_but_keeps_detections() {
        let cfg = DetectionConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let mut d = ScriptedDetector::new(three_two_script()).unwrap();
        let mut v = verifier("NO");
        let out = run_iterative_detection(&dark(100, 100), &mut d, &mut v, &cfg).unwrap();
        assert_eq!(out.verdict, Verdict::FlaggedMaxIterations);
        assert_eq!(out.detections.len(), 5);
        assert_eq!(d.calls(), 2);
    }

    #[test]
    fn redetected_sliver_is_not_double_counted() {
        let b = bb(10.0, 10.0, 30.0, 30.0);
        let script = DetectorScript {
            responses: vec![
                vec![cand(b, 0.9, 0.9)],
                vec![cand(bb(11.0, 10.0, 30.0, 30.0), 0.5, 0.5)],
            ],
        };
        let mut d = ScriptedDetector::new(script).unwrap();
        let out = run_iterative_detection(
            &dark(50, 50),
            &mut d,
            &mut verifier("no"),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.iterations_used, 2);
    }

    #[test]
    fn out_of_bounds_candidates_are_clamped() {
        let script = DetectorScript {
            responses: vec![vec![cand(bb(40.0, 40.0, 60.0, 60.0), 0.9, 0.9)]],
        };
        let mut d = ScriptedDetector::new(script).unwrap();
        let out = run_iterative_detection(
            &dark(50, 50),
            &mut d,
            &mut verifier("NO"),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(out.detections[0].bbox, bb(40.0, 40.0, 50.0, 50.0));
    }
}
