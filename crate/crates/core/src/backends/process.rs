//! Out-of-process model adapter.
//!
//! The reference detector, verifier and segmenter run in a separate model
//! server (see `python/reference_backends.py`) that speaks one JSON object
//! per line over stdin/stdout. Images travel as PNG files in a scratch
//! directory owned by the adapter.
//!
//! Requests and replies:
//!
//! ```text
//! {"op":"detect","image":P,"prompt":S}            -> {"candidates":[{x_min,y_min,x_max,y_max,box_score,text_score}]}
//! {"op":"verify","image":P,"prompt":S}            -> {"answer":S}
//! {"op":"segment","image":P,"taxonomy":T,"output":Q} -> {"mask":Q}
//! any failure                                      -> {"error":S}
//! ```
//!
//! Detector boxes must already be corner format in absolute pixels; the
//! server converts from the model's normalized `(cx, cy, w, h)` output.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use image::RgbImage;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Candidate, DetectorBackend, SegmenterBackend, VerifierBackend};
use crate::error::{Error, Result};
use crate::maskfile::read_mask_png;
use crate::taxonomy::{LabelMask, Taxonomy};

/// Checkpoints the reference model server loads, by backend name.
pub const REFERENCE_CHECKPOINTS: [(&str, &str); 3] = [
    ("reference-detector", "IDEA-Research/grounding-dino-base"),
    ("reference-verifier", "llava-hf/llava-v1.6-mistral-7b-hf"),
    (
        "reference-segmenter",
        "facebook/mask2former-swin-large-ade-semantic (fine-tuned)",
    ),
];

pub struct ProcessBackend {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    scratch: tempfile::TempDir,
    calls: usize,
}

impl ProcessBackend {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (prog, args) = command
            .split_first()
            .ok_or_else(|| Error::config("reference backend command is empty"))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {prog}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(ProcessBackend {
            child,
            stdin,
            stdout,
            scratch,
            calls: 0,
        })
    }

    fn stage_image(&mut self, image: &RgbImage) -> Result<PathBuf> {
        let path = self.scratch.path().join(format!("in_{}.png", self.calls));
        self.calls += 1;
        image.save(&path)?;
        Ok(path)
    }

    fn request(&mut self, req: Value) -> Result<Value> {
        let line = serde_json::to_string(&req)?;
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Backend(format!("model server write failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Backend(format!("model server read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("model server closed its output".into()));
        }
        let v: Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("model server sent invalid JSON: {e}")))?;
        if let Some(err) = v.get("error") {
            return Err(Error::Backend(format!("model server: {err}")));
        }
        Ok(v)
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl DetectorBackend for ProcessBackend {
    fn detect(&mut self, image: &RgbImage, prompt: &str) -> Result<Vec<Candidate>> {
        let path = self.stage_image(image)?;
        let v = self.request(json!({"op": "detect", "image": path, "prompt": prompt}))?;
        #[derive(Deserialize)]
        struct Reply {
            candidates: Vec<Candidate>,
        }
        let reply: Reply = serde_json::from_value(v)
            .map_err(|e| Error::Backend(format!("bad detect reply: {e}")))?;
        Ok(reply.candidates)
    }
}

impl VerifierBackend for ProcessBackend {
    fn ask(&mut self, image: &RgbImage, question: &str) -> Result<String> {
        let path = self.stage_image(image)?;
        let v = self.request(json!({"op": "verify", "image": path, "prompt": question}))?;
        match v.get("answer").and_then(Value::as_str) {
            Some(a) if !a.trim().is_empty() => Ok(a.to_owned()),
            _ => Err(Error::Backend("verify reply has no answer".into())),
        }
    }
}

impl SegmenterBackend for ProcessBackend {
    fn segment(&mut self, image: &RgbImage, taxonomy: &Taxonomy) -> Result<LabelMask> {
        let path = self.stage_image(image)?;
        let out = self.scratch.path().join(format!("mask_{}.png", self.calls));
        let v = self.request(json!({
            "op": "segment",
            "image": path,
            "taxonomy": taxonomy.name().as_str(),
            "output": out,
        }))?;
        let mask_path = v
            .get("mask")
            .and_then(Value::as_str)
            .map(PathBuf::from)
            .unwrap_or(out);
        read_mask_png(&mask_path).map_err(|e| Error::Backend(e.to_string()))
    }
}
