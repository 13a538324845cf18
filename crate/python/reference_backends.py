"""Reference model server for trayscan's `reference-*` backends.

Reads one JSON request per line on stdin and writes one JSON reply per line
on stdout. Models load lazily on first use, so a detector-only process never
pulls the verifier weights.

    {"op": "detect", "image": P, "prompt": S}
    {"op": "verify", "image": P, "prompt": S}
    {"op": "segment", "image": P, "taxonomy": T, "output": Q}

Requires torch, transformers and pillow. The segmentation checkpoint is the
fine-tuned Mask2Former; point TRAYSCAN_SEGMENTER_CHECKPOINT at it.
"""

import json
import os
import sys

import torch
from PIL import Image

DETECTOR = os.environ.get("TRAYSCAN_DETECTOR_CHECKPOINT", "IDEA-Research/grounding-dino-base")
VERIFIER = os.environ.get("TRAYSCAN_VERIFIER_CHECKPOINT", "llava-hf/llava-v1.6-mistral-7b-hf")
SEGMENTER = os.environ.get("TRAYSCAN_SEGMENTER_CHECKPOINT")
# Candidates below this box score are not worth shipping over the pipe;
# the real thresholds are applied on the Rust side.
MIN_SHIPPED_SCORE = 0.05

DEVICE = "cuda" if torch.cuda.is_available() else "cpu"
_models = {}


def _load(kind):
    if kind in _models:
        return _models[kind]
    if kind == "detect":
        from transformers import AutoModelForZeroShotObjectDetection, AutoProcessor

        proc = AutoProcessor.from_pretrained(DETECTOR)
        model = AutoModelForZeroShotObjectDetection.from_pretrained(DETECTOR).to(DEVICE).eval()
    elif kind == "verify":
        from transformers import LlavaNextForConditionalGeneration, LlavaNextProcessor

        proc = LlavaNextProcessor.from_pretrained(VERIFIER)
        model = LlavaNextForConditionalGeneration.from_pretrained(
            VERIFIER, torch_dtype=torch.float16 if DEVICE == "cuda" else torch.float32
        ).to(DEVICE).eval()
    else:
        if not SEGMENTER:
            raise RuntimeError("TRAYSCAN_SEGMENTER_CHECKPOINT is not set")
        from transformers import AutoImageProcessor, Mask2FormerForUniversalSegmentation

        proc = AutoImageProcessor.from_pretrained(SEGMENTER)
        model = Mask2FormerForUniversalSegmentation.from_pretrained(SEGMENTER).to(DEVICE).eval()
    _models[kind] = (proc, model)
    return proc, model


@torch.no_grad()
def detect(req):
    proc, model = _load("detect")
    image = Image.open(req["image"]).convert("RGB")
    w, h = image.size
    inputs = proc(images=image, text=req["prompt"], return_tensors="pt").to(DEVICE)
    out = model(**inputs)
    probs = out.logits.sigmoid()[0]  # (queries, text tokens)
    ids = inputs["input_ids"][0].tolist()
    special = set(proc.tokenizer.all_special_ids) | set(proc.tokenizer.convert_tokens_to_ids(["."]))
    text_cols = [i for i, t in enumerate(ids) if t not in special and i < probs.shape[1]]
    box_scores = probs.max(dim=-1).values
    text_scores = probs[:, text_cols].max(dim=-1).values if text_cols else box_scores
    candidates = []
    for (cx, cy, bw, bh), bs, ts in zip(out.pred_boxes[0].tolist(), box_scores.tolist(), text_scores.tolist()):
        if bs < MIN_SHIPPED_SCORE:
            continue
        x0, y0 = max(0.0, (cx - bw / 2) * w), max(0.0, (cy - bh / 2) * h)
        x1, y1 = min(float(w), (cx + bw / 2) * w), min(float(h), (cy + bh / 2) * h)
        if x1 <= x0 or y1 <= y0:
            continue
        candidates.append(
            {"x_min": x0, "y_min": y0, "x_max": x1, "y_max": y1, "box_score": bs, "text_score": ts}
        )
    return {"candidates": candidates}


@torch.no_grad()
def verify(req):
    proc, model = _load("verify")
    image = Image.open(req["image"]).convert("RGB")
    conversation = [
        {"role": "user", "content": [{"type": "image"}, {"type": "text", "text": req["prompt"]}]}
    ]
    prompt = proc.apply_chat_template(conversation, add_generation_prompt=True)
    inputs = proc(images=image, text=prompt, return_tensors="pt").to(DEVICE)
    generated = model.generate(**inputs, max_new_tokens=64, do_sample=False)
    answer = proc.decode(generated[0][inputs["input_ids"].shape[1]:], skip_special_tokens=True)
    return {"answer": answer.strip()}


@torch.no_grad()
def segment(req):
    proc, model = _load("segment")
    image = Image.open(req["image"]).convert("RGB")
    inputs = proc(images=image, return_tensors="pt").to(DEVICE)
    out = model(**inputs)
    labels = proc.post_process_semantic_segmentation(out, target_sizes=[image.size[::-1]])[0]
    Image.fromarray(labels.to(torch.uint8).cpu().numpy(), mode="L").save(req["output"])
    return {"mask": req["output"]}


HANDLERS = {"detect": detect, "verify": verify, "segment": segment}


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            reply = HANDLERS[req["op"]](req)
        except Exception as exc:  # reported to the caller, which flags the tray
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
