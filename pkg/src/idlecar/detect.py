"""Hot-region car detector and detection I/O.

Cars parked after a drive are warmer than the ambient scene, so a car is
localized as a connected region of pixels hotter than ``ambient + delta``.
Boxes from any other detector can be ingested through the JSON-lines
format ``{"frame": int, "box": [x, y, w, h], "score": float}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FormatError, ValidationError
from .evalharness import pr_curve
from .irdata import BoundingBox, IRFrame

SCORE_SCALE = 30.0  # mean excess (deg C) that maps to score 1.0


@dataclass(frozen=True)
class Detection:
    frame_index: int
    box: BoundingBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"detection score {self.score} outside [0, 1]")

    def to_record(self):
        return {"frame": int(self.frame_index), "box": self.box.as_list(), "score": float(self.score)}


@dataclass(frozen=True)
class DetectorConfig:
    delta: float = 5.0
    ambient_mode: str = "frame-median"  # or "fixed"
    ambient: float = 30.0
    min_area: int = 200
    min_side: float = 12.0
    max_side: float = 320.0
    min_aspect: float = 0.25  # w / h
    max_aspect: float = 4.0
    closing_radius: int = 2

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.min_area < 1:
            raise ValueError("min_area must be at least 1")
        if not (0 < self.min_side <= self.max_side and 0 < self.min_aspect <= self.max_aspect):
            raise ValueError("size priors are degenerate")
        if self.ambient_mode not in ("fixed", "frame-median"):
            raise ValueError(f"unknown ambient estimator {self.ambient_mode!r}")


# recorded for reference; the hot-region detector does not use anchors
UPSTREAM_DETECTOR_METADATA = {
    "architecture": "faster-rcnn/vgg",
    "min_image_size": 480,
    "anchor_scales": [200, 350, 500],
    "anchor_ratios": [[1, 1], [1, 1.5], [2, 1]],
    "augmentation": ["horizontal_flip"],
}


def _disk(radius):
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return xx**2 + yy**2 <= radius**2


def estimate_ambient(grid, cfg):
    return float(np.median(grid)) if cfg.ambient_mode == "frame-median" else cfg.ambient


def detect_cars(frame, cfg=None, frame_index=0):
    """Detections in one frame, sorted by descending score."""
    cfg = cfg or DetectorConfig()
    grid = frame.temps if isinstance(frame, IRFrame) else np.asarray(frame)
    h, w = grid.shape
    ambient = estimate_ambient(grid, cfg)
    mask = grid > ambient + cfg.delta
    if not mask.any():
        return []
    r = cfg.closing_radius
    if r > 0:
        padded = np.pad(mask, r)
        mask = ndimage.binary_closing(padded, structure=_disk(r))[r:-r, r:-r]
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    areas = ndimage.sum_labels(np.ones_like(grid), labels, idx)
    excess = ndimage.mean(grid - ambient, labels, idx)
    out = []
    for k, sl in enumerate(ndimage.find_objects(labels)):
        rows, cols = sl
        bw, bh = cols.stop - cols.start, rows.stop - rows.start
        if areas[k] < cfg.min_area:
            continue
        if min(bw, bh) < cfg.min_side or max(bw, bh) > cfg.max_side:
            continue
        if not cfg.min_aspect <= bw / bh <= cfg.max_aspect:
            continue
        score = float(np.clip(excess[k] / SCORE_SCALE, 0.0, 1.0))
        box = BoundingBox(float(cols.start), float(rows.start), float(bw), float(bh))
        out.append(Detection(frame_index, box, score))
    out.sort(key=lambda d: -d.score)
    return out


def detect_sequence(seq, cfg=None):
    """Run the detector on every frame; returns ``{frame_index: [Detection, ...]}``."""
    cfg = cfg or DetectorConfig()
    return {i: detect_cars(seq.temps[i], cfg, frame_index=i) for i in range(len(seq))}


def iou(a, b):
    """Intersection over union of two boxes using real-valued areas."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area + b.area - inter))


def load_external_detections(path):
    """Parse a detections JSON-lines file into ``{frame: [Detection, ...]}`` ordered by frame."""
    groups = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                frame = rec["frame"]
                if not isinstance(frame, int) or isinstance(frame, bool):
                    raise TypeError("frame must be an integer")
                box = BoundingBox.from_list(rec["box"])
                score = float(rec["score"])
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"malformed detection record: {exc}", line=lineno) from exc
            if not 0.0 <= score <= 1.0:
                raise ValidationError(f"line {lineno}: score {score} outside [0, 1]")
            groups.setdefault(frame, []).append(Detection(frame, box, score))
    return dict(sorted(groups.items()))


def write_detections(path, per_frame):
    with open(path, "w") as fh:
        for frame in sorted(per_frame):
            for det in per_frame[frame]:
                fh.write(json.dumps(det.to_record(), sort_keys=True) + "\n")


def match_detections(detections, gt_boxes, iou_threshold=0.5):
    """Greedy TP/FP flags for one frame's detections against its ground-truth boxes."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    matched = [False] * len(gt_boxes)
    flags = [False] * len(detections)
    for i in order:
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gt_boxes):
            if matched[g]:
                continue
            v = iou(detections[i].box, gt)
            if v >= iou_threshold and v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            matched[best] = True
            flags[i] = True
    return flags


def detection_ap(detections, ground_truth, iou_threshold=0.5):
    """Average precision of ``{frame: [Detection]}`` against ``{frame: [BoundingBox]}``."""
    scores, labels = [], []
    n_gt = sum(len(v) for v in ground_truth.values())
    for frame in sorted(set(detections) | set(ground_truth)):
        dets = detections.get(frame, [])
        flags = match_detections(dets, ground_truth.get(frame, []), iou_threshold)
        scores.extend(d.score for d in dets)
        labels.extend(flags)
    return pr_curve(scores, labels, n_positives=n_gt).ap
