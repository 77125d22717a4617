"""Sample construction: 36-frame temporal windows and spatio-temporal stacks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import GeometryError, UsageError
from ..evalharness import MAX_WINDOWS, WINDOW, window_starts
from ..irdata import BoundingBox, box_max_trace, crop_resize, decode_array, encode_array, max_over_box

LABELS = ("stopped", "idling")  # class index 0, 1


def label_index(engine_state):
    return LABELS.index(engine_state)


def window_subsequences(length, window=WINDOW, stride=1, cap=MAX_WINDOWS):
    """Start indices of the 36-frame subsequences of a sequence of ``length`` frames."""
    return window_starts(length, window, stride, cap)


@dataclass(frozen=True)
class TemporalWindow:
    values: np.ndarray
    label: str
    sequence_id: str
    start: int


def temporal_feature(seq, box, start, window=WINDOW, trace=None):
    """Max-over-box temperatures of ``window`` frames, shifted to start at zero."""
    if start < 0 or start + window > len(seq):
        raise UsageError(f"window [{start}, {start + window}) exceeds {len(seq)} frames")
    if trace is None:
        trace = np.array([max_over_box(seq.temps[start + k], box) for k in range(window)])
    else:
        trace = trace[start : start + window]
    values = trace - trace[0]
    return TemporalWindow(values, seq.engine_state, seq.sequence_id, start)


def stack_offsets(n, window=WINDOW):
    """Evenly spread frame offsets over the window, rounded half-up: N=7 gives 0,6,12,18,23,29,35."""
    if n < 1:
        raise UsageError("need at least one sampled frame")
    if n == 1:
        return [0]
    return [int(math.floor(i * (window - 1) / (n - 1) + 0.5)) for i in range(n)]


def side_orientation(frame, box):
    """'front-at-left' or 'front-at-right': the hotter end third of the box is the front."""
    grid = frame.temps if hasattr(frame, "temps") else np.asarray(frame)
    rows, cols = box.pixel_slices(grid.shape[1], grid.shape[0])
    crop = grid[rows, cols]
    w = crop.shape[1]
    if w < 2:
        raise GeometryError("side orientation needs a box at least 2 px wide")
    third = max(1, w // 3)
    left = float(crop[:, :third].mean())
    right = float(crop[:, w - third :].mean())
    return "front-at-right" if right > left else "front-at-left"


def square_crop_box(box, view, frame):
    """Square sub-box used for stacks.

    Front and rear views take the centered square of side min(w, h); the
    side view takes a square of side h (capped by w) at the car's front end,
    which is where the engine is.
    """
    grid = frame.temps if hasattr(frame, "temps") else np.asarray(frame)
    height, width = grid.shape
    if box.clip(width, height) is None:
        raise GeometryError(f"box {box.as_list()} lies outside the frame")
    if view == "side":
        side = min(box.h, box.w)
        front = side_orientation(grid, box)
        x = box.x if front == "front-at-left" else box.x2 - side
        y = box.y + (box.h - side) / 2
    else:
        side = min(box.w, box.h)
        cx, cy = box.center
        x, y = cx - side / 2, cy - side / 2
    sq = BoundingBox(x, y, side, side).clip(width, height)
    if sq is None:
        raise GeometryError("square crop box is empty after clipping")
    return sq


@dataclass(frozen=True)
class SpatioTemporalStack:
    stack: np.ndarray  # (size, size, N)
    label: str
    sequence_id: str
    start: int


def sample_stack(seq, box, start, n=7, size=100, view=None, crop_box=None):
    """Crop N uniformly spaced frames of a 36-frame window into a (size, size, N) stack."""
    if start < 0 or start + WINDOW > len(seq):
        raise UsageError(f"window [{start}, {start + WINDOW}) exceeds {len(seq)} frames")
    view = view or seq.view
    if crop_box is None:
        crop_box = square_crop_box(box, view, seq.temps[start])
    idx = [start + o for o in stack_offsets(n)]
    slices = crop_resize(seq.temps[idx], crop_box, size, size)
    return SpatioTemporalStack(np.ascontiguousarray(slices.transpose(1, 2, 0)), seq.engine_state, seq.sequence_id, start)


# --- sample sets --------------------------------------------------------------------


@dataclass
class WindowSet:
    """Labeled samples with their provenance, one row per window."""

    x: np.ndarray
    y: np.ndarray
    car_id: np.ndarray
    view: np.ndarray
    sequence_id: np.ndarray
    start: np.ndarray
    group: np.ndarray
    boxes: list = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    def subset(self, mask):
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return WindowSet(
            self.x[idx],
            self.y[idx],
            self.car_id[idx],
            self.view[idx],
            self.sequence_id[idx],
            self.start[idx],
            self.group[idx],
            [self.boxes[i] for i in idx],
        )

    def cars(self, cars):
        return self.subset(np.isin(self.car_id, list(cars)))

    def views(self, views):
        return self.subset(np.isin(self.view, list(views)))

    @staticmethod
    def concat(sets):
        sets = [s for s in sets if len(s)]
        if not sets:
            return empty_windowset()
        return WindowSet(
            np.concatenate([s.x for s in sets]),
            np.concatenate([s.y for s in sets]),
            np.concatenate([s.car_id for s in sets]),
            np.concatenate([s.view for s in sets]),
            np.concatenate([s.sequence_id for s in sets]),
            np.concatenate([s.start for s in sets]),
            np.concatenate([s.group for s in sets]),
            [b for s in sets for b in s.boxes],
        )

    def save(self, path, meta=None):
        """Cache as an IRS container (one frame per 2-D slice) plus a JSON manifest."""
        path = Path(path)
        x = self.x.astype(np.float32)
        if x.ndim == 2:  # temporal windows: one 1 x 36 frame each
            frames, interval = x[:, None, :], 5.0
        else:  # stacks (n, H, W, N) -> n*N frames
            frames, interval = x.transpose(0, 3, 1, 2).reshape(-1, x.shape[1], x.shape[2]), 30.0
        path.write_bytes(encode_array(frames, interval))
        manifest = {
            "sample_shape": list(x.shape[1:]),
            "windows": [
                {
                    "sequence_id": str(self.sequence_id[i]),
                    "start": int(self.start[i]),
                    "label": LABELS[int(self.y[i])],
                    "car_id": str(self.car_id[i]),
                    "view": str(self.view[i]),
                    "group": int(self.group[i]),
                    "box": self.boxes[i].as_list(),
                }
                for i in range(len(self))
            ],
            **(meta or {}),
        }
        path.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        frames, _ = decode_array(path.read_bytes())
        manifest = json.loads(path.with_suffix(".json").read_text())
        shape = tuple(manifest["sample_shape"])
        rows = manifest["windows"]
        if len(shape) == 1:
            x = frames[:, 0, :]
        else:
            h, w, n = shape
            x = frames.reshape(len(rows), n, h, w).transpose(0, 2, 3, 1)
        return cls(
            np.ascontiguousarray(x),
            np.array([label_index(r["label"]) for r in rows], dtype=np.int64),
            np.array([r["car_id"] for r in rows]),
            np.array([r["view"] for r in rows]),
            np.array([r["sequence_id"] for r in rows]),
            np.array([r["start"] for r in rows], dtype=np.int64),
            np.array([r["group"] for r in rows], dtype=np.int64),
            [BoundingBox.from_list(r["box"]) for r in rows],
        )


def empty_windowset():
    return WindowSet(
        np.zeros((0, WINDOW), np.float32),
        np.zeros(0, np.int64),
        np.zeros(0, str),
        np.zeros(0, str),
        np.zeros(0, str),
        np.zeros(0, np.int64),
        np.zeros(0, np.int64),
        [],
    )


def _rows(seq, box, starts, group):
    n = len(starts)
    label = label_index(seq.engine_state) if seq.engine_state in LABELS else -1
    return (
        np.full(n, label, dtype=np.int64),
        np.full(n, seq.car_id),
        np.full(n, seq.view),
        np.full(n, seq.sequence_id),
        np.asarray(starts, dtype=np.int64),
        np.full(n, group, dtype=np.int64),
        [box] * n,
    )


def temporal_windows(seq, box, starts=None, group=0):
    """Temporal feature rows for every window start (default: all capped windows)."""
    starts = window_subsequences(len(seq)) if starts is None else list(starts)
    trace = box_max_trace(seq, box)
    x = np.stack([temporal_feature(seq, box, s, trace=trace).values for s in starts]).astype(np.float32)
    return WindowSet(x, *_rows(seq, box, starts, group))


def stack_windows(seq, box, starts=None, n=7, size=100, group=0):
    """Spatio-temporal stack rows for every window start."""
    starts = window_subsequences(len(seq)) if starts is None else list(starts)
    x = np.stack([sample_stack(seq, box, s, n=n, size=size).stack for s in starts]).astype(np.float32)
    return WindowSet(x, *_rows(seq, box, starts, group))
