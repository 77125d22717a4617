"""IR frame/sequence data model and the IRS container format.

An IRS file stores a sequence of temperature frames (degrees C) as raw
little-endian float32 values behind a 20-byte header::

    b"IRSQ" | u32 width | u32 height | u32 frame_count | u32 frame_interval_ms

followed by ``frame_count * height * width`` floats, frame-major and
row-major within each frame. Sequence metadata lives in a JSON sidecar
next to the container (``<name>.json``).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError, FormatError, GeometryError, TruncationError

VIEWS = ("front", "side", "rear")
ENGINE_STATES = ("idling", "stopped", "unknown")

MAGIC = b"IRSQ"
_HEADER = struct.Struct("<4sIIII")

TEMP_MIN = -40.0
TEMP_MAX = 700.0


def _check_temps(temps):
    if not np.all(np.isfinite(temps)):
        raise DataError("temperature grid contains non-finite values")
    if temps.size and (temps.min() < TEMP_MIN or temps.max() > TEMP_MAX):
        raise DataError(
            f"temperatures outside plausible range [{TEMP_MIN}, {TEMP_MAX}] C: "
            f"[{temps.min():.2f}, {temps.max():.2f}]"
        )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box with top-left corner (x, y).

    A pixel (col, row) belongs to the box when its center
    (col + 0.5, row + 0.5) lies in [x, x + w) x [y, y + h).
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise GeometryError(f"box must have positive size, got w={self.w}, h={self.h}")

    @classmethod
    def from_list(cls, values):
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)

    def as_list(self):
        return [float(self.x), float(self.y), float(self.w), float(self.h)]

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def area(self):
        return self.w * self.h

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def clip(self, width, height):
        """Intersection with the frame rectangle, or None when empty."""
        x1, y1 = max(self.x, 0.0), max(self.y, 0.0)
        x2, y2 = min(self.x2, float(width)), min(self.y2, float(height))
        if x2 <= x1 or y2 <= y1:
            return None
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def pixel_slices(self, width, height):
        """Row/column slices of the pixels whose centers fall inside the clipped box."""
        clipped = self.clip(width, height)
        if clipped is None:
            raise GeometryError(f"box {self.as_list()} does not intersect {width}x{height} frame")
        # centers c + 0.5 in [x, x2)  <=>  c in [ceil(x - 0.5), ceil(x2 - 0.5) - 1]
        c0 = math.ceil(clipped.x - 0.5)
        c1 = math.ceil(clipped.x2 - 0.5)
        r0 = math.ceil(clipped.y - 0.5)
        r1 = math.ceil(clipped.y2 - 0.5)
        c0, r0 = max(c0, 0), max(r0, 0)
        c1, r1 = min(c1, width), min(r1, height)
        if c1 <= c0 or r1 <= r0:
            raise GeometryError(f"box {self.as_list()} contains no pixel centers")
        return slice(r0, r1), slice(c0, c1)


@dataclass
class IRFrame:
    """One temperature image; ``temps`` has shape (height, width)."""

    temps: np.ndarray

    def __post_init__(self):
        self.temps = np.asarray(self.temps, dtype=np.float32)
        if self.temps.ndim != 2:
            raise DataError(f"frame must be 2-D, got shape {self.temps.shape}")
        _check_temps(self.temps)

    @property
    def height(self):
        return self.temps.shape[0]

    @property
    def width(self):
        return self.temps.shape[1]


@dataclass
class IRSequence:
    """Time-ordered frames at a fixed interval, stored as an (n, height, width) array."""

    temps: np.ndarray
    frame_interval: float = 5.0
    sequence_id: str = ""
    car_id: str = ""
    view: str = "front"
    engine_state: str = "unknown"

    def __post_init__(self):
        self.temps = np.asarray(self.temps, dtype=np.float32)
        if self.temps.ndim != 3 or self.temps.shape[0] < 1:
            raise DataError(f"sequence must be (n>=1, h, w), got shape {self.temps.shape}")
        if not self.frame_interval > 0:
            raise DataError("frame_interval must be positive")
        if self.view not in VIEWS:
            raise DomainError(f"unknown view {self.view!r}")
        if self.engine_state not in ENGINE_STATES:
            raise DomainError(f"unknown engine state {self.engine_state!r}")
        _check_temps(self.temps)

    def __len__(self):
        return self.temps.shape[0]

    @property
    def width(self):
        return self.temps.shape[2]

    @property
    def height(self):
        return self.temps.shape[1]

    @property
    def duration(self):
        """Seconds between the first and the last frame."""
        return (len(self) - 1) * self.frame_interval

    def frame(self, index):
        return IRFrame(self.temps[index])

    @property
    def frames(self):
        return [self.frame(i) for i in range(len(self))]

    def metadata(self, file_name=""):
        return {
            "sequence_id": self.sequence_id,
            "car_id": self.car_id,
            "view": self.view,
            "engine_state": self.engine_state,
            "file": file_name,
        }


@dataclass(frozen=True)
class Annotation:
    sequence_id: str
    box: BoundingBox
    view: str
    engine_state: str
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.view not in VIEWS:
            raise DomainError(f"unknown view {self.view!r}")
        if self.engine_state not in ENGINE_STATES:
            raise DomainError(f"unknown engine state {self.engine_state!r}")

    def to_record(self):
        return {
            "sequence_id": self.sequence_id,
            "box": self.box.as_list(),
            "view": self.view,
            "engine_state": self.engine_state,
            **self.extra,
        }


# --- container I/O ---------------------------------------------------------


def encode_array(temps, frame_interval):
    """IRS bytes for an (n, height, width) float array; no range validation."""
    temps = np.asarray(temps)
    n, h, w = temps.shape
    interval_ms = int(round(frame_interval * 1000))
    header = _HEADER.pack(MAGIC, w, h, n, interval_ms)
    return header + np.ascontiguousarray(temps, dtype="<f4").tobytes()


def decode_array(buf):
    """Parse IRS bytes into ``(temps, frame_interval_seconds)``."""
    if len(buf) < _HEADER.size:
        raise FormatError(f"header needs {_HEADER.size} bytes, got {len(buf)}")
    magic, w, h, n, interval_ms = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if w == 0 or h == 0 or n == 0 or interval_ms == 0:
        raise FormatError(f"degenerate header: width={w} height={h} frames={n} interval_ms={interval_ms}")
    expected = n * w * h * 4
    payload = len(buf) - _HEADER.size
    if payload != expected:
        raise TruncationError(
            f"header announces {n} frames of {w}x{h} ({expected} bytes), payload has {payload} bytes"
        )
    temps = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(n, h, w).astype(np.float32)
    return temps, interval_ms / 1000.0


def encode_sequence(seq):
    """Serialize the frames of ``seq`` to IRS bytes."""
    return encode_array(seq.temps, seq.frame_interval)


def decode_sequence(buf, **metadata):
    temps, interval = decode_array(buf)
    if not np.all(np.isfinite(temps)):
        raise DataError("container holds non-finite temperatures")
    return IRSequence(temps, frame_interval=interval, **metadata)


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def save_sequence(path, seq):
    """Write ``seq`` as an IRS container plus its JSON sidecar."""
    path = Path(path)
    path.write_bytes(encode_sequence(seq))
    sidecar_path(path).write_text(json.dumps(seq.metadata(path.name), sort_keys=True) + "\n")
    return path


def load_sequence(path):
    path = Path(path)
    buf = path.read_bytes()
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        raw = json.loads(side.read_text())
        meta = {k: raw[k] for k in ("sequence_id", "car_id", "view", "engine_state") if k in raw}
    return decode_sequence(buf, **meta)


def read_annotations(path):
    """Read a JSON-lines annotation file into ``{sequence_id: Annotation}``."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                known = {"sequence_id", "box", "view", "engine_state"}
                ann = Annotation(
                    sequence_id=str(rec["sequence_id"]),
                    box=BoundingBox.from_list(rec["box"]),
                    view=rec["view"],
                    engine_state=rec["engine_state"],
                    extra={k: v for k, v in rec.items() if k not in known},
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad annotation record: {exc}", line=lineno) from exc
            out[ann.sequence_id] = ann
    return out


def write_annotations(path, annotations):
    with open(path, "w") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann.to_record(), sort_keys=True) + "\n")


# --- pixel operations ------------------------------------------------------


def _as_grid(frame):
    return frame.temps if isinstance(frame, IRFrame) else np.asarray(frame)


def bilinear_resize(grid, out_h, out_w):
    """Corner-aligned bilinear resize over the last two axes.

    Output sample (i, j) sits at source coordinate
    (i * (h - 1) / (out_h - 1), j * (w - 1) / (out_w - 1)), so the four
    corners are reproduced exactly and equal sizes give an exact copy.
    """
    grid = np.asarray(grid)
    h, w = grid.shape[-2:]

    def axis(n_in, n_out):
        if n_out == 1:
            pos = np.array([(n_in - 1) / 2.0])
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.clip(np.floor(pos).astype(int), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis(h, out_h)
    x0, x1, wx = axis(w, out_w)
    wy = wy[:, None]
    top = grid[..., y0, :]
    bottom = grid[..., y1, :]
    rows = top * (1 - wy) + bottom * wy
    out = rows[..., x0] * (1 - wx) + rows[..., x1] * wx
    return out.astype(grid.dtype, copy=False)


def crop_resize(frame, box, out_w, out_h):
    """Crop the pixels inside ``box`` (clipped to the frame) and resize them bilinearly."""
    if out_w <= 0 or out_h <= 0:
        raise GeometryError("output size must be positive")
    grid = _as_grid(frame)
    rows, cols = box.pixel_slices(grid.shape[-1], grid.shape[-2])
    crop = grid[..., rows, cols]
    if crop.shape[-2:] == (out_h, out_w):
        out = crop.copy()
    else:
        out = bilinear_resize(crop, out_h, out_w)
    return IRFrame(out) if isinstance(frame, IRFrame) else out


def max_over_box(frame, box):
    """Maximum temperature over pixels whose centers lie inside ``box``."""
    grid = _as_grid(frame)
    rows, cols = box.pixel_slices(grid.shape[-1], grid.shape[-2])
    return float(grid[..., rows, cols].max())


def box_max_trace(seq, box):
    """Per-frame max over ``box`` for a whole sequence, as float64."""
    rows, cols = box.pixel_slices(seq.width, seq.height)
    return seq.temps[:, rows, cols].reshape(len(seq), -1).max(axis=1).astype(np.float64)
