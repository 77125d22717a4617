"""IoU tracking of per-frame detections and stationary-car extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .detect import iou
from .irdata import BoundingBox

ASSOC_IOU = 0.6
MIN_STATIONARY_FRAMES = 36  # 3 minutes at 5 s per frame
MIN_MEAN_SCORE = 0.9


@dataclass
class Track:
    track_id: int
    detections: list = field(default_factory=list)  # [(frame_index, Detection)]

    @property
    def start_frame(self):
        return self.detections[0][0]

    @property
    def end_frame(self):
        return self.detections[-1][0]

    def __len__(self):
        return self.end_frame - self.start_frame + 1

    @property
    def last_box(self):
        return self.detections[-1][1].box

    @property
    def mean_score(self):
        return float(np.mean([d.score for _, d in self.detections]))

    def average_box(self):
        coords = np.array([d.box.as_list() for _, d in self.detections])
        return BoundingBox.from_list(coords.mean(axis=0))


@dataclass
class StationaryCar:
    track: Track
    avg_box: BoundingBox
    mean_score: float

    @property
    def start_frame(self):
        return self.track.start_frame

    @property
    def end_frame(self):
        return self.track.end_frame

    def to_record(self):
        return {
            "track": self.track.track_id,
            "start": self.start_frame,
            "end": self.end_frame,
            "avg_box": self.avg_box.as_list(),
            "mean_score": self.mean_score,
        }


def build_tracks(per_frame, max_gap=0, iou_threshold=ASSOC_IOU):
    """Greedy frame-to-frame association of detections into tracks.

    ``per_frame`` maps frame index to that frame's detections. A track and a
    detection are linked when their IoU is strictly above ``iou_threshold``;
    candidate pairs are taken in order of IoU, then detection score, then
    track id. A track missing for more than ``max_gap`` consecutive frames
    is closed.
    """
    if not per_frame:
        return []
    frames = range(min(per_frame), max(per_frame) + 1)
    open_tracks, closed = [], []
    next_id = 0
    for f in frames:
        dets = per_frame.get(f, [])
        pairs = []
        for t in open_tracks:
            for j, d in enumerate(dets):
                v = iou(t.last_box, d.box)
                if v > iou_threshold:
                    pairs.append((-v, -d.score, t.track_id, j, t))
        pairs.sort(key=lambda p: p[:4])
        used_tracks, used_dets = set(), set()
        for _, _, tid, j, t in pairs:
            if tid in used_tracks or j in used_dets:
                continue
            t.detections.append((f, dets[j]))
            used_tracks.add(tid)
            used_dets.add(j)
        still_open = []
        for t in open_tracks:
            if f - t.end_frame > max_gap:
                closed.append(t)
            else:
                still_open.append(t)
        open_tracks = still_open
        for j, d in enumerate(dets):
            if j not in used_dets:
                open_tracks.append(Track(next_id, [(f, d)]))
                next_id += 1
    closed.extend(open_tracks)
    closed.sort(key=lambda t: t.track_id)
    return closed


def filter_stationary(tracks, min_len=MIN_STATIONARY_FRAMES, min_score=MIN_MEAN_SCORE):
    """Keep long, confidently detected tracks and summarize each by its mean box."""
    out = []
    for t in tracks:
        if len(t) >= min_len and t.mean_score >= min_score:
            out.append(StationaryCar(t, t.average_box(), t.mean_score))
    return out


def write_tracks(path, cars):
    with open(path, "w") as fh:
        for car in cars:
            fh.write(json.dumps(car.to_record(), sort_keys=True) + "\n")


def read_tracks(path):
    """Read a track export back as plain records with a ``BoundingBox`` under ``avg_box``."""
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                rec["avg_box"] = BoundingBox.from_list(rec["avg_box"])
                out.append(rec)
    return out
