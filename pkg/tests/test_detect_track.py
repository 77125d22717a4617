import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idlecar import thermosim as ts
from idlecar.detect import (
    Detection,
    DetectorConfig,
    detect_cars,
    detect_sequence,
    detection_ap,
    iou,
    load_external_detections,
    write_detections,
)
from idlecar.errors import FormatError, ValidationError
from idlecar.irdata import BoundingBox
from idlecar.track import Track, build_tracks, filter_stationary, read_tracks, write_tracks


def _frame(*rects, bg=30.0, shape=(240, 320)):
    g = np.full(shape, bg)
    for x, y, w, h, t in rects:
        g[y : y + h, x : x + w] = t
    return g


# --- detector -----------------------------------------------------------------------


def test_constant_frame_has_no_detections():
    assert detect_cars(_frame()) == []


def test_single_hot_rectangle():
    dets = detect_cars(_frame((100, 80, 60, 40, 90.0)))
    assert len(dets) == 1
    d = dets[0]
    assert d.box == BoundingBox(100, 80, 60, 40)
    assert d.score == 1.0


def test_two_blobs_sorted_by_score():
    dets = detect_cars(_frame((10, 10, 40, 30, 50.0), (200, 150, 50, 40, 80.0)))
    assert len(dets) == 2
    assert dets[0].box == BoundingBox(200, 150, 50, 40)
    assert dets[0].score >= dets[1].score
    assert dets[1].score == pytest.approx(20 / 30)


def test_priors_drop_small_and_thin_blobs():
    dets = detect_cars(_frame((10, 10, 5, 5, 90.0), (100, 100, 200, 8, 90.0)))
    assert dets == []


def test_closing_bridges_gaps():
    g = _frame((100, 80, 30, 40, 80.0), (132, 80, 30, 40, 80.0))
    dets = detect_cars(g)
    assert len(dets) == 1 and dets[0].box == BoundingBox(100, 80, 62, 40)
    assert len(detect_cars(g, DetectorConfig(closing_radius=0))) == 2


def test_fixed_ambient_mode():
    g = _frame((100, 80, 60, 40, 50.0), bg=40.0)
    (whole,) = detect_cars(g, DetectorConfig(ambient_mode="fixed", ambient=30.0))
    assert whole.box == BoundingBox(0, 0, 320, 240)
    (car,) = detect_cars(g)
    assert car.box == BoundingBox(100, 80, 60, 40)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 200), st.integers(0, 150), st.integers(20, 100), st.integers(20, 80), st.integers(-20, 20))
def test_detector_shift_equivariance_and_bounds(x, y, w, h, shift):
    g = _frame((x, y, w, h, 75.0))
    a = detect_cars(g)
    b = detect_cars(g + shift)
    assert [(d.box, d.score) for d in a] == [(d.box, d.score) for d in b]
    for d in a:
        assert d.box.x >= 0 and d.box.y >= 0 and d.box.x2 <= 320 and d.box.y2 <= 240
    assert [d.score for d in a] == sorted((d.score for d in a), reverse=True)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3)
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0


box_st = st.builds(
    BoundingBox, st.floats(-50, 50), st.floats(-50, 50), st.floats(0.5, 40), st.floats(0.5, 40)
)


@settings(max_examples=200, deadline=None)
@given(box_st, box_st, st.floats(-100, 100), st.floats(-100, 100))
def test_iou_properties(a, b, dx, dy):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(b, a))
    moved = iou(BoundingBox(a.x + dx, a.y + dy, a.w, a.h), BoundingBox(b.x + dx, b.y + dy, b.w, b.h))
    assert moved == pytest.approx(v, abs=1e-9)


def test_external_detections(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    assert load_external_detections(p) == {}
    p.write_text(
        '{"frame": 2, "box": [1,2,3,4], "score": 0.5}\n'
        '{"frame": 0, "box": [1,2,3,4], "score": 0.9}\n'
        '{"frame": 0, "box": [5,2,3,4], "score": 0.7}\n'
    )
    got = load_external_detections(p)
    assert list(got) == [0, 2] and {k: len(v) for k, v in got.items()} == {0: 2, 2: 1}
    out = tmp_path / "e.jsonl"
    write_detections(out, got)
    assert load_external_detections(out) == got
    p.write_text('{"frame": 0, "box": [1,2,3,4], "score": 1.2}\n')
    with pytest.raises(ValidationError):
        load_external_detections(p)
    p.write_text('{"frame": 0, "box": [1,2,3,4], "score": 0.2}\n{"frame": 1, "box": [1,2]}\n')
    with pytest.raises(FormatError, match="line 2"):
        load_external_detections(p)


def test_detection_ap_examples():
    gt = BoundingBox(0, 0, 10, 10)
    assert detection_ap({0: [Detection(0, gt, 0.9)], 1: [Detection(1, gt, 0.8)]}, {0: [gt], 1: [gt]}) == 1.0
    # IoU 0.8 and 0.7 against one ground truth: the second is a false positive after the first
    d1 = Detection(0, BoundingBox(0, 0, 10, 8), 0.9)
    d2 = Detection(0, BoundingBox(0, 0, 10, 7), 0.8)
    assert iou(d1.box, gt) == pytest.approx(0.8) and iou(d2.box, gt) == pytest.approx(0.7)
    assert detection_ap({0: [d1, d2]}, {0: [gt]}) == 1.0


def test_detection_score_range():
    with pytest.raises(ValidationError):
        Detection(0, BoundingBox(0, 0, 1, 1), -0.1)


# --- tracker ------------------------------------------------------------------------


def _dets(boxes, score=0.95):
    return {f: [Detection(f, b, score)] for f, b in enumerate(boxes)}


def test_chain_of_high_iou_boxes():
    boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(0.5, 0, 10, 10), BoundingBox(1.0, 0, 10, 10)]
    tracks = build_tracks(_dets(boxes))
    assert len(tracks) == 1 and len(tracks[0]) == 3


def test_low_iou_splits_tracks():
    a = BoundingBox(0, 0, 10, 10)
    b = BoundingBox(0, 0, 10, 5)  # IoU exactly 0.5
    assert len(build_tracks(_dets([a, b]))) == 2
    c = BoundingBox(0, 0, 10, 6)  # IoU 0.6 is not "higher than 0.6"
    assert len(build_tracks(_dets([a, c]))) == 2


def test_parallel_cars_never_merge():
    a, b = BoundingBox(0, 0, 10, 10), BoundingBox(50, 50, 10, 10)
    per = {f: [Detection(f, a, 0.95), Detection(f, b, 0.96)] for f in range(5)}
    tracks = build_tracks(per)
    assert len(tracks) == 2
    for t in tracks:
        assert len({d.box for _, d in t.detections}) == 1 and len(t) == 5


def test_gap_closes_track_unless_tolerated():
    a = BoundingBox(0, 0, 10, 10)
    per = {0: [Detection(0, a, 0.9)], 1: [], 2: [Detection(2, a, 0.9)]}
    assert len(build_tracks(per)) == 2
    assert len(build_tracks(per, max_gap=1)) == 1


def test_conflict_prefers_higher_iou_then_score():
    a = BoundingBox(0, 0, 10, 10)
    per = {
        0: [Detection(0, a, 0.9)],
        1: [Detection(1, BoundingBox(1, 0, 10, 10), 0.99), Detection(1, BoundingBox(0, 0, 10, 10), 0.91)],
    }
    t0 = build_tracks(per)[0]
    assert t0.detections[1][1].box == a


def test_filter_stationary_examples():
    box = BoundingBox(10, 20, 30, 40)
    kept = filter_stationary(build_tracks(_dets([box] * 40, 0.95)))
    assert len(kept) == 1 and kept[0].avg_box == box
    assert filter_stationary(build_tracks(_dets([box] * 30, 0.95))) == []
    assert filter_stationary(build_tracks(_dets([box] * 40, 0.85))) == []


def test_average_box_is_coordinate_mean():
    t = Track(0, [(0, Detection(0, BoundingBox(0, 0, 10, 10), 1.0)), (1, Detection(1, BoundingBox(2, 4, 12, 14), 1.0))])
    assert t.average_box() == BoundingBox(1, 2, 11, 12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 50))
def test_tracks_partition_detections_and_filter_monotone(seed, n_frames):
    rng = np.random.default_rng(seed)
    per = {}
    for f in range(n_frames):
        k = int(rng.integers(0, 4))
        per[f] = [
            Detection(f, BoundingBox(*rng.uniform(0, 20, 2), *rng.uniform(5, 15, 2)), float(rng.uniform(0.5, 1)))
            for _ in range(k)
        ]
    tracks = build_tracks(per)
    members = [id(d) for t in tracks for _, d in t.detections]
    assert len(members) == len(set(members)) == sum(len(v) for v in per.values())
    for t in tracks:
        frames = [f for f, _ in t.detections]
        assert frames == list(range(frames[0], frames[-1] + 1))
    counts = [len(filter_stationary(tracks, min_len=m, min_score=s)) for m, s in [(1, 0.5), (3, 0.5), (3, 0.8), (10, 0.9)]]
    assert counts == sorted(counts, reverse=True)


def test_track_export_roundtrip(tmp_path):
    box = BoundingBox(10, 20, 30, 40)
    cars = filter_stationary(build_tracks(_dets([box] * 36, 0.95)))
    path = tmp_path / "t.jsonl"
    write_tracks(path, cars)
    (rec,) = read_tracks(path)
    assert rec["track"] == 0 and (rec["start"], rec["end"]) == (0, 35)
    assert rec["avg_box"] == box and rec["mean_score"] == pytest.approx(0.95)


def test_noise_free_synthetic_sequence_gives_one_car():
    p = ts.sample_car_params(2)
    scene = ts.SceneParams(noise=0.0)
    for view in ("front", "side", "rear"):
        seq, ann = ts.synthesize_sequence(p, scene, view, "stopped", seed=4)
        cars = filter_stationary(build_tracks(detect_sequence(seq)))
        assert len(cars) == 1
        assert iou(cars[0].avg_box, ann.box) >= 0.8
