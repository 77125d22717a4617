import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idlecar import thermosim as ts
from idlecar.errors import DomainError, GeometryError, UsageError
from idlecar.irdata import BoundingBox, load_sequence, max_over_box

QUIET = ts.SceneParams(noise=0.0, texture=0.0, sun_drift=0.0)


def test_same_seed_same_params():
    assert ts.sample_car_params(7) == ts.sample_car_params(7)


def test_distinct_seeds_distinct_cars():
    cars = [ts.sample_car_params(s) for s in range(1, 9)]
    hoods = {c.regions["hood"] for c in cars}
    assert len(hoods) == 8


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_param_invariants(seed):
    p = ts.sample_car_params(seed)
    ex = p.regions["exhaust"]
    assert 90 <= ex.teq_idle <= 105
    for r in p.regions.values():
        assert min(r.tau_idle, r.tau_stop, r.tau1, r.tau2) > 0 and r.tau1 < r.tau2
        assert min(r.soak_idle, r.soak_stop, r.osc_idle, r.osc_stop) >= 0
    for _, _, layout in p.geometry.values():
        for fx, fy, fw, fh in layout.values():
            assert 0 <= fx and 0 <= fy and fx + fw <= 1 and fy + fh <= 1


def test_initial_condition_and_equilibrium():
    p = ts.sample_car_params(3)
    for region in ts.REGIONS:
        for state in ts.STATES:
            assert ts.region_temperature(0.0, region, state, p) == pytest.approx(p.regions[region].t0, abs=1e-12)
    ex = p.regions["exhaust"]
    assert ts.region_temperature(1e6, "exhaust", "stopped", p) == pytest.approx(ex.teq_stop, abs=1e-6)


def test_unknown_region_or_state():
    p = ts.sample_car_params(0)
    with pytest.raises(DomainError):
        ts.region_temperature(0.0, "roof", "idling", p)
    with pytest.raises(DomainError):
        ts.region_temperature(0.0, "hood", "parked", p)


def test_low_t0_idling_exhaust_rises():
    p = ts.sample_car_params(5)
    ex = dataclasses.replace(p.regions["exhaust"], t0=50.0)
    p = dataclasses.replace(p, regions={**p.regions, "exhaust": ex})
    t = np.arange(0, 301, 5.0)
    trace = ts.region_temperature(t, "exhaust", "idling", p)
    assert np.all(np.diff(trace) > 0)
    assert trace[-1] < 105


def test_soak_peak_time_formula():
    tau1, tau2 = 150.0, 2000.0
    t = np.linspace(0, 3000, 300001)
    bump = np.exp(-t / tau2) - np.exp(-t / tau1)
    assert t[np.argmax(bump)] == pytest.approx(ts.soak_peak_time(tau1, tau2), abs=0.02)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dynamics_directions(seed):
    p = ts.sample_car_params(seed)
    t = np.arange(0, 301, 5.0)
    for state in ts.STATES:
        assert ts.front_max_monotone(p, QUIET, state)
    stop_ex = ts.region_temperature(t, "exhaust", "stopped", p)
    assert np.all(np.diff(stop_ex) < 0)
    brakes = ts.region_temperature(t[t <= 120], "brakes", "stopped", p)
    assert np.all(np.diff(brakes) < 0)
    hood = ts.region_temperature(t, "hood", "stopped", p)
    assert np.all(np.diff(hood) > 0)


def test_noise_free_pixels_follow_formula():
    p = ts.sample_car_params(2)
    seq, ann = ts.synthesize_sequence(p, QUIET, "front", "stopped", n_frames=40, seed=1)
    t = np.arange(40) * ts.FRAME_INTERVAL
    car_w, car_h, layout = p.geometry["front"]
    fx, fy, fw, fh = layout["hood"]
    b = ann.box
    cx, cy = int(b.x + (fx + fw / 2) * b.w), int(b.y + (fy + fh / 2) * b.h)
    expect = ts.region_temperature(t, "hood", "stopped", p).astype(np.float32)
    np.testing.assert_array_equal(seq.temps[:, cy, cx], expect)
    # background is exactly ambient without texture or noise
    assert np.all(seq.temps[:, 0, 0] == 30.0)
    assert (ann.box.w, ann.box.h) == (car_w, car_h)


def test_stopped_hood_frame_max_at_soak_peak():
    # a cool body so the hood holds the box maximum; the frame at the soak peak
    # carries the closed-form value
    p = ts.sample_car_params(4)
    body = dataclasses.replace(p.regions["body"], t0=31.0, teq_idle=31.0, teq_stop=31.0)
    windows = dataclasses.replace(p.regions["windows"], t0=31.0, teq_stop=31.0, teq_idle=31.0)
    hood = dataclasses.replace(p.regions["hood"], tau1=100.0, tau2=400.0, t0=40.0, teq_stop=40.0, tau_stop=5000.0)
    p = dataclasses.replace(p, regions={**p.regions, "body": body, "windows": windows, "hood": hood})
    t_peak = ts.soak_peak_time(100.0, 400.0)
    k = int(round(t_peak / ts.FRAME_INTERVAL))
    seq, ann = ts.synthesize_sequence(p, QUIET, "front", "stopped", n_frames=60, seed=0)
    value = ts.region_temperature(k * ts.FRAME_INTERVAL, "hood", "stopped", p)
    assert max_over_box(seq.temps[k], ann.box) == pytest.approx(value, abs=1e-4)
    trace = [max_over_box(seq.temps[i], ann.box) for i in range(60)]
    assert int(np.argmax(trace)) == k


def test_synthesize_deterministic_and_checks():
    p = ts.sample_car_params(1)
    a, _ = ts.synthesize_sequence(p, ts.SceneParams(), "side", "idling", seed=9)
    b, _ = ts.synthesize_sequence(p, ts.SceneParams(), "side", "idling", seed=9)
    assert a.temps.tobytes() == b.temps.tobytes()
    assert len(a) == 60 and a.duration == 295.0
    with pytest.raises(UsageError):
        ts.synthesize_sequence(p, ts.SceneParams(), "side", "idling", n_frames=30)
    bad = dataclasses.replace(ts.SceneParams(), car_box=BoundingBox(300, 10, 100, 50))
    with pytest.raises(GeometryError):
        ts.synthesize_sequence(p, bad, "front", "idling")


def test_build_dataset_counts_and_determinism(tmp_path):
    m1 = ts.build_dataset(tmp_path / "a", n_cars=2, n_frames=36, seed=3)
    m2 = ts.build_dataset(tmp_path / "b", n_cars=2, n_frames=36, seed=3)
    assert m1["n_sequences"] == 12 and m1["n_frames"] == 12 * 36
    assert m1 == m2
    for entry in m1["sequences"]:
        assert (tmp_path / "a" / entry["file"]).read_bytes() == (tmp_path / "b" / entry["file"]).read_bytes()
    seq = load_sequence(tmp_path / "a" / m1["sequences"][0]["file"])
    assert seq.car_id == "car00"
    lines = (tmp_path / "a" / "annotations.jsonl").read_text().splitlines()
    assert len(lines) == 12 and json.loads(lines[0])["sequence_id"] == seq.sequence_id
    with pytest.raises(UsageError):
        ts.build_dataset(tmp_path / "c", n_cars=1)


def test_default_build_scale():
    cfg = ts.GeneratorConfig()
    n = cfg.n_cars * len(cfg.views) * len(cfg.states)
    assert n == 48 and n * cfg.frames == 2880


def test_generator_config_file(tmp_path):
    path = tmp_path / "gen.yaml"
    path.write_text("n_cars: 3\nseed: 11\nnoise: 0.5\nframes: 40\n")
    cfg = ts.GeneratorConfig.from_file(path)
    assert (cfg.n_cars, cfg.seed, cfg.noise, cfg.frames) == (3, 11, 0.5, 40)
    with pytest.raises(UsageError):
        ts.GeneratorConfig.from_dict({"n_car": 3})
