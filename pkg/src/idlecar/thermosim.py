"""Synthetic LWIR sequences of parked cars with idling or stopped engines.

Each car is described by a handful of thermal regions. A region's mean
temperature follows a closed form::

    T(t) = T_eq + (T0 - T_eq) exp(-t / tau)
           + H (exp(-t / tau2) - exp(-t / tau1))
           + A sin(2 pi t / period)

i.e. Newtonian relaxation toward an engine-state dependent equilibrium,
a heat-soak bump (rise then decay, peak at
t* = tau1 tau2 / (tau2 - tau1) ln(tau2 / tau1)) and a fan/thermostat
oscillation. The body region additionally drifts with the scene's sun load.

Sampled ranges (deg C, seconds) assume an ambient near 30 C:

=========  ===========  =============  =============  ==========================
region     T0           T_eq idling    T_eq stopped   notes
=========  ===========  =============  =============  ==========================
hood       48 - 58      72 - 86        32 - 38        stopped: soak 12-22 C
exhaust    50 - 100     92 - 103       33 - 38        idling: oscillates
brakes     70 - 95      36 - 44        36 - 44        cools in both states
body       62 - 68      = T0           = T0           + sun drift
windows    48 - 55      38 - 44 (A/C)  56 - 62 (sun)
=========  ===========  =============  =============  ==========================
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DomainError, GeometryError, UsageError
from .irdata import Annotation, BoundingBox, IRSequence, VIEWS, save_sequence, write_annotations

REGIONS = ("hood", "exhaust", "brakes", "body", "windows")
STATES = ("idling", "stopped")
FRAME_INTERVAL = 5.0
MIN_FRAMES = 36

# unit-box layouts (fx, fy, fw, fh); side view is drawn front-at-left, rear
# exhaust on the left and mirrored per sequence
_LAYOUT = {
    "front": {"windows": (0.12, 0.02, 0.76, 0.30), "hood": (0.15, 0.38, 0.70, 0.34)},
    "rear": {"windows": (0.15, 0.02, 0.70, 0.30), "exhaust": (0.22, 0.80, 0.14, 0.12)},
    "side": {
        "hood": (0.02, 0.30, 0.28, 0.30),
        "windows": (0.34, 0.02, 0.38, 0.33),
        "brakes": (0.09, 0.66, 0.15, 0.32),
    },
}
_CAR_SIZE = {"front": (120, 90), "rear": (120, 90), "side": (200, 90)}


@dataclass(frozen=True)
class RegionParams:
    t0: float
    teq_idle: float
    teq_stop: float
    tau_idle: float
    tau_stop: float
    soak_idle: float = 0.0
    soak_stop: float = 0.0
    tau1: float = 100.0
    tau2: float = 1000.0
    osc_idle: float = 0.0
    osc_stop: float = 0.0
    osc_period: float = 180.0

    def __post_init__(self):
        if min(self.tau_idle, self.tau_stop, self.tau1, self.tau2, self.osc_period) <= 0:
            raise ValueError("time constants must be positive")
        if not self.tau1 < self.tau2:
            raise ValueError("soak time constants need tau1 < tau2")
        if min(self.soak_idle, self.soak_stop, self.osc_idle, self.osc_stop) < 0:
            raise ValueError("amplitudes must be non-negative")

    def for_state(self, state):
        if state == "idling":
            return self.teq_idle, self.tau_idle, self.soak_idle, self.osc_idle
        if state == "stopped":
            return self.teq_stop, self.tau_stop, self.soak_stop, self.osc_stop
        raise DomainError(f"unknown engine state {state!r}")


@dataclass(frozen=True)
class CarThermalParams:
    car_id: str
    regions: dict
    # view -> (car width px, car height px, {region: (fx, fy, fw, fh)})
    geometry: dict

    def __post_init__(self):
        ex = self.regions["exhaust"]
        if not (90.0 <= ex.teq_idle <= 105.0):
            raise ValueError("idling exhaust equilibrium must lie in [90, 105] C")
        for view, (_, _, layout) in self.geometry.items():
            for name, (fx, fy, fw, fh) in layout.items():
                if fx < 0 or fy < 0 or fx + fw > 1 or fy + fh > 1:
                    raise ValueError(f"{view}/{name} region leaves the car box")


@dataclass(frozen=True)
class SceneParams:
    ambient: float = 30.0
    noise: float = 0.3
    sun_drift: float = 0.1  # deg C per minute on the body
    texture: float = 1.0
    width: int = 320
    height: int = 240
    car_box: BoundingBox | None = None
    placement_jitter: int = 20

    def __post_init__(self):
        if self.noise < 0 or self.texture < 0:
            raise ValueError("noise and texture amplitudes must be non-negative")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


def soak_peak_time(tau1, tau2):
    return tau1 * tau2 / (tau2 - tau1) * math.log(tau2 / tau1)


def _relax(t, t0, teq, tau, soak, tau1, tau2, osc, period):
    return (
        teq
        + (t0 - teq) * np.exp(-t / tau)
        + soak * (np.exp(-t / tau2) - np.exp(-t / tau1))
        + osc * np.sin(2 * np.pi * t / period)
    )


def region_temperature(t, region, state, params, scene=None):
    """Noise-free mean temperature of ``region`` at time ``t`` (seconds, scalar or array)."""
    if region not in REGIONS:
        raise DomainError(f"unknown region {region!r}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    r = params.regions[region]
    teq, tau, soak, osc = r.for_state(state)
    out = _relax(t, r.t0, teq, tau, soak, r.tau1, r.tau2, osc, r.osc_period)
    if region == "body" and scene is not None:
        out = out + scene.sun_drift * t / 60.0
    return out if out.ndim else float(out)


def _max_osc(t0, teq, tau, period, horizon=300.0):
    """Largest oscillation amplitude that keeps a rising relaxation strictly increasing up to ``horizon``."""
    if t0 >= teq:
        return math.inf
    min_rate = (teq - t0) / tau * math.exp(-horizon / tau)
    return 0.8 * min_rate * period / (2 * math.pi)


def _front_stop_monotone(r, horizon=300.0):
    t = np.linspace(0.0, horizon, 601)
    trace = _relax(t, r.t0, r.teq_stop, r.tau_stop, r.soak_stop, r.tau1, r.tau2, 0.0, 1.0)
    return bool(np.all(np.diff(trace) > 0))


def sample_car_params(seed, car_id=None):
    """Draw one car's thermal parameters; identical seeds give identical cars."""
    rng = np.random.default_rng(seed)
    u = rng.uniform
    if car_id is None:
        car_id = f"car{seed}" if isinstance(seed, int) else "car"

    while True:
        hood_t0 = u(48, 58)
        hood_teq_idle, hood_tau_idle, hood_period = u(72, 86), u(300, 600), u(120, 240)
        hood = RegionParams(
            t0=hood_t0,
            teq_idle=hood_teq_idle,
            teq_stop=u(32, 38),
            tau_idle=hood_tau_idle,
            tau_stop=u(3000, 6000),
            soak_stop=u(12, 22),
            tau1=u(100, 200),
            tau2=u(1500, 3000),
            osc_idle=min(u(0.4, 1.2), _max_osc(hood_t0, hood_teq_idle, hood_tau_idle, hood_period)),
            osc_period=hood_period,
        )
        if _front_stop_monotone(hood):
            break

    ex_t0, ex_teq, ex_tau, ex_period = u(50, 100), u(92, 103), u(150, 300), u(90, 180)
    exhaust = RegionParams(
        t0=ex_t0,
        teq_idle=ex_teq,
        teq_stop=u(33, 38),
        tau_idle=ex_tau,
        tau_stop=u(200, 400),
        osc_idle=min(u(0.5, 1.5), _max_osc(ex_t0, ex_teq, ex_tau, ex_period)),
        osc_period=ex_period,
    )
    brake_teq, brake_tau = u(36, 44), u(150, 400)
    brakes = RegionParams(t0=u(70, 95), teq_idle=brake_teq, teq_stop=brake_teq, tau_idle=brake_tau, tau_stop=brake_tau)
    body_t = u(62, 68)
    body = RegionParams(t0=body_t, teq_idle=body_t, teq_stop=body_t, tau_idle=1000.0, tau_stop=1000.0)
    windows = RegionParams(
        t0=u(48, 55), teq_idle=u(38, 44), teq_stop=u(56, 62), tau_idle=u(300, 600), tau_stop=u(600, 1200)
    )

    geometry = {}
    for view in VIEWS:
        w0, h0 = _CAR_SIZE[view]
        scale = u(0.9, 1.1)
        layout = {}
        for name, (fx, fy, fw, fh) in _LAYOUT[view].items():
            dx, dy = u(-0.02, 0.02), u(-0.02, 0.02)
            layout[name] = (
                float(np.clip(fx + dx, 0.0, 1.0 - fw)),
                float(np.clip(fy + dy, 0.0, 1.0 - fh)),
                fw,
                fh,
            )
        geometry[view] = (int(round(w0 * scale)), int(round(h0 * scale * u(0.95, 1.05))), layout)

    return CarThermalParams(
        car_id=car_id,
        regions={"hood": hood, "exhaust": exhaust, "brakes": brakes, "body": body, "windows": windows},
        geometry=geometry,
    )


def _texture(rng, scene):
    if scene.texture == 0:
        return np.zeros((scene.height, scene.width))
    field_ = ndimage.gaussian_filter(rng.standard_normal((scene.height, scene.width)), sigma=8.0)
    peak = np.abs(field_).max()
    return field_ * (scene.texture / peak) if peak > 0 else field_


def _region_slices(box, rect, mirror):
    fx, fy, fw, fh = rect
    if mirror:
        fx = 1.0 - fx - fw
    x0 = int(round(box.x + fx * box.w))
    y0 = int(round(box.y + fy * box.h))
    x1 = max(int(round(box.x + (fx + fw) * box.w)), x0 + 1)
    y1 = max(int(round(box.y + (fy + fh) * box.h)), y0 + 1)
    return slice(y0, y1), slice(x0, x1)


def synthesize_sequence(params, scene, view, state, n_frames=60, seed=0, sequence_id=None):
    """Render one labeled sequence at 5 s per frame; returns ``(IRSequence, Annotation)``."""
    if view not in VIEWS:
        raise DomainError(f"unknown view {view!r}")
    if state not in STATES:
        raise DomainError(f"unknown engine state {state!r}")
    if n_frames < MIN_FRAMES:
        raise UsageError(f"need at least {MIN_FRAMES} frames, got {n_frames}")
    rng = np.random.default_rng(seed)
    car_w, car_h, layout = params.geometry[view]

    if scene.car_box is not None:
        box = scene.car_box
    else:
        jx, jy = rng.integers(-scene.placement_jitter, scene.placement_jitter + 1, size=2)
        box = BoundingBox(
            float((scene.width - car_w) // 2 + jx), float((scene.height - car_h) // 2 + jy), float(car_w), float(car_h)
        )
    if box.x < 0 or box.y < 0 or box.x2 > scene.width or box.y2 > scene.height:
        raise GeometryError(f"car box {box.as_list()} leaves the {scene.width}x{scene.height} image")
    mirror = bool(rng.integers(0, 2))

    t = np.arange(n_frames) * FRAME_INTERVAL
    background = scene.ambient + _texture(rng, scene)
    temps = np.broadcast_to(background, (n_frames, scene.height, scene.width)).copy()

    car = (slice(int(box.y), int(box.y2)), slice(int(box.x), int(box.x2)))
    temps[:, car[0], car[1]] = region_temperature(t, "body", state, params, scene)[:, None, None]
    for name, rect in layout.items():
        rs, cs = _region_slices(box, rect, mirror)
        temps[:, rs, cs] = region_temperature(t, name, state, params, scene)[:, None, None]
    if scene.noise > 0:
        temps += rng.normal(0.0, scene.noise, size=temps.shape)

    sid = sequence_id or f"{params.car_id}_{view}_{state}"
    seq = IRSequence(
        temps.astype(np.float32),
        frame_interval=FRAME_INTERVAL,
        sequence_id=sid,
        car_id=params.car_id,
        view=view,
        engine_state=state,
    )
    extra = {"car_id": params.car_id}
    if view == "side":
        extra["front_at"] = "right" if mirror else "left"
    ann = Annotation(sequence_id=sid, box=box, view=view, engine_state=state, extra=extra)
    return seq, ann


@dataclass
class GeneratorConfig:
    """Dataset generator settings; keys match the structured config file."""

    n_cars: int = 8
    seed: int = 0
    noise: float = 0.3
    ambient: float = 30.0
    frames: int = 60
    views: tuple = VIEWS
    states: tuple = STATES
    sun_drift: float = 0.1
    texture: float = 1.0

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown generator keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("views", "states"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        import yaml

        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def scene(self):
        return SceneParams(ambient=self.ambient, noise=self.noise, sun_drift=self.sun_drift, texture=self.texture)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["views"], d["states"] = list(self.views), list(self.states)
        return d


def car_ids(n_cars):
    return [f"car{i:02d}" for i in range(n_cars)]


def iter_dataset(n_cars=8, views=VIEWS, states=STATES, n_frames=60, seed=0, scene=None):
    """Yield ``(IRSequence, Annotation)`` for every car/view/state, deterministically."""
    if n_cars < 2:
        raise UsageError("a dataset needs at least 2 cars")
    scene = scene or SceneParams()
    for ci, cid in enumerate(car_ids(n_cars)):
        params = sample_car_params([seed, ci], car_id=cid)
        for vi, view in enumerate(views):
            for si, state in enumerate(states):
                yield synthesize_sequence(
                    params, scene, view, state, n_frames=n_frames, seed=[seed, ci, VIEWS.index(view), STATES.index(state)]
                )


def build_dataset(out_dir, n_cars=8, views=VIEWS, states=STATES, n_frames=60, seed=0, scene=None, extra_meta=None):
    """Write IRS containers, sidecars, ``annotations.jsonl`` and ``manifest.json`` to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = scene or SceneParams()
    entries, anns = [], []
    for seq, ann in iter_dataset(n_cars, views, states, n_frames, seed, scene):
        name = f"{seq.sequence_id}.irs"
        save_sequence(out_dir / name, seq)
        entries.append(seq.metadata(name) | {"frames": len(seq)})
        anns.append(ann)
    write_annotations(out_dir / "annotations.jsonl", anns)
    manifest = {
        "seed": seed,
        "n_cars": n_cars,
        "n_sequences": len(entries),
        "n_frames": sum(e["frames"] for e in entries),
        "scene": {k: v for k, v in dataclasses.asdict(scene).items() if k != "car_box"},
        "sequences": entries,
        **(extra_meta or {}),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_manifest(data_dir):
    return json.loads((Path(data_dir) / "manifest.json").read_text())


def config_digest(obj):
    """Short stable digest of a JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def front_max_monotone(params, scene, state, horizon=300.0):
    """Whether the noise-free max over the front-view car box is non-decreasing up to ``horizon``."""
    t = np.arange(0.0, horizon + 1e-9, FRAME_INTERVAL)
    names = ["body", *params.geometry["front"][2].keys()]
    trace = np.max([region_temperature(t, n, state, params, scene) for n in names], axis=0)
    return bool(np.all(np.diff(trace) >= 0))


__all__ = [
    "REGIONS",
    "STATES",
    "RegionParams",
    "CarThermalParams",
    "SceneParams",
    "GeneratorConfig",
    "sample_car_params",
    "region_temperature",
    "soak_peak_time",
    "synthesize_sequence",
    "iter_dataset",
    "build_dataset",
    "load_manifest",
    "car_ids",
    "config_digest",
    "front_max_monotone",
]
