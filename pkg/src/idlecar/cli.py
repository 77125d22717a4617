"""Command line: synth -> detect/track -> train -> eval -> report.

The config file is YAML with optional sections ``generator``, ``detector``,
``tracker`` and ``study``; flags override file values. Every output file
carries the digest of the resolved configuration of the command that wrote it.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from . import thermosim
from .classify import Classifier, WindowSet, write_predictions
from .classify.models import KINDS, family
from .detect import DetectorConfig, detect_sequence, load_external_detections
from .errors import IdleCarError, UsageError
from .evalharness import CURVES, Fold, evaluate
from .irdata import VIEWS, BoundingBox, load_sequence
from .study import (
    Dataset,
    StudyConfig,
    annotated_samples,
    fold_model_paths,
    load_dataset,
    predict_folds,
    restore_fold_models,
    train_folds,
)
from .track import ASSOC_IOU, MIN_MEAN_SCORE, MIN_STATIONARY_FRAMES, build_tracks, filter_stationary, read_tracks

log = logging.getLogger("idlecar")

MODES = ("subsequence", "sequence")
BOXES = ("annotated", "detected")


@dataclasses.dataclass
class TrackerConfig:
    min_len: int = MIN_STATIONARY_FRAMES
    min_score: float = MIN_MEAN_SCORE
    max_gap: int = 0
    iou_threshold: float = ASSOC_IOU

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        if set(data) - known:
            raise UsageError(f"unknown tracker keys: {sorted(set(data) - known)}")
        return cls(**data)


@dataclasses.dataclass
class RunConfig:
    generator: thermosim.GeneratorConfig
    detector: DetectorConfig
    tracker: TrackerConfig
    study: StudyConfig

    def as_dict(self):
        return {
            "generator": self.generator.as_dict(),
            "detector": dataclasses.asdict(self.detector),
            "tracker": dataclasses.asdict(self.tracker),
            "study": self.study.as_dict(),
        }


SECTIONS = ("generator", "detector", "tracker", "study")


def load_config(path=None, seed=None, views=None):
    """Read the YAML sections and apply flag overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict) or set(raw) - set(SECTIONS):
            raise UsageError(f"config sections must be among {SECTIONS}")
    gen = dict(raw.get("generator") or {})
    study = dict(raw.get("study") or {})
    if seed is not None:
        gen["seed"] = seed
        study["seed"] = seed
    if views is not None:
        study["views"] = views
    try:
        detector = DetectorConfig(**(raw.get("detector") or {}))
    except TypeError as exc:
        raise UsageError(f"detector section: {exc}") from exc
    return RunConfig(
        thermosim.GeneratorConfig.from_dict(gen),
        detector,
        TrackerConfig.from_dict(raw.get("tracker") or {}),
        StudyConfig.from_dict(study),
    )


def _digest(command, cfg, **extra):
    return thermosim.config_digest({"command": command, "config": cfg.as_dict(), **extra})


def _write_jsonl(path, records, digest):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps({**rec, "config_digest": digest}, sort_keys=True) + "\n")


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sequences(data):
    """A dataset directory, or a single IRS file."""
    path = Path(data)
    if path.is_file():
        return [load_sequence(path)]
    return load_dataset(path).sequences


# --- commands -----------------------------------------------------------------------


def cmd_synth(args, cfg):
    gen = cfg.generator
    digest = _digest("synth", cfg)
    manifest = thermosim.build_dataset(
        args.out,
        n_cars=gen.n_cars,
        views=gen.views,
        states=gen.states,
        n_frames=gen.frames,
        seed=gen.seed,
        scene=gen.scene(),
        extra_meta={"config_digest": digest, "generator": gen.as_dict()},
    )
    print(f"cars {manifest['n_cars']}  sequences {manifest['n_sequences']}  frames {manifest['n_frames']}")
    return 0


def _track_records(per_frame, tcfg):
    tracks = build_tracks(per_frame, max_gap=tcfg.max_gap, iou_threshold=tcfg.iou_threshold)
    return [c.to_record() for c in filter_stationary(tracks, tcfg.min_len, tcfg.min_score)]


def _external(source, sequence_id, single):
    path = Path(source)
    if path.is_dir():
        path = path / f"{sequence_id}.jsonl"
        if not path.exists():
            raise UsageError(f"no detections file {path}")
    elif not single:
        raise UsageError("a detections file covers one sequence; pass a directory of <sequence_id>.jsonl files")
    return load_external_detections(path)


def cmd_detect(args, cfg):
    """Detect (or ingest) cars per frame, then export stationary-car tracks."""
    seqs = _sequences(args.data)
    out = _out_dir(args)
    digest = _digest("detect", cfg, detections=args.detections is not None)
    (out / "detections").mkdir(exist_ok=True)
    (out / "tracks").mkdir(exist_ok=True)
    summary = {}
    for seq in seqs:
        if args.detections is not None:
            per_frame = _external(args.detections, seq.sequence_id, len(seqs) == 1)
        else:
            per_frame = detect_sequence(seq, cfg.detector)
        dets = [d.to_record() for f in sorted(per_frame) for d in per_frame[f]]
        _write_jsonl(out / "detections" / f"{seq.sequence_id}.jsonl", dets, digest)
        cars = _track_records(per_frame, cfg.tracker)
        _write_jsonl(out / "tracks" / f"{seq.sequence_id}.jsonl", cars, digest)
        summary[seq.sequence_id] = len(cars)
        print(f"{seq.sequence_id}: {sum(map(len, per_frame.values()))} detections, {len(cars)} stationary cars")
    _write_json(out / "tracks.json", {"config_digest": digest, "stationary_cars": summary})
    return 0


def cmd_track(args, cfg):
    """Re-run the tracker on detections written by ``detect`` (or any external source)."""
    seqs = _sequences(args.data)
    out = _out_dir(args)
    source = args.detections or out / "detections"
    digest = _digest("track", cfg)
    (out / "tracks").mkdir(exist_ok=True)
    summary = {}
    for seq in seqs:
        cars = _track_records(_external(source, seq.sequence_id, len(seqs) == 1), cfg.tracker)
        _write_jsonl(out / "tracks" / f"{seq.sequence_id}.jsonl", cars, digest)
        summary[seq.sequence_id] = len(cars)
        print(f"{seq.sequence_id}: {len(cars)} stationary cars")
    _write_json(out / "tracks.json", {"config_digest": digest, "stationary_cars": summary})
    return 0


def _require_model(args):
    if args.model is None:
        raise UsageError("--model is required")
    return args.model


def cmd_train(args, cfg):
    kind = _require_model(args)
    dataset = load_dataset(args.data)
    out = _out_dir(args)
    sc = cfg.study
    digest = _digest("train", cfg, model=kind)
    fam = family(kind)
    cache = out / "cache" / f"{fam}_{sc.views}_{sc.size}x{sc.n}_stride{sc.train_stride}.irs"
    if cache.exists():
        samples = WindowSet.load(cache)
    else:
        cache.parent.mkdir(exist_ok=True)
        samples = annotated_samples(dataset.select(views=sc.view_list()), fam, sc.size, sc.n, sc.train_stride)
        samples.save(cache, meta={"config_digest": digest})
    folds, fold_models = train_folds(kind, dataset, sc, samples)
    paths = fold_model_paths(out, fold_models, kind)
    records = []
    for (i, view), path in sorted(paths.items()):
        clf = fold_models[i].models[view]
        fold = fold_models[i].fold
        clf.meta = {"config_digest": digest, "fold": i, "v1": fold.v1, "v2": fold.v2, "train": list(fold.train)}
        clf.save(path)
        records.append({"fold": i, "view": view, "file": path.name, "seed": clf.seed, "v2_acc": _num(clf.v2_acc)})
        _write_history(path.with_suffix(".history.csv"), clf.history, digest)
        acc = "n/a" if clf.v2_acc != clf.v2_acc else f"{clf.v2_acc:.3f}"
        print(f"fold {i} ({fold.v1}) {view}: seed {clf.seed}, V2 accuracy {acc}")
    _write_json(
        out / "train.json",
        {
            "config_digest": digest,
            "model": kind,
            "config": cfg.as_dict(),
            "folds": [dataclasses.asdict(f) for f in folds],
            "checkpoints": records,
        },
    )
    return 0


def _num(v):
    return None if v != v else v


def _write_history(path, history, digest):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_digest={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "train_acc", "v2_acc"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["train_acc"]), repr(h["v2_acc"])])


@dataclasses.dataclass(frozen=True)
class _TrackedCar:
    avg_box: BoundingBox
    start_frame: int
    end_frame: int


def _load_tracked(tracks_dir, dataset):
    cars = {}
    for seq in dataset.sequences:
        path = Path(tracks_dir) / f"{seq.sequence_id}.jsonl"
        if not path.exists():
            raise UsageError(f"no track export {path}")
        cars[seq.sequence_id] = [_TrackedCar(r["avg_box"], r["start"], r["end"]) for r in read_tracks(path)]
    return cars


def _restore(run_dir):
    run_dir = Path(run_dir)
    try:
        info = json.loads((run_dir / "train.json").read_text())
    except OSError as exc:
        raise UsageError(f"no trained run in {run_dir}: {exc}") from exc
    folds = [Fold(tuple(f["train"]), f["v1"], f["v2"]) for f in info["folds"]]
    ckpts = {(r["fold"], r["view"]): Classifier.load(run_dir / r["file"]) for r in info["checkpoints"]}
    return info, restore_fold_models(folds, ckpts)


def cmd_eval(args, cfg):
    dataset: Dataset = load_dataset(args.data)
    info, fold_models = _restore(args.checkpoints or args.out)
    kind = info["model"]
    if args.model is not None and args.model != kind:
        raise UsageError(f"checkpoints hold {kind!r}, not {args.model!r}")
    study = StudyConfig.from_dict(info["config"]["study"])
    if args.views is not None and args.views != study.views:
        raise UsageError(f"checkpoints were trained for views {study.views!r}, not {args.views!r}")
    out = _out_dir(args)
    modes = [args.mode] if args.mode else list(MODES)
    boxes = [args.boxes] if args.boxes else list(BOXES)
    digest = _digest("eval", cfg, model=kind, train=info["config_digest"], modes=modes, boxes=boxes, tracks=args.tracks is not None)
    truths = [t for t in dataset.truths() if t.view in study.view_list()]
    for b in boxes:
        cars = _load_tracked(args.tracks, dataset.select(views=study.view_list())) if b == "detected" and args.tracks else None
        results = predict_folds(kind, dataset, fold_models, study, b, cars, cfg.detector)
        preds = [p for r in results for p in r.predictions]
        pred_path = out / f"predictions_{kind}_{b}.jsonl"
        write_predictions(pred_path, preds)
        _stamp_jsonl(pred_path, digest)
        for mode in modes:
            rep = evaluate(mode, results, truths, boxes=b)
            rep.meta.update(model=kind, views=study.views)
            stem = out / f"report_{kind}_{b}_{mode}"
            rep.write_csv(stem.with_suffix(".csv"), digest)
            rep.write_json(stem.with_suffix(".json"), digest)
            aps = "  ".join(f"{c} {ap:.3f}" for c, ap in rep.ap.items())
            print(f"{kind} {b} {mode}: {aps}")
    return 0


def _stamp_jsonl(path, digest):
    lines = Path(path).read_text().splitlines()
    _write_jsonl(path, [json.loads(line) for line in lines], digest)


def cmd_report(args, cfg):
    """Collect every report JSON under --data (default --out) into one AP table."""
    src = Path(args.data or args.out)
    reports = sorted(src.glob("**/report_*.json"))
    if not reports:
        raise UsageError(f"no reports under {src}")
    rows = []
    for path in reports:
        r = json.loads(path.read_text())
        rows.append([r.get("model", ""), r["boxes"], r["mode"], *(r["ap"].get(c, float("nan")) for c in CURVES), r.get("config_digest", "")])
    out = _out_dir(args)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "boxes", "mode", *(f"ap_{c}" for c in CURVES), "config_digest"])
        for row in rows:
            w.writerow(row[:3] + [repr(v) for v in row[3:-1]] + row[-1:])
    print(f"{'model':10s} {'boxes':10s} {'mode':12s} " + " ".join(f"{c:>6s}" for c in CURVES))
    for row in rows:
        print(f"{row[0]:10s} {row[1]:10s} {row[2]:12s} " + " ".join(f"{v:6.3f}" for v in row[3:-1]))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "detect": cmd_detect,
    "track": cmd_track,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="idlecar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic dataset",
        "detect": "detect cars per frame and export stationary-car tracks",
        "track": "rebuild stationary-car tracks from stored detections",
        "train": "train per-fold models on annotated windows",
        "eval": "predict held-out cars and write PR curves and AP",
        "report": "summarize AP over all reports in a directory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML file with generator/detector/tracker/study sections")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--data", help="dataset directory (or one .irs file for detect/track)")
        p.add_argument("--model", choices=KINDS)
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--boxes", choices=BOXES)
        p.add_argument("--views", choices=(*VIEWS, "all"))
        p.add_argument("--detections", help="external detections: a <sequence_id>.jsonl directory or one file")
        p.add_argument("--tracks", help="track exports from detect/track, used for --boxes detected")
        p.add_argument("--checkpoints", help="training output directory (default: --out)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        if args.command not in ("synth", "report") and args.data is None:
            raise UsageError(f"{args.command} needs --data")
        cfg = load_config(args.config, args.seed, args.views)
        return COMMANDS[args.command](args, cfg)
    except (IdleCarError, ValueError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error ({args.command}): {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
