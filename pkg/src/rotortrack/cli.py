"""Command-line pipeline: synth, train, calibrate, classify, validate, report.

Stages communicate only through files, so any stage can be rerun in
isolation.  Every artifact is written to a temporary name and renamed into
place once complete, and all outputs are byte-for-byte deterministic for a
fixed config and seed; wall-clock timestamps appear only in the optional
log file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autoencoder as ae
from . import identify as idf
from . import runwayscore as rs
from . import synthgen as sg
from . import trackdata as td
from . import validate as vl

log = logging.getLogger("rotortrack")

DEFAULT_CONFIG: dict = {
    "paths": {
        "out_dir": ".",
        "tracks": "tracks.jsonl",
        "labels": "labels.csv",
        "runways": "runways.csv",
        "registration": "registration.csv",
        "heli_types": "heli_types.txt",
        "model": "model.rtae",
        "loss_history": "loss_history.csv",
        "thresholds": "thresholds.json",
        "histogram": "mae_histogram.csv",
        "results": "results.csv",
        "validation": "validation.csv",
        "venn_csv": "venn_summary.csv",
        "venn_txt": "venn_summary.txt",
        "pseudo_types": "pseudo_types.csv",
        "metrics": "metrics.json",
        "report": "report.txt",
    },
    "synth": {"seed": 7, "helicopters": 100, "ga": 100, "commercial": 100},
    "autoencoder": {
        "encoder_convs": [[7, 2, 16], [5, 2, 32]],
        "latent_dim": 16,
        "activation": "relu",
        "seed": 1107,
        "dtype": "float64",
    },
    "training": {
        "epochs": 200,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "validation_fraction": 0.2,
        "patience": 20,
        "seed": 7,
    },
    "thresholds": {
        "percentile": idf.DEFAULT_PERCENTILE,
        "runway_score_threshold": idf.DEFAULT_SCORE_THRESHOLD,
    },
    "runway_score": {
        "distance_scale_nm": 1.0,
        "course_full_scale_deg": 30.0,
        "lateral_full_scale_ft": 500.0,
        "length_full_scale_ft": 3000.0,
        "weights": [0.3, 0.25, 0.25, 0.1, 0.1],
    },
    "histogram_bins": 30,
}


class CliError(Exception):
    """A user-facing pipeline failure; the message names the offending file."""


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CliError(f"config file {p} is not valid JSON: {e.msg} (line {e.lineno})") from None
    if not isinstance(user, dict):
        raise CliError(f"config file {p} must contain a JSON object")
    return _deep_merge(DEFAULT_CONFIG, user)


class Paths:
    """Config paths resolved against the output directory."""

    def __init__(self, cfg: dict, out_dir_flag: Optional[str]):
        self.out_dir = Path(out_dir_flag or cfg["paths"]["out_dir"])
        self._cfg = cfg["paths"]

    def __getattr__(self, name: str) -> Path:
        try:
            raw = self._cfg[name]
        except KeyError:
            raise AttributeError(name) from None
        p = Path(raw)
        return p if p.is_absolute() else self.out_dir / p

    def input(self, name: str) -> Path:
        p = getattr(self, name)
        if not p.is_file():
            raise CliError(f"required input file not found: {p}")
        return p


def _atomic_write(path: Path, write_fn: Callable[[Path], None]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    tmp.replace(path)
    log.info("wrote %s", path)


def _write_text(path: Path, text: str) -> None:
    _atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def _fmt(value: float) -> str:
    return repr(float(value))


# --------------------------------------------------------------------------
# shared stage helpers

def _load_tracks(paths: Paths, strict: bool) -> list[td.Track]:
    result = td.load_tracks(paths.input("tracks"), strict=strict)
    for line_no, reason in result.rejects:
        log.warning("tracks line %d rejected: %s", line_no, reason)
    if not result.tracks:
        raise CliError(f"no usable tracks in {paths.tracks}")
    return result.tracks


def _runway_for_track(track: td.Track, runways: dict[str, td.Runway]) -> td.Runway:
    if track.runway_id and track.runway_id in runways:
        return runways[track.runway_id]
    # trust runway_id when present; otherwise pick the nearest threshold
    best = None
    best_d = math.inf
    for rw in runways.values():
        _, d = td.closest_approach_index(track, rw)
        if d < best_d:
            best, best_d = rw, d
    return best


def _heli_track_windows(tracks: list[td.Track], labels: dict[str, str],
                        runways: dict[str, td.Runway]) -> tuple[list[str], list[np.ndarray]]:
    """Raw (unnormalized) arrival windows for helicopter-labeled tracks."""
    ids, raw = [], []
    for track in tracks:
        if labels.get(track.track_id) != td.CLASS_HELICOPTER:
            continue
        runway = _runway_for_track(track, runways)
        try:
            points = td.window_arrival(track, runway)
        except td.WindowingError as e:
            log.warning("training track %s skipped: %s", track.track_id, e)
            continue
        ids.append(track.track_id)
        raw.append(td.featurize(points, runway))
    return ids, raw


def _score_params(cfg: dict) -> rs.ScoreParams:
    c = cfg["runway_score"]
    return rs.ScoreParams(
        distance_scale_nm=c["distance_scale_nm"],
        course_full_scale_deg=c["course_full_scale_deg"],
        lateral_full_scale_ft=c["lateral_full_scale_ft"],
        length_full_scale_ft=c["length_full_scale_ft"],
        weights=tuple(c["weights"]),
    )


def _read_thresholds(paths: Paths) -> idf.Thresholds:
    raw = json.loads(paths.input("thresholds").read_text(encoding="utf-8"))
    return idf.Thresholds(
        mae_threshold=raw["mae_threshold"],
        percentile=raw["percentile"],
        runway_score_threshold=raw["runway_score_threshold"],
    )


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args, cfg: dict, paths: Paths) -> None:
    seed = args.seed if args.seed is not None else cfg["synth"]["seed"]
    spec = sg.ScenarioSpec(
        seed=seed,
        n_helicopter=args.helicopters if args.helicopters is not None else cfg["synth"]["helicopters"],
        n_ga=args.ga if args.ga is not None else cfg["synth"]["ga"],
        n_commercial=args.commercial if args.commercial is not None else cfg["synth"]["commercial"],
    )
    scenario = sg.generate(spec)
    log.info("generated %d tracks (seed %d)", len(scenario.tracks), seed)
    _atomic_write(paths.tracks, lambda tmp: td.save_tracks(scenario.tracks, tmp))
    _atomic_write(paths.labels, lambda tmp: sg.write_labels(scenario.labels, tmp))
    _atomic_write(paths.runways, lambda tmp: sg.write_runways_csv([scenario.runway], tmp))
    _atomic_write(paths.registration,
                  lambda tmp: sg.write_registration_csv(scenario.registration, tmp))
    _atomic_write(paths.heli_types, lambda tmp: sg.write_heli_types(scenario.heli_types, tmp))


def cmd_train(args, cfg: dict, paths: Paths) -> None:
    ac = cfg["autoencoder"]
    from . import neuralcore as nn
    nn.set_dtype(ac.get("dtype", "float64"))
    tracks = _load_tracks(paths, args.strict)
    labels = sg.load_labels(paths.input("labels"))
    runways = td.load_runways(paths.input("runways"))
    ids, raw = _heli_track_windows(tracks, labels, runways)
    log.info("training on %d helicopter windows", len(raw))
    stats = td.fit_norm_stats(raw)
    windows = [td.normalize(r, stats, i, td.CLASS_HELICOPTER) for i, r in zip(ids, raw)]

    spec = ae.AutoencoderSpec(
        encoder_convs=tuple(tuple(st) for st in ac["encoder_convs"]),
        latent_dim=ac["latent_dim"],
        activation=ac["activation"],
        seed=ac["seed"],
    )
    model = ae.build(spec)
    tc = cfg["training"]
    history = ae.train(model, windows, ae.TrainConfig(
        epochs=tc["epochs"], batch_size=tc["batch_size"], learning_rate=tc["learning_rate"],
        beta1=tc["beta1"], beta2=tc["beta2"], eps=tc["eps"],
        validation_fraction=tc["validation_fraction"], patience=tc["patience"], seed=tc["seed"]))
    model.norm_stats = stats
    log.info("trained %d epochs, final val MAE %.6f", len(history), history[-1].val_mae)

    _atomic_write(paths.model, lambda tmp: ae.save(model, tmp))
    lines = ["epoch,train_mae,val_mae"]
    lines += [f"{h.epoch},{_fmt(h.train_mae)},{_fmt(h.val_mae)}" for h in history]
    _write_text(paths.loss_history, "\n".join(lines) + "\n")


def cmd_calibrate(args, cfg: dict, paths: Paths) -> None:
    model = ae.load(paths.input("model"))
    tracks = _load_tracks(paths, args.strict)
    labels = sg.load_labels(paths.input("labels"))
    runways = td.load_runways(paths.input("runways"))
    maes = []
    for track in tracks:
        if labels.get(track.track_id) != td.CLASS_HELICOPTER:
            continue
        try:
            maes.append(idf.window_mae(model, track, _runway_for_track(track, runways)))
        except td.WindowingError as e:
            log.warning("calibration track %s skipped: %s", track.track_id, e)
    percentile = args.percentile if args.percentile is not None else cfg["thresholds"]["percentile"]
    delta = idf.calibrate(maes, percentile)
    log.info("calibrated MAE threshold %.6g at percentile %s over %d windows",
             delta, percentile, len(maes))
    thresholds = {
        "mae_threshold": delta,
        "percentile": float(percentile),
        "runway_score_threshold": float(cfg["thresholds"]["runway_score_threshold"]),
    }
    _write_text(paths.thresholds, json.dumps(thresholds, indent=2) + "\n")
    bins = idf.histogram_report(maes, cfg["histogram_bins"])
    lines = ["bin_lo,bin_hi,count"]
    lines += [f"{_fmt(b.lo)},{_fmt(b.hi)},{b.count}" for b in bins]
    _write_text(paths.histogram, "\n".join(lines) + "\n")


def cmd_classify(args, cfg: dict, paths: Paths) -> None:
    model = ae.load(paths.input("model"))
    thresholds = _read_thresholds(paths)
    tracks = _load_tracks(paths, args.strict)
    runways = td.load_runways(paths.input("runways"))
    score_params = _score_params(cfg)
    lines = ["track_id,mae,runway_score,pred_is_helicopter,reasons"]
    n_heli = n_unclassifiable = 0
    for track in tracks:
        runway = _runway_for_track(track, runways)
        try:
            res = idf.classify(model, thresholds, track, runway, score_params)
        except idf.Unclassifiable as e:
            n_unclassifiable += 1
            lines.append(f"{track.track_id},,,false,unclassifiable:{e.reason}")
            continue
        n_heli += res.pred_is_helicopter
        lines.append(f"{res.track_id},{_fmt(res.mae)},{_fmt(res.runway_score)},"
                     f"{'true' if res.pred_is_helicopter else 'false'},{';'.join(res.reasons)}")
    log.info("classified %d tracks: %d helicopters, %d unclassifiable",
             len(tracks), n_heli, n_unclassifiable)
    _write_text(paths.results, "\n".join(lines) + "\n")


def read_results(path) -> tuple[list[idf.ClassificationResult], dict[str, str]]:
    """Parse results.csv back into results plus {track_id: reason} rejects."""
    results: list[idf.ClassificationResult] = []
    unclassifiable: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expect = ["track_id", "mae", "runway_score", "pred_is_helicopter", "reasons"]
        if reader.fieldnames != expect:
            raise CliError(f"results file {path} must have header {','.join(expect)}")
        for row in reader:
            reasons = row["reasons"]
            if reasons.startswith("unclassifiable:"):
                unclassifiable[row["track_id"]] = reasons.split(":", 1)[1]
                continue
            results.append(idf.ClassificationResult(
                track_id=row["track_id"],
                mae=float(row["mae"]),
                runway_score=float(row["runway_score"]),
                pred_is_helicopter=row["pred_is_helicopter"] == "true",
                reasons=tuple(r for r in reasons.split(";") if r),
            ))
    return results, unclassifiable


def cmd_validate(args, cfg: dict, paths: Paths) -> None:
    results, unclassifiable = read_results(paths.input("results"))
    tracks = _load_tracks(paths, args.strict)
    tracks_by_id = {t.track_id: t for t in tracks}
    table = td.load_registration(paths.input("registration"))
    for msg in table.duplicates:
        log.warning("registration: %s", msg)
    heli_types = vl.load_heli_types(paths.input("heli_types"))

    records = vl.join_registration(results, tracks_by_id, table)
    metrics = vl.confusion_metrics(records)

    header = ["track_id", "mae", "runway_score", "pred_is_helicopter", "matched",
              "is_helicopter_ac_reg", "aircraft_class", "model", "manufacturer",
              "type_designator", "declared_type", "class_conflict"]
    lines = [",".join(header)]
    for r in records:
        truth = "" if r.is_helicopter_ac_reg is None else str(r.is_helicopter_ac_reg).lower()
        lines.append(",".join([
            r.track_id, _fmt(r.mae), _fmt(r.runway_score),
            str(r.pred_is_helicopter).lower(), r.matched.value, truth,
            r.aircraft_class or "", r.model or "", r.manufacturer or "",
            r.type_designator or "", r.declared_type or "", str(r.class_conflict).lower(),
        ]))
    _write_text(paths.validation, "\n".join(lines) + "\n")

    ae_ids = {r.track_id for r in results if r.pred_is_helicopter}
    candidate_ids = set(tracks_by_id) & ({r.track_id for r in results} | set(unclassifiable))
    bl_ids = {tid for tid in candidate_ids
              if vl.rule_based_baseline(tracks_by_id[tid], heli_types)}
    venn = vl.venn_compare(ae_ids, bl_ids)
    _write_text(paths.venn_csv, "both,autoencoder_only,baseline_only\n"
                f"{venn.both},{venn.autoencoder_only},{venn.baseline_only}\n")
    venn_txt = (
        "predicted-helicopter set overlap\n"
        f"  autoencoder only : {venn.autoencoder_only}\n"
        f"  both methods     : {venn.both}\n"
        f"  baseline only    : {venn.baseline_only}\n"
        f"  autoencoder total: {venn.autoencoder_only + venn.both}\n"
        f"  baseline total   : {venn.baseline_only + venn.both}\n"
    )
    _write_text(paths.venn_txt, venn_txt)

    pseudo = vl.resolve_pseudo_types(records)
    lines = ["track_id,declared_type,model,manufacturer,type_designator"]
    lines += [f"{r.track_id},{r.declared_type or ''},{r.model},{r.manufacturer or ''},"
              f"{r.type_designator or ''}" for r in pseudo]
    _write_text(paths.pseudo_types, "\n".join(lines) + "\n")

    payload = {
        "tp": metrics.tp, "fp": metrics.fp, "fn": metrics.fn, "tn": metrics.tn,
        "unmatched": metrics.unmatched,
        "unclassifiable": len(unclassifiable),
        "precision": metrics.precision,
        "recall": metrics.recall,
        "venn": {"both": venn.both, "autoencoder_only": venn.autoencoder_only,
                 "baseline_only": venn.baseline_only},
    }
    _write_text(paths.metrics, json.dumps(payload, indent=2) + "\n")
    log.info("validation: tp=%d fp=%d fn=%d tn=%d unmatched=%d",
             metrics.tp, metrics.fp, metrics.fn, metrics.tn, metrics.unmatched)


def cmd_report(args, cfg: dict, paths: Paths) -> None:
    thresholds = json.loads(paths.input("thresholds").read_text(encoding="utf-8"))
    metrics = json.loads(paths.input("metrics").read_text(encoding="utf-8"))
    venn_txt = paths.input("venn_txt").read_text(encoding="utf-8")

    def ratio(value) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    text = (
        "helicopter identification report\n"
        "================================\n\n"
        "thresholds\n"
        f"  reconstruction MAE gate : {thresholds['mae_threshold']!r}"
        f" (percentile {thresholds['percentile']:g})\n"
        f"  runway score gate       : {thresholds['runway_score_threshold']!r}\n\n"
        "registration check (matched tracks)\n"
        f"  tp={metrics['tp']} fp={metrics['fp']} fn={metrics['fn']} tn={metrics['tn']}"
        f" unmatched={metrics['unmatched']} unclassifiable={metrics['unclassifiable']}\n"
        f"  precision: {ratio(metrics['precision'])}\n"
        f"  recall   : {ratio(metrics['recall'])}\n\n"
        + venn_txt
    )
    _write_text(paths.report, text)


# --------------------------------------------------------------------------
# argument parsing and entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotortrack",
        description="Identify helicopter arrival tracks with a convolutional autoencoder.")
    parser.add_argument("--config", help="JSON config file; defaults are used when omitted")
    parser.add_argument("--seed", type=int, help="override the scenario seed (synth)")
    parser.add_argument("--strict", action="store_true",
                        help="abort on the first malformed track line instead of skipping")
    parser.add_argument("--out-dir", help="directory for artifacts (default from config)")
    parser.add_argument("--log-file", help="append timestamped logs to this file")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="generate a synthetic labeled scenario")
    p.add_argument("--helicopters", type=int)
    p.add_argument("--ga", type=int)
    p.add_argument("--commercial", type=int)
    sub.add_parser("train", help="train the autoencoder on labeled helicopter windows")
    p = sub.add_parser("calibrate", help="set the MAE threshold from training errors")
    p.add_argument("--percentile", type=float)
    sub.add_parser("classify", help="classify every track in the tracks file")
    sub.add_parser("validate", help="check predictions against the registration table")
    sub.add_parser("report", help="write a consolidated text report")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "classify": cmd_classify,
    "validate": cmd_validate,
    "report": cmd_report,
}


def _setup_logging(log_file: Optional[str]) -> None:
    log.setLevel(logging.INFO)
    log.handlers.clear()
    stderr = logging.StreamHandler(sys.stderr)
    stderr.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(stderr)
    if log_file:
        fh = logging.FileHandler(log_file)
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(fh)


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging(args.log_file)
    try:
        cfg = load_config(args.config)
        paths = Paths(cfg, args.out_dir)
        paths.out_dir.mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](args, cfg, paths)
    except (CliError, td.TrackDataError, ae.AutoencoderError, idf.IdentifyError,
            sg.ScenarioError, OSError, ValueError) as e:
        log.error("%s", e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
