"""Command-line front end: ``python -m tubalsr <command> --config cfg.json``.

Every command reads a JSON config (validated against a schema, defaults
filled in), writes its artifacts into a run directory named after the hash
of the resolved config, and prints a JSON summary on stdout. Failures print
a JSON error object on stderr and exit with a code per failure class.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .adversarial import TganConfig, TrainingDiverged, save_models, train_tgan, write_history_csv
from .dictionary import load_pair, save_dictionary, save_pair, train_dictionary
from .io import read_tns3, write_json, write_rows_csv, write_tns3
from .localization import (
    ClassifierConfig,
    classify,
    error_cdf,
    loc_error,
    noisy_queries,
    save_classifier,
    train_classifier,
    wknn_locate,
    write_cdf_csv,
)
from .radiomap import RadioMap
from .sparse import IstaConfig
from .superres import (
    block_mask,
    consistency_error,
    downsample,
    pair_samples,
    psnr,
    super_resolve,
    train_sr_pair,
    upsample_interp,
)
from .synth import PathLossParams, gen_low_tubal_rank, gen_radiomap, paper_scenario, random_aps
from .tensor import components_for_energy, energy_cdf, unfolding_energy_cdf


EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_INVALID = 4
EXIT_SOLVER = 5


class ConfigError(ValueError):
    pass


# --- schemas and defaults ------------------------------------------------------

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}
_PAIR_NUM = {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2}
_PAIR_INT = {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2}
_FRAC = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_MASK = _obj({"block": _POS_INT, "train_frac": _FRAC})
_PATH_LOSS = _obj({"tx_power_dbm": _NUM, "gamma": _POS, "d0": _POS, "sigma_db": {"type": "number", "minimum": 0},
                   "corr_length": _POS})
_SR = _obj({
    "s": {"type": "integer", "minimum": 2}, "coarse_patch": _PAIR_INT, "stride": _POS_INT,
    "train_stride": _POS_INT, "dense": _BOOL, "center": _BOOL, "r": _POS_INT, "lambda": _POS,
    "iters": _POS_INT, "ista_iters": _POS_INT, "max_iters": _POS_INT,
})
_TGAN = _obj({
    "eta": {"type": "number", "minimum": 0}, "lr": _POS, "disc_lr": _POS, "momentum": {"type": "number", "minimum": 0},
    "epochs": {"type": "integer", "minimum": 0}, "batch_size": _POS_INT, "disc_warmup": {"type": "integer", "minimum": 0},
    "lista_iters": _POS_INT, "hidden": _PAIR_INT, "holdout_frac": _FRAC,
})
_CLF = _obj({"hidden": _POS_INT, "lr": _POS, "momentum": {"type": "number", "minimum": 0},
             "epochs": {"type": "integer", "minimum": 0}, "batch_size": _POS_INT,
             "noise_db": {"type": "number", "minimum": 0}})

SR_DEFAULTS = {
    "s": 2, "coarse_patch": [4, 4], "stride": 2, "train_stride": 1, "dense": False, "center": True,
    "r": 32, "lambda": 0.001, "iters": 10, "ista_iters": 200, "max_iters": 1000,
}
MASK_DEFAULTS = {"block": 8, "train_frac": 0.7}

SCHEMAS = {
    "synth": _obj({
        "seed": _INT, "kind": {"enum": ["radiomap", "paper_scenario", "low_tubal_rank"]},
        "region": _PAIR_NUM, "spacing": _POS, "n_aps": _POS_INT,
        "ap_positions": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                         "minItems": 1},
        "path_loss": _PATH_LOSS,
        "dims": {"type": "array", "items": _POS_INT, "minItems": 3, "maxItems": 3},
        "rank": {"type": "integer", "minimum": 0},
    }, ["kind"]),
    "svd-report": _obj({"seed": _INT, "tensor": _STR, "center": _BOOL, "level": _FRAC,
                        "mode": {"enum": [1, 2, 3]}}, ["tensor"]),
    "train-dict": _obj({"seed": _INT, "map": _STR, "samples": _STR, "mask": _MASK, "sr": _SR,
                        "track_psnr": _BOOL}),
    "super-resolve": _obj({"seed": _INT, "map": _STR, "pair": _STR, "mask": _MASK, "lambda": _POS,
                           "max_iters": _POS_INT}, ["map", "pair"]),
    "train-tgan": _obj({"seed": _INT, "map": _STR, "pair": _STR, "mask": _MASK, "lambda": _POS,
                        "tgan": _TGAN}, ["map", "pair"]),
    "localize": _obj({"seed": _INT, "map": _STR, "s": {"type": "integer", "minimum": 2}, "mask": _MASK, "sr": _SR,
                      "k": _POS_INT, "noise_db": {"type": "number", "minimum": 0}, "draws": _POS_INT,
                      "classifier": _CLF}),
    "pipeline": _obj({
        "seed": _INT, "sr_region": _PAIR_NUM, "sr_spacing": _POS, "sr_aps": _POS_INT, "mask": _MASK, "sr": _SR,
        "tgan": _TGAN, "localize": _obj({"mask": _MASK, "sr": _SR, "k": _POS_INT,
                                         "noise_db": {"type": "number", "minimum": 0}, "draws": _POS_INT,
                                         "classifier": _CLF}),
    }),
}


def validate(command, cfg):
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None


def _merged(defaults, given):
    out = dict(defaults)
    out.update(given or {})
    return out


def _need(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _load_map(stem):
    _need(f"{stem}.tns3")
    _need(f"{stem}.json")
    return RadioMap.load(stem)


def _mask_for(m, mask_cfg, seed):
    mc = _merged(MASK_DEFAULTS, mask_cfg)
    return block_mask(m.shape[:2], mc["block"], mc["train_frac"], seed)


def _ista(lam, iters):
    return IstaConfig(lam=lam, max_iters=iters, rel_tol=1e-10)


def _train_pair(m, mask, sr, seed, callback=None):
    return train_sr_pair(
        m, sr["s"], mask, tuple(sr["coarse_patch"]), sr["stride"], r=sr["r"], lam=sr["lambda"], iters=sr["iters"],
        seed=seed, train_stride=sr["train_stride"], ista=_ista(sr["lambda"], sr["ista_iters"]),
        dense=sr["dense"], center=sr["center"], callback=callback,
    )


# --- commands ----------------------------------------------------------------


def cmd_synth(cfg, out, seed):
    kind = cfg["kind"]
    if kind == "low_tubal_rank":
        dims = cfg.get("dims", [8, 8, 4])
        rank = cfg.get("rank", 2)
        t = gen_low_tubal_rank(*dims, rank, seed)
        write_tns3(out / "tensor.tns3", t)
        write_json(out / "tensor.json", {"shape": list(t.shape), "rank": rank, "seed": seed})
        return {"tensor": "tensor.tns3", "shape": list(t.shape)}
    if kind == "paper_scenario":
        m = paper_scenario(seed, cfg.get("path_loss", {}).get("sigma_db", 4.0), cfg.get("spacing", 1.0))
    else:
        region = tuple(cfg.get("region", [16.0, 32.0]))
        aps = np.asarray(cfg["ap_positions"]) if "ap_positions" in cfg else random_aps(region, cfg.get("n_aps", 10), seed)
        params = PathLossParams(ap_positions=aps, seed=seed, **cfg.get("path_loss", {}))
        m = gen_radiomap(region, cfg.get("spacing", 0.5), params)
    m.save(out / "map")
    return {"map": "map", "shape": list(m.shape)}


def cmd_svd_report(cfg, out, seed):
    t = read_tns3(_need(cfg["tensor"]))
    center = cfg.get("center", False)
    level = cfg.get("level", 0.95)
    mode = cfg.get("mode", 3)
    tc = energy_cdf(t, center=center)
    mc = unfolding_energy_cdf(t, mode=mode, center=center)
    n = max(len(tc), len(mc))
    # past its last component a CDF stays at 1
    rows = [(i + 1, float(tc[min(i, len(tc) - 1)]), float(mc[min(i, len(mc) - 1)])) for i in range(n)]
    write_rows_csv(out / "svd_cdf.csv", ["component", "tsvd_cdf", "matrix_svd_cdf"], rows)
    summary = {
        "level": level, "center": center, "unfolding_mode": mode,
        "tsvd_components": components_for_energy(tc, level),
        "matrix_svd_components": components_for_energy(mc, level),
    }
    write_json(out / "summary.json", summary)
    return summary


def _psnr_rows(truth, est, mask):
    rows = [("all", psnr(truth, est))]
    if mask is not None:
        rows += [("train", psnr(truth, est, mask)), ("heldout", psnr(truth, est, ~mask))]
    return rows


def cmd_train_dict(cfg, out, seed):
    sr = _merged(SR_DEFAULTS, cfg.get("sr"))
    if "samples" in cfg:
        x = read_tns3(_need(cfg["samples"]))
        d = train_dictionary(x, sr["r"], sr["lambda"], sr["iters"], seed=seed,
                             ista=_ista(sr["lambda"], sr["ista_iters"]))
        save_dictionary(out / "dictionary", d)
        write_rows_csv(out / "trace.csv", ["iteration", "objective"], list(enumerate(d.trace)))
        return {"dictionary": "dictionary", "final_objective": d.trace[-1]}
    if "map" not in cfg:
        raise ConfigError("train-dict needs either 'map' or 'samples'")
    m = _load_map(cfg["map"])
    mask = _mask_for(m, cfg.get("mask"), seed)
    coarse = downsample(m, sr["s"])
    curve = []

    def track(it, pair):
        est = super_resolve(coarse, pair, _ista(sr["lambda"], sr["max_iters"]))
        curve.append((it, psnr(m, est, ~mask)))

    pair = _train_pair(m, mask, sr, seed, track if cfg.get("track_psnr", False) else None)
    save_pair(out / "pair", pair)
    write_rows_csv(out / "trace.csv", ["iteration", "objective"], list(enumerate(pair.fine.trace)))
    summary = {"pair": "pair", "final_objective": pair.fine.trace[-1]}
    if curve:
        base = psnr(m, upsample_interp(coarse, sr["s"]), ~mask)
        write_rows_csv(out / "psnr_by_iteration.csv", ["iteration", "sr_psnr_heldout", "bilinear_psnr_heldout"],
                       [(it, p, base) for it, p in curve])
        summary["final_heldout_psnr"] = curve[-1][1]
    return summary


def cmd_super_resolve(cfg, out, seed):
    m = _load_map(cfg["map"])
    pair = load_pair(_need(cfg["pair"]))
    lam = cfg.get("lambda", pair.fine.meta.get("lambda", SR_DEFAULTS["lambda"]))
    mask = _mask_for(m, cfg.get("mask"), seed)
    coarse = downsample(m, pair.scale)
    est = super_resolve(coarse, pair, _ista(lam, cfg.get("max_iters", SR_DEFAULTS["max_iters"])))
    methods = {
        "sparse_coding": est,
        "bilinear": upsample_interp(coarse, pair.scale),
        "bilinear_center": upsample_interp(coarse, pair.scale, "center"),
    }
    est.save(out / "sr_map")
    methods["bilinear"].save(out / "bilinear_map")
    rows = [(name, region, p) for name, e in methods.items() for region, p in _psnr_rows(m, e, mask)]
    write_rows_csv(out / "psnr.csv", ["method", "region", "psnr_db"], rows)
    held = {name: p for name, region, p in rows if region == "heldout"}
    return {"heldout_psnr": held, "margin_db": held["sparse_coding"] - held["bilinear"],
            "consistency_rmse": consistency_error(coarse, est)}


def cmd_train_tgan(cfg, out, seed):
    m = _load_map(cfg["map"])
    pair = load_pair(_need(cfg["pair"]))
    lam = cfg.get("lambda", pair.fine.meta.get("lambda", SR_DEFAULTS["lambda"]))
    mask = _mask_for(m, cfg.get("mask"), seed)
    tc = dict(cfg.get("tgan", {}))
    if "hidden" in tc:
        tc["hidden"] = tuple(tc["hidden"])
    tcfg = TganConfig(seed=seed, **tc)
    fine_s, coarse_s = pair_samples(m, pair, mask)
    res = train_tgan(fine_s, coarse_s, pair, tcfg, lam=lam)
    save_models(out / "models", res)
    write_history_csv(out / "history.csv", res.history)
    coarse = downsample(m, pair.scale)
    plain = super_resolve(coarse, pair, _ista(lam, SR_DEFAULTS["max_iters"]))
    refined = super_resolve(coarse, pair, generator=res.refiner)
    rows = [(name, region, p) for name, e in (("sparse_coding", plain), ("refined", refined))
            for region, p in _psnr_rows(m, e, mask)]
    write_rows_csv(out / "psnr.csv", ["method", "region", "psnr_db"], rows)
    hist = res.history
    return {
        "initial_disc_accuracy": hist[0]["disc_accuracy"] if hist else None,
        "final_disc_accuracy": hist[-1]["disc_accuracy"] if hist else None,
        "final_content_loss": hist[-1]["content_loss"] if hist else None,
    }


# the 6 x 16 scenario only fits small patches; dense pairs make up for its size
LOC_SR_DEFAULTS = dict(SR_DEFAULTS, coarse_patch=[2, 2], stride=1, dense=True, r=16, **{"lambda": 0.01})
LOC_MASK_DEFAULTS = {"block": 2, "train_frac": 0.7}


def cmd_localize(cfg, out, seed):
    """Weighted KNN and cell classifiers with and without SR-generated samples.

    The fine map (the 6 x 16 x 14 scenario unless ``map`` is given) is the
    ground truth; the coarse map is its block-mean survey. Queries are every
    fine RP plus Gaussian noise.
    """
    m = _load_map(cfg["map"]) if "map" in cfg else paper_scenario(seed)
    sr = _merged(LOC_SR_DEFAULTS, cfg.get("sr"))
    mc = _merged(LOC_MASK_DEFAULTS, cfg.get("mask"))
    mask = block_mask(m.shape[:2], mc["block"], mc["train_frac"], seed)
    k = cfg.get("k", 3)
    ccfg = ClassifierConfig(seed=seed, **cfg.get("classifier", {}))
    coarse = downsample(m, sr["s"])
    pair = _train_pair(m, mask, sr, seed)
    est = super_resolve(coarse, pair, _ista(sr["lambda"], sr["max_iters"]))
    queries, truth = noisy_queries(m, cfg.get("noise_db", 2.0), cfg.get("draws", 5), seed=seed + 7919)
    clf_coarse = train_classifier(coarse, cfg=ccfg)
    clf_sr = train_classifier(coarse, aug=est, cfg=ccfg)
    save_classifier(out / "classifier_coarse", clf_coarse)
    save_classifier(out / "classifier_sr", clf_sr)
    locators = {
        "wknn_coarse": lambda q: wknn_locate(q, coarse, k),
        "wknn_sr": lambda q: wknn_locate(q, [coarse, est], k),
        "classifier_coarse": lambda q: classify(clf_coarse, q),
        "classifier_sr": lambda q: classify(clf_sr, q),
    }
    summary = {"sr_psnr": psnr(m, est), "median_error_m": {}}
    for name, loc in locators.items():
        errors = [loc_error(loc(q), xy) for q, xy in zip(queries, truth)]
        write_cdf_csv(out / f"cdf_{name}.csv", error_cdf(errors))
        summary["median_error_m"][name] = float(np.median(errors))
    write_json(out / "summary.json", summary)
    return summary


def cmd_pipeline(cfg, out, seed):
    """Run every experiment stage from one seed, each in its own subdirectory."""
    timings = {}
    summary = {}

    def stage(name, fn, sub_cfg):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        summary[name] = fn(sub_cfg, d, seed)
        timings[name] = time.perf_counter() - t0

    region = cfg.get("sr_region", [16.0, 32.0])
    stage("synth_sr_map", cmd_synth, {"kind": "radiomap", "region": region, "spacing": cfg.get("sr_spacing", 0.5),
                                      "n_aps": cfg.get("sr_aps", 10)})
    stage("synth_scenario", cmd_synth, {"kind": "paper_scenario"})
    stage("svd_report", cmd_svd_report, {"tensor": str(out / "synth_scenario" / "map.tns3"), "center": True})
    sr_map = str(out / "synth_sr_map" / "map")
    common = {"map": sr_map, "mask": cfg.get("mask", {})}
    stage("train_dict", cmd_train_dict, dict(common, sr=cfg.get("sr", {}), track_psnr=True))
    pair_dir = str(out / "train_dict" / "pair")
    stage("super_resolve", cmd_super_resolve, dict(common, pair=pair_dir))
    stage("train_tgan", cmd_train_tgan, dict(common, pair=pair_dir, tgan=cfg.get("tgan", {})))
    stage("localize", cmd_localize, dict(cfg.get("localize", {}), map=str(out / "synth_scenario" / "map")))
    write_json(out / "timings.json", timings)
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "svd-report": cmd_svd_report,
    "train-dict": cmd_train_dict,
    "super-resolve": cmd_super_resolve,
    "train-tgan": cmd_train_tgan,
    "localize": cmd_localize,
    "pipeline": cmd_pipeline,
}


# --- driver ------------------------------------------------------------------


def _resolve_paths(cfg, base):
    # relative file references are taken relative to the config file
    out = {}
    for key, val in cfg.items():
        if key in ("map", "pair", "tensor", "samples") and isinstance(val, str) and not os.path.isabs(val):
            val = str(base / val)
        out[key] = val
    return out


def config_hash(command, cfg, seed):
    blob = json.dumps({"command": command, "config": cfg, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _artifacts(run_dir):
    files = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name not in ("manifest.json", "timings.json"))
    return {str(p.relative_to(run_dir)): hashlib.sha256(p.read_bytes()).hexdigest() for p in files}


def run(command, cfg, seed, out_root):
    """Validate, execute and record one command; returns the run directory and summary."""
    validate(command, cfg)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    cfg = dict(cfg, seed=seed)
    run_dir = Path(out_root) / f"{command}-{config_hash(command, cfg, seed)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = COMMANDS[command](cfg, run_dir, seed)
    elapsed = time.perf_counter() - t0
    manifest = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "summary": summary,
        "versions": {"tubalsr": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "artifacts": _artifacts(run_dir),
    }
    write_json(run_dir / "manifest.json", _jsonable(manifest))
    if command != "pipeline":
        write_json(run_dir / "timings.json", {command: elapsed})
    return run_dir, summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="tubalsr", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (defaults are used for omitted fields)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", default="runs", help="root directory for run directories")
    p.add_argument("--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg_path = _need(args.config)
            try:
                cfg = json.loads(cfg_path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{cfg_path}: not valid JSON ({exc})") from None
            if not isinstance(cfg, dict):
                raise ConfigError("config must be a JSON object")
            cfg = _resolve_paths(cfg, cfg_path.parent)
        else:
            cfg = {}
        threads = os.environ.get("TUBALSR_THREADS")
        limit = None
        if threads:
            if not threads.isdigit() or int(threads) < 1:
                raise ConfigError(f"TUBALSR_THREADS must be a positive integer, got {threads!r}")
            limit = int(threads)
        with threadpool_limits(limits=limit):
            run_dir, summary = run(args.command, cfg, args.seed, args.out)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), EXIT_MISSING)
    except ConfigError as exc:
        return _fail("invalid_config", str(exc), EXIT_INVALID)
    except (FloatingPointError, np.linalg.LinAlgError, TrainingDiverged) as exc:
        return _fail("solver_failure", f"{type(exc).__name__}: {exc}", EXIT_SOLVER)
    except ValueError as exc:
        return _fail("invalid_input", str(exc), EXIT_INVALID)
    except Exception as exc:  # noqa: BLE001 - last-resort report
        return _fail("unexpected", f"{type(exc).__name__}: {exc}", EXIT_UNEXPECTED)
    print(json.dumps({"run_dir": str(run_dir), "summary": _jsonable(summary)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
