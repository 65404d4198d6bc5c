"""Command-line front end: ``lrsdsar {simulate,reconstruct,autofocus,bench,export} CONFIG``.

Outputs go to ``output.dir`` resolved under ``$LRSDSAR_OUTPUT_ROOT`` (default:
the current directory); paths that would leave that root are refused.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .baseline import rda_image, solve_conventional
from .config import ConfigError, load_config
from .linops import ForwardModel, Selector, ValidationError, build_partial_dft
from .metrics import bench as run_bench
from .metrics import image_entropy, phase_mse
from .patch import PatchConfig
from .simkit import SceneSpec, simulate
from .solver import ISAR_SPARSE, DiagnosticsWriter, SolverConfig, solve

log = logging.getLogger("lrsdsar")

ENV_ROOT = "LRSDSAR_OUTPUT_ROOT"
EXIT_OK, EXIT_MAX_ITER, EXIT_ERROR = 0, 2, 1


class OutputDir:
    """Guarded writer: every path must resolve inside the output directory."""

    def __init__(self, rel: str):
        root = Path(os.environ.get(ENV_ROOT, ".")).resolve()
        target = (root / rel).resolve()
        if not target.is_relative_to(root):
            raise ValidationError(f"output dir {rel!r} escapes the output root {root}")
        self.root = root
        self.dir = target

    def path(self, name: str) -> Path:
        p = (self.dir / name).resolve()
        if not p.is_relative_to(self.dir):
            raise ValidationError(f"refusing to write {name!r} outside {self.dir}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_json(self, name: str, obj) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p


# ------------------------------------------------------------------ helpers


def _snr(cfg) -> float:
    v = cfg["noise"]["snr_db"]
    return math.inf if v is None else float(v)


def _simulate(cfg, side=None, snr_db=None):
    sc = cfg["scene"]
    side = side or sc["side"]
    pe = cfg["phase_error"]
    kind, peak = (pe["kind"], pe["peak"]) if pe["kind"] != "none" else ("quadratic", 0.0)
    radar = cfg["radar"]
    n_az = radar["n_azimuth"] if side == sc["side"] else None
    n_rg = radar["n_range"] if side == sc["side"] else None
    return simulate(
        SceneSpec(side, sc["n_targets"], sc["target_amp"], sc["background"], sc["rank"], cfg.seed),
        n_azimuth=n_az,
        n_range=n_rg,
        azimuth_ratio=cfg["sampling"]["azimuth_ratio"],
        range_ratio=cfg["sampling"]["range_ratio"],
        sampling_mode=cfg["sampling"]["mode"],
        phase_kind=kind,
        phase_peak=peak,
        snr_db=_snr(cfg) if snr_db is None else snr_db,
        seed=cfg.seed,
    )


def _solver_config(cfg, **over) -> SolverConfig:
    s = dict(cfg["solver"])
    s.update(over)
    return SolverConfig(**s)


def _patch(cfg, side):
    if cfg["solver"]["mode"] == ISAR_SPARSE:
        return None
    p = cfg["patch"]
    return PatchConfig(p["window"], p["step"], side)


def _model_from_meta(meta: dict) -> ForwardModel:
    side = meta["side"]
    dict_a = build_partial_dft(meta["n_azimuth"], side, "centered")
    dict_r = build_partial_dft(meta["n_range"], side, "centered")
    return ForwardModel(
        dict_a,
        dict_r,
        Selector(meta["n_azimuth"], np.array(meta["azimuth_rows"], dtype=int)),
        Selector(meta["n_range"], np.array(meta["range_rows"], dtype=int)),
    )


def _load_problem(cfg, out: OutputDir):
    """(R, nominal model, phase truth or None, dataset or None) from input files or simulation."""
    inp = cfg["input"]
    if inp["phase_history"]:
        if not inp["meta"]:
            raise ConfigError(f"{cfg.path}: input.phase_history needs input.meta")
        base = cfg.path.parent
        R = io.read_cmx(base / inp["phase_history"])
        meta = json.loads((base / inp["meta"]).read_text())
        truth = np.array(meta["phase_truth"]) if "phase_truth" in meta else None
        return R, _model_from_meta(meta), truth, None
    ds = _simulate(cfg)
    return ds.R, ds.model_nominal, ds.phase_truth, ds


def _meta(ds) -> dict:
    meta = dict(ds.meta)
    meta["phase_truth"] = [float(v) for v in ds.phase_truth]
    return meta


# ----------------------------------------------------------------- commands


def cmd_simulate(cfg, out: OutputDir) -> int:
    ds = _simulate(cfg)
    io.write_cmx(out.path("scene.cmx"), ds.scene)
    io.write_cmx(out.path("phase_history.cmx"), ds.R)
    io.write_phases_csv(out.path("phase_truth.csv"), ds.phase_truth)
    out.write_json("truth.json", ds.truth.to_json())
    out.write_json("meta.json", _meta(ds))
    log.info("simulated %dx%d scene into %s", ds.scene.shape[0], ds.scene.shape[1], out.dir)
    return EXIT_OK


def cmd_reconstruct(cfg, out: OutputDir) -> int:
    R, model, truth, ds = _load_problem(cfg, out)
    scfg = _solver_config(cfg)
    with DiagnosticsWriter(out.path("diagnostics.jsonl")) as diag:
        res = solve(R, model, _patch(cfg, model.scene_side), scfg, phase_truth=truth, callback=diag)
    if ds is not None:
        io.write_pgm16(out.path("original.pgm"), ds.scene)
    io.write_pgm16(out.path("defocused.pgm"), rda_image(model, R))
    parts = {"S": res.S_image} if scfg.mode == ISAR_SPARSE else {"L": res.L_image, "S": res.S_image, "X": res.X}
    for name, img in parts.items():
        io.write_pgm16(out.path(f"{name}.pgm"), img)
        io.write_cmx(out.path(f"{name}.cmx"), img)
    io.write_phases_csv(out.path("phases.csv"), res.phases)
    summary = {
        "converged": res.converged,
        "iterations": res.iterations,
        "entropy": image_entropy(res.X) if np.any(res.X) else None,
        "entropy_rda": image_entropy(rda_image(model, R)) if np.any(R) else None,
        "scale": res.scale,
    }
    if truth is not None:
        summary["phase_mse"] = phase_mse(res.phases, truth)
    out.write_json("summary.json", summary)
    return EXIT_OK if res.converged else EXIT_MAX_ITER


def cmd_autofocus(cfg, out: OutputDir) -> int:
    """Phase estimates and per-iteration phase MSE for the fast and conventional paths."""
    R, model, truth, _ = _load_problem(cfg, out)
    scfg = _solver_config(cfg, autofocus=True)
    pc = _patch(cfg, model.scene_side)
    runs = {
        "fast": solve(R, model, pc, scfg, phase_truth=truth),
        "conventional": solve_conventional(R, model, pc, scfg, phase_truth=truth),
    }
    for name, res in runs.items():
        io.write_phases_csv(out.path(f"phases_{name}.csv"), res.phases)
    if truth is not None:
        with open(out.path("phase_mse.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", *runs])
            m0 = phase_mse(np.zeros_like(truth), truth)
            w.writerow([0, *([repr(m0)] * len(runs))])
            depth = max(len(r.history) for r in runs.values())
            for k in range(depth):
                row = [k + 1]
                for r in runs.values():
                    h = r.history[min(k, len(r.history) - 1)] if r.history else None
                    row.append(repr(h["phase_mse"]) if h else "")
                w.writerow(row)
    out.write_json("autofocus.json", {n: {"iterations": r.iterations, "converged": r.converged} for n, r in runs.items()})
    return EXIT_OK if all(r.converged for r in runs.values()) else EXIT_MAX_ITER


def cmd_bench(cfg, out: OutputDir) -> int:
    b = cfg["bench"]
    rows = []
    for side in b["sizes"]:
        for snr in b["snrs"]:
            ds = _simulate(cfg, side=side, snr_db=snr)
            pc = None
            if cfg["solver"]["mode"] != ISAR_SPARSE:
                # scale the configured window/step with the scene
                f = side / cfg["scene"]["side"]
                pc = PatchConfig(max(1, int(cfg["patch"]["window"] * f)), max(1, int(cfg["patch"]["step"] * f)), side)
            scfg = _solver_config(cfg, alpha_x=1e-12, max_outer=b["iterations"])
            for method in b["methods"]:
                fn = solve if method == "fast" else solve_conventional
                res = run_bench(lambda: fn(ds.R, ds.model_nominal, pc, scfg), repeats=b["repeats"])
                rows.append({"size": side, "snr_db": snr, "method": method, **res})
                log.info("bench %s size=%d snr=%g: %.1f ms", method, side, snr, res["median_ms"])
    out.write_json("bench.json", {"rows": rows})
    with open(out.path("bench.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "snr_db", "method", "median_ms", "per_iter_ms", "iterations"])
        for r in rows:
            w.writerow([r["size"], r["snr_db"], r["method"], r["median_ms"], r["per_iter_ms"], r["iterations"]])
    return EXIT_OK


def cmd_export(cfg, out: OutputDir) -> int:
    src = cfg["export"]["source"]
    if not src:
        raise ConfigError(f"{cfg.path}: export.source is required")
    M = io.read_cmx(out.path(src))
    stem = Path(src).stem
    if cfg["export"]["format"] == "pgm":
        io.write_pgm16(out.path(f"{stem}.pgm"), M)
    else:
        io.write_complex_csv(out.path(f"{stem}.csv"), M)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "autofocus": cmd_autofocus,
    "bench": cmd_bench,
    "export": cmd_export,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lrsdsar", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="YAML experiment config")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = OutputDir(cfg["output"]["dir"])
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ValidationError, io.FormatError, FileNotFoundError) as exc:
        print(f"lrsdsar: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
