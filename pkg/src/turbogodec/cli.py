"""Command-line entry point.

Every subcommand resolves its settings from an optional ``key=value`` config
file overridden by flags, validates them, and writes ``manifest.json`` next to
its outputs. Failures exit with status 2 and one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, synth
from .csp_bp import CspParams
from .godec import GodecParams, estimate_cardinality, estimate_rank, godec, turbo_godec
from .hsi_data import (HsiCube, check_mask, convert_raw, flatten, load_cube, load_map,
                       load_mask, normalize, save_cube, save_mask, write_map)
from .metrics import AucReport, auc_report, format_table, roc_3d
from .pipeline import METHODS, detect

# key -> (type, default). Config keys use underscores; flags use dashes.
RUN_KEYS: dict[str, tuple[type, object]] = {
    "input": (str, None),
    "mask": (str, None),
    "out_dir": (str, "."),
    "method": (str, "turbo"),
    "rank": (int, None),
    "card": (int, None),
    "eps": (float, 1e-4),
    "outer_iters": (int, 20),
    "inner_iters": (int, 100),
    "psi00": (float, 0.5),
    "psi01": (float, 0.3),
    "psi10": (float, 0.3),
    "psi11": (float, 0.5),
    "sigma1_sq": (float, None),
    "sigma2_sq": (float, None),
    "damping": (float, 0.5),
    "alpha": (float, 0.4),
    "thresholds": (int, 5001),
    "seed": (int, 0),
    "lowrank": (str, "svd"),
    "normalize": (bool, False),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class CliError(Exception):
    """A user-facing failure, reported as ``kind`` plus message."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _coerce(key: str, value, typ):
    if value is None or isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if typ is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
    except ValueError:
        raise CliError("config", f"{key}: cannot parse {text!r} as {typ.__name__}") from None
    return text


def _read_config(path) -> list[tuple[str, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}") from None
    try:
        return synth.parse_kv(text)
    except ValueError as exc:
        raise CliError("config", f"{path}: {exc}") from None


def resolve(args: argparse.Namespace, extra_keys=()) -> tuple[dict, list[tuple[str, str]]]:
    """Merge config-file values and flags (flags win).

    Returns the resolved run settings plus any config pairs whose keys are in
    ``extra_keys`` (scene keys for ``synth``).
    """
    from_file: dict = {}
    extra: list[tuple[str, str]] = []
    if args.config:
        for key, value in _read_config(args.config):
            if key in RUN_KEYS:
                from_file[key] = value
            elif key in extra_keys:
                extra.append((key, value))
            else:
                raise CliError("config", f"unknown config key {key!r}")
    cfg = {}
    for key, (typ, default) in RUN_KEYS.items():
        flag = getattr(args, key, None)
        value = flag if flag is not None else from_file.get(key, default)
        cfg[key] = _coerce(key, value, typ)
    return cfg, extra


# -- parameter construction -------------------------------------------------

def _csp_params(cfg: dict) -> CspParams:
    return CspParams(psi00=cfg["psi00"], psi01=cfg["psi01"], psi10=cfg["psi10"],
                     psi11=cfg["psi11"], sigma1_sq=cfg["sigma1_sq"],
                     sigma2_sq=cfg["sigma2_sq"], damping=cfg["damping"],
                     inner_iters=cfg["inner_iters"])


def _godec_params(cfg: dict, X) -> GodecParams:
    """Fill rank/card from the surrogates if absent, recording them in ``cfg``."""
    if cfg["rank"] is None:
        cfg["rank"] = estimate_rank(X)
    if cfg["card"] is None:
        cfg["card"] = estimate_cardinality(X)
    p = GodecParams(rank=cfg["rank"], card=cfg["card"], eps=cfg["eps"],
                    max_iter=cfg["outer_iters"], seed=cfg["seed"], lowrank=cfg["lowrank"])
    p.check_shape(*np.asarray(X).shape)
    return p


def _validate(cfg: dict) -> None:
    if cfg["method"] not in METHODS:
        raise CliError("config", f"method must be one of {', '.join(METHODS)}")
    if not 0 <= cfg["alpha"] <= 1:
        raise CliError("config", f"alpha must lie in [0, 1], got {cfg['alpha']}")
    if cfg["thresholds"] < 2:
        raise CliError("config", "thresholds must be >= 2")
    _csp_params(cfg)
    # rank/card may be None here; check the rest with placeholders
    GodecParams(rank=cfg["rank"] or 1, card=cfg["card"] or 1, eps=cfg["eps"],
                max_iter=cfg["outer_iters"], seed=cfg["seed"], lowrank=cfg["lowrank"])


def _require(cfg: dict, key: str) -> str:
    if not cfg[key]:
        raise CliError("config", f"--{key.replace('_', '-')} is required")
    return cfg[key]


def _load_input_cube(cfg: dict) -> HsiCube:
    cube = load_cube(_require(cfg, "input"))
    return normalize(cube) if cfg["normalize"] else cube


def _load_checked_mask(cfg: dict, shape) -> np.ndarray:
    mask = load_mask(_require(cfg, "mask"))
    check_mask(mask)
    if mask.shape != tuple(shape):
        raise CliError("shape", f"mask {mask.shape} does not match the {shape} grid")
    return mask


# -- output helpers ---------------------------------------------------------

class Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.dir / name

    def text(self, name: str, content: str) -> None:
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)

    def score_map(self, stem: str, scores) -> None:
        write_map(scores, self.path(stem + ".csv"), "csv")
        write_map(scores, self.path(stem + ".pgm"), "pgm")

    def manifest(self, command: str, cfg: dict, **extra) -> None:
        doc = {"command": command, "version": __version__, "config": cfg,
               **extra, "outputs": sorted(self.names)}
        self.text("manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _roc_csv(curve) -> str:
    lines = ["tau,pd,pf"]
    lines += [f"{t!r},{d!r},{f!r}" for t, d, f in
              zip(curve.taus.tolist(), curve.pd.tolist(), curve.pf.tolist())]
    return "\n".join(lines) + "\n"


def _auc_csv(rows: dict[str, AucReport]) -> str:
    lines = ["method," + AucReport.csv_header()]
    lines += [f"{name},{rep.csv_row()}" for name, rep in rows.items()]
    return "\n".join(lines) + "\n"


# -- subcommands ------------------------------------------------------------

SCENE_KEYS = {"height", "width", "channels", "rank", "dispersed_count", "dispersed_amplitude",
              "noise_sigma", "cluster", "random_clusters"}

DEFAULT_SCENE = [("height", "40"), ("width", "40"), ("channels", "50"), ("rank", "3"),
                 ("noise_sigma", "0.09"), ("random_clusters", "6,0.3,2,3")]


def cmd_synth(args) -> None:
    # scene 'rank' is the background rank, so it is routed to the scene first
    scene_pairs = []
    run_pairs = []
    if args.config:
        for key, value in _read_config(args.config):
            (scene_pairs if key in SCENE_KEYS else run_pairs).append((key, value))
    args.config = None
    cfg, _ = resolve(args)
    for key, value in run_pairs:
        if key not in RUN_KEYS:
            raise CliError("config", f"unknown config key {key!r}")
        if getattr(args, key, None) is None:
            cfg[key] = _coerce(key, value, RUN_KEYS[key][0])
    scene_pairs = scene_pairs or list(DEFAULT_SCENE)
    try:
        spec = synth.scene_spec_from_pairs(scene_pairs + [("seed", str(cfg["seed"]))])
        scene = synth.make_scene(spec)
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    out = Outputs(cfg["out_dir"])
    save_cube(scene.cube, out.path("cube.hsic"))
    save_mask(scene.mask, out.path("mask.csv"))
    out.text("scene.cfg", synth.format_scene_config(spec))
    # ground-truth rank/cardinality, usable as --config for later runs
    out.text("run.cfg", f"rank={spec.rank}\ncard={int(scene.mask.sum())}\n")
    out.manifest("synth", {"seed": cfg["seed"], "out_dir": cfg["out_dir"]},
                 scene=synth.format_scene_config(spec).splitlines())


def cmd_decompose(args) -> None:
    cfg, _ = resolve(args)
    _validate(cfg)
    if cfg["method"] == "grx":
        raise CliError("config", "decompose needs method lsmad or turbo")
    cube = _load_input_cube(cfg)
    X = flatten(cube)
    params = _godec_params(cfg, X)
    res = godec(X, params) if cfg["method"] == "lsmad" else turbo_godec(X, params, _csp_params(cfg))
    h, w, c = cube.shape
    out = Outputs(cfg["out_dir"])
    save_cube(HsiCube(res.L.reshape(h, w, c)), out.path("L.hsic"))
    save_cube(HsiCube(res.S.reshape(h, w, c)), out.path("S.hsic"))
    save_mask(res.support.reshape(h, w).astype(np.uint8), out.path("support.csv"))
    if res.J is not None:
        out.score_map("J", res.J)
    lines = ["iteration,relative_residual" + (",bp_sweeps" if res.bp_sweeps else "")]
    for i, r in enumerate(res.residual_history):
        row = f"{i + 1},{r!r}"
        if res.bp_sweeps:
            row += f",{res.bp_sweeps[i]}"
        lines.append(row)
    out.text("residuals.csv", "\n".join(lines) + "\n")
    out.manifest("decompose", cfg, iterations_used=res.iterations_used)


def _detect(cfg: dict, cube: HsiCube, method: str):
    params = None if method == "grx" else _godec_params(cfg, flatten(cube))
    csp = _csp_params(cfg) if method == "turbo" else None
    return detect(cube, method, params, csp, cfg["alpha"])


def cmd_detect(args) -> None:
    cfg, _ = resolve(args)
    _validate(cfg)
    cube = _load_input_cube(cfg)
    det = _detect(cfg, cube, cfg["method"])
    out = Outputs(cfg["out_dir"])
    out.score_map("scores", det.scores)
    out.manifest("detect", cfg)


def cmd_eval(args) -> None:
    cfg, _ = resolve(args)
    _validate(cfg)
    scores = load_map(_require(cfg, "input"))
    mask = _load_checked_mask(cfg, scores.shape)
    try:
        curve = roc_3d(scores, mask, cfg["thresholds"])
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    rows = {"scores": auc_report(curve)}
    out = Outputs(cfg["out_dir"])
    out.text("auc.csv", _auc_csv(rows))
    out.text("auc.txt", format_table(rows))
    out.text("roc.csv", _roc_csv(curve))
    out.manifest("eval", cfg)


def cmd_compare(args) -> None:
    cfg, _ = resolve(args)
    _validate(cfg)
    cube = _load_input_cube(cfg)
    mask = _load_checked_mask(cfg, cube.shape[:2])
    out = Outputs(cfg["out_dir"])
    rows = {}
    for method in METHODS:
        det = _detect(cfg, cube, method)
        out.score_map(f"scores_{method}", det.scores)
        curve = roc_3d(det.scores, mask, cfg["thresholds"])
        out.text(f"roc_{method}.csv", _roc_csv(curve))
        rows[method] = auc_report(curve)
    out.text("compare.csv", _auc_csv(rows))
    out.text("compare.txt", format_table(rows))
    cfg["method"] = ",".join(METHODS)
    out.manifest("compare", cfg)


def cmd_convert(args) -> None:
    cfg, _ = resolve(args)
    for dim in ("height", "width", "channels"):
        if getattr(args, dim) is None or getattr(args, dim) < 1:
            raise CliError("config", f"--{dim} must be a positive integer")
    cube = convert_raw(_require(cfg, "input"), args.height, args.width, args.channels,
                       args.dtype, args.interleave)
    if cfg["normalize"]:
        cube = normalize(cube)
    out = Outputs(cfg["out_dir"])
    save_cube(cube, out.path("cube.hsic"))
    out.manifest("convert", cfg, height=args.height, width=args.width,
                 channels=args.channels, dtype=args.dtype, interleave=args.interleave)


# -- argument parsing -------------------------------------------------------

def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="turbogodec",
                                     description="Low-rank + sparse hyperspectral anomaly detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    for key, (typ, _default) in RUN_KEYS.items():
        if typ is bool:
            common.add_argument(_flag(key), dest=key, default=None, action="store_const", const=True)
        else:
            common.add_argument(_flag(key), dest=key, default=None, type=str,
                                choices=METHODS if key == "method" else None)
    common.add_argument("--config", default=None, help="key=value file; flags override it")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a seeded synthetic scene")
    sub.add_parser("decompose", parents=[common], help="low-rank + sparse decomposition")
    sub.add_parser("detect", parents=[common], help="anomaly score map")
    sub.add_parser("eval", parents=[common], help="3D-ROC AUC report for a score map")
    sub.add_parser("compare", parents=[common], help="all methods side by side on one scene")
    conv = sub.add_parser("convert", parents=[common], help="headerless raw cube to HSIC")
    conv.add_argument("--height", type=int)
    conv.add_argument("--width", type=int)
    conv.add_argument("--channels", type=int)
    conv.add_argument("--dtype", default="<f8")
    conv.add_argument("--interleave", choices=("bsq", "bil", "bip"), default="bsq")
    return parser


COMMANDS = {"synth": cmd_synth, "decompose": cmd_decompose, "detect": cmd_detect,
            "eval": cmd_eval, "compare": cmd_compare, "convert": cmd_convert}


def _fail(kind: str, message: str) -> int:
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.kind, str(exc))
    except FileNotFoundError as exc:
        return _fail("io", str(exc))
    except OSError as exc:
        return _fail("io", f"{exc.filename}: {exc.strerror}")
    except ValueError as exc:
        return _fail("input", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
