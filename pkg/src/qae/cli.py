"""Command-line driver: ``qae prep|train|eval|reconstruct|sweep``.

Configs are INI files with ``[model]``, ``[data]`` and ``[training]``
sections; unknown sections or keys are errors.  Every command writes a
``manifest.json`` into ``--out`` before any result file.  Metric reports hold
no timings (those go to ``timing.json``) so that re-running a command with
the same config and seed reproduces them byte for byte.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, load_mnist, locate_mnist, sha256_file
from .encoding import dumps_reducer, loads_reducer
from .pipeline import evaluate, fit_pixel_reducer, prepare
from .sim import ValidationError
from .training import TrainConfig, dumps_params, loads_params, train

log = logging.getLogger("qae")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
PREP_QUBITS = (8, 16)


class ConfigError(Exception):
    pass


class NumericError(Exception):
    pass


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------

def _to_bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _to_classes(v: str) -> tuple:
    return tuple(int(t) for t in v.replace(",", " ").split())


SCHEMA = {
    "model": {
        "architecture": str, "layers": int, "conv_type": int, "pool_kind": str,
        "n_qubits": int, "mode": str, "tied_decoder": _to_bool,
    },
    "data": {
        "encoding": str, "classes": _to_classes, "data_dir": str, "prep_dir": str,
        "test_count": int, "split_seed": int,
    },
    "training": {
        "loss": str, "learning_rate": float, "batch_size": int, "iterations": int,
        "seed": int, "gradient": str, "runs": int,
    },
}
RUN_KEYS = {"data_dir", "prep_dir", "test_count", "split_seed", "runs"}


@dataclass
class RunConfig:
    """A :class:`TrainConfig` plus the data and sweep settings around it."""

    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: str = "data/mnist"
    prep_dir: str | None = None
    test_count: int = 400
    split_seed: int | None = None
    runs: int = 8

    def as_dict(self) -> dict:
        return {"train": self.train.as_dict(), "data_dir": self.data_dir,
                "prep_dir": self.prep_dir, "test_count": self.test_count,
                "split_seed": self.split_seed, "runs": self.runs}


def _key_lines(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            continue
        for sep in "=:":
            if sep in s:
                lines[(section, s.split(sep, 1)[0].strip().lower())] = i
                break
    return lines


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    where = _key_lines(text)

    def loc(section, key=None):
        line = where.get((section, key)) if key else None
        return f"{source}:{line}" if line else source

    train_kw, run_kw = {}, {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}] "
                              f"(expected {', '.join(SCHEMA)})")
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"{loc(section, key)}: unknown key {key!r} in [{section}]")
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{loc(section, key)}: {key}: {exc}") from None
            (run_kw if key in RUN_KEYS else train_kw)[key] = value
    section_of = {k: s for s, keys in SCHEMA.items() for k in keys}
    try:
        cfg = TrainConfig(**train_kw)
    except ValidationError as exc:
        name = str(exc).split(":", 1)[0]
        raise ConfigError(f"{loc(section_of.get(name), name)}: {exc}") from None
    for key, lo in (("test_count", 1), ("runs", 1)):
        if key in run_kw and run_kw[key] < lo:
            raise ConfigError(f"{loc('data' if key == 'test_count' else 'training', key)}: "
                              f"{key}: must be >= {lo}")
    return RunConfig(cfg, **run_kw)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dumps_config(rc: RunConfig) -> str:
    """INI text that parses back to ``rc``."""
    t = rc.train.as_dict()
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            if key in t:
                v = t[key]
            else:
                v = getattr(rc, key)
            if v is None:
                continue
            if key == "classes":
                v = ",".join(map(str, v))
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{key} = {v}")
        lines.append("")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _fmt_float(v: float) -> str:
    if not math.isfinite(v):
        raise NumericError(f"non-finite value {v!r} in report")
    s = format(v, ".17g")
    # keep floats recognisable as floats
    return s if any(c in s for c in ".en") else s + ".0"


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(to_json(v, indent) for v in obj) + "]"
        items = [inner + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _input_hashes(rc: RunConfig, extra: dict | None = None) -> dict:
    inputs = {"config": git_blob_hash(dumps_config(rc).encode())}
    try:
        paths = locate_mnist(rc.data_dir)
    except DataError:
        paths = {}
    for key, p in sorted(paths.items()):
        inputs[p.name] = git_blob_hash(p.read_bytes())
    inputs.update(extra or {})
    return inputs


def write_manifest(out: Path, command: str, rc: RunConfig, outputs: list,
                   extra: dict | None = None, inputs: dict | None = None) -> dict:
    inputs = inputs if inputs is not None else _input_hashes(rc)
    listing = "".join(f"{k} {v}\n" for k, v in sorted(inputs.items())).encode()
    manifest = {
        "tool": "qae",
        "version": __version__,
        "command": command,
        "seed": rc.train.seed,
        "config": rc.as_dict(),
        "inputs": inputs,
        "content_hash": git_blob_hash(listing),
        "outputs": sorted(outputs),
    }
    manifest.update(extra or {})
    write_text(out / "manifest.json", to_json(manifest) + "\n")
    return manifest


def write_bloch_csv(path: Path, points: np.ndarray, labels, phase: str) -> None:
    rows = ["id,label,x,y,z,phase"]
    for i, (p, lab) in enumerate(zip(points, labels)):
        rows.append(f"{i},{int(lab)},{_fmt_float(p[0])},{_fmt_float(p[1])},"
                    f"{_fmt_float(p[2])},{phase}")
    write_text(path, "\n".join(rows) + "\n")


# --------------------------------------------------------------------------
# Shared pipeline steps
# --------------------------------------------------------------------------

def _reducer(rc: RunConfig, train_samples):
    cfg = rc.train
    if cfg.encoding != "angle":
        return None
    if rc.prep_dir:
        path = Path(rc.prep_dir) / f"reducer_{cfg.n_qubits}.txt"
        if path.exists():
            return loads_reducer(path.read_text())
        log.info("no reducer at %s; fitting one", path)
    return fit_pixel_reducer(train_samples, cfg.n_qubits)


def _prepared(rc: RunConfig, cfg: TrainConfig | None = None):
    cfg = cfg or rc.train
    train_s, test_s = load_mnist(rc.data_dir)
    reducer = _reducer(RunConfig(cfg, rc.data_dir, rc.prep_dir), train_s)
    return prepare(cfg, train_s, test_s, reducer, rc.test_count, rc.split_seed)


def _check_finite(name: str, values) -> None:
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise NumericError(f"{name} contains non-finite values")


def _n_params(cfg: TrainConfig) -> int:
    enc = cfg.encoder()
    if cfg.mode == "full_qae" and not cfg.tied_decoder:
        return 2 * enc.n_params
    return enc.n_params


def _metrics(cfg: TrainConfig, result: dict, n_params: int) -> dict:
    keep = ("accuracy", "per_class", "reconstruction_rate", "baseline_reconstruction_rate",
            "plane_normal", "plane_offset", "alpha", "beta", "class_of_zero", "threshold")
    out = {"seed": cfg.seed, "config": cfg.as_dict(), "n_params": n_params}
    out.update({k: result[k] for k in keep if k in result})
    return out


def _train_and_eval(rc: RunConfig, shots: int) -> tuple:
    cfg = rc.train
    prepared = _prepared(rc)
    report = train(cfg, prepared.train_states)
    _check_finite("loss", report.losses)
    _check_finite("parameters", report.params)
    result = evaluate(cfg, prepared, report.params, shots, report.initial_params)
    return prepared, report, result


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_prep(rc: RunConfig, out: Path, download: bool = True) -> dict:
    """Verify (or fetch) MNIST, fit reducers for 8 and 16 qubits, record digests.

    A second call with unchanged data is a no-op.  Existing digests that no
    longer match the data raise :class:`DataError`.
    """
    paths = locate_mnist(rc.data_dir, download=download)
    digests = {p.name: sha256_file(p) for p in paths.values()}
    digest_file = out / "digests.txt"
    reducer_files = [out / f"reducer_{n}.txt" for n in PREP_QUBITS]
    if digest_file.exists():
        recorded = dict(line.split()[::-1] for line in digest_file.read_text().splitlines()
                        if line.strip())
        for name, h in digests.items():
            if name in recorded and recorded[name] != h:
                raise DataError(f"digest mismatch for {name}: recorded {recorded[name]}, "
                                f"found {h}")
        if all(f.exists() and recorded.get(f.name) == sha256_file(f) for f in reducer_files) \
                and all(name in recorded for name in digests):
            log.info("prep: %s is up to date", out)
            return {"changed": False, "digests": recorded}
    write_manifest(out, "prep", rc, ["digests.txt"] + [f.name for f in reducer_files],
                   inputs=_input_hashes(rc))
    train_s, _ = load_mnist(rc.data_dir)
    for n, f in zip(PREP_QUBITS, reducer_files):
        write_text(f, dumps_reducer(fit_pixel_reducer(train_s, n)))
        digests[f.name] = sha256_file(f)
    write_text(digest_file, "".join(f"{h}  {name}\n" for name, h in sorted(digests.items())))
    return {"changed": True, "digests": digests}


def cmd_train(rc: RunConfig, out: Path) -> dict:
    cfg = rc.train
    n_params = _n_params(cfg)
    write_manifest(out, "train", rc, ["params.txt", "report.json", "timing.json"],
                   {"n_params": n_params})
    prepared = _prepared(rc)
    report = train(cfg, prepared.train_states)
    _check_finite("loss", report.losses)
    _check_finite("parameters", report.params)
    write_text(out / "params.txt", dumps_params(report.params))
    body = {"seed": report.seed, "config": cfg.as_dict(), "n_params": report.n_params,
            "iterations": len(report.losses), "final_loss": report.losses[-1],
            "losses": report.losses}
    write_text(out / "report.json", to_json(body) + "\n")
    write_text(out / "timing.json", to_json({"train_seconds": report.wall_time}) + "\n")
    return body


def cmd_eval(rc: RunConfig, out: Path, checkpoint: Path, shots: int = 0) -> dict:
    cfg = rc.train
    if not checkpoint.exists():
        raise DataError(f"checkpoint {checkpoint} does not exist")
    params = loads_params(checkpoint.read_text())
    n_params = _n_params(cfg)
    if params.size != n_params:
        raise ConfigError(f"checkpoint has {params.size} parameters, config expects {n_params}")
    write_manifest(out, "eval", rc, ["metrics.json", "bloch_pre.csv", "bloch_post.csv"],
                   {"n_params": n_params, "shots": shots},
                   _input_hashes(rc, {checkpoint.name: git_blob_hash(checkpoint.read_bytes())}))
    prepared = _prepared(rc)
    result = evaluate(cfg, prepared, params, shots)
    metrics = _metrics(cfg, result, n_params)
    metrics["shots"] = shots
    if "bloch_pre" in result:
        write_bloch_csv(out / "bloch_pre.csv", result["bloch_pre"], prepared.test_labels,
                        "pre_align")
        write_bloch_csv(out / "bloch_post.csv", result["bloch_post"], prepared.test_labels,
                        "post_align")
    write_text(out / "metrics.json", to_json(metrics) + "\n")
    return metrics


def cmd_reconstruct(rc: RunConfig, out: Path, shots: int = 0) -> dict:
    rc = replace(rc, train=replace(rc.train, mode="full_qae"))
    cfg = rc.train
    n_params = _n_params(cfg)
    write_manifest(out, "reconstruct", rc, ["params.txt", "metrics.json", "timing.json"],
                   {"n_params": n_params})
    _, report, result = _train_and_eval(rc, shots)
    metrics = _metrics(cfg, result, n_params)
    metrics.update(final_loss=report.losses[-1], losses=report.losses)
    write_text(out / "params.txt", dumps_params(report.params))
    write_text(out / "metrics.json", to_json(metrics) + "\n")
    write_text(out / "timing.json", to_json({"train_seconds": report.wall_time}) + "\n")
    return metrics


def sweep_run(rc: RunConfig, index: int, shots: int = 0) -> dict:
    """One sweep member: seed = base seed + index."""
    member = replace(rc, train=replace(rc.train, seed=rc.train.seed + index))
    _, report, result = _train_and_eval(member, shots)
    out = _metrics(member.train, result, report.n_params)
    out.update(run=index, final_loss=report.losses[-1], train_seconds=report.wall_time)
    return out


def cmd_sweep(rc: RunConfig, out: Path, workers: int = 1, shots: int = 0) -> dict:
    runs = rc.runs
    seeds = [rc.train.seed + i for i in range(runs)]
    write_manifest(out, "sweep", rc, ["sweep.json", "timing.json"],
                   {"n_params": _n_params(rc.train), "seeds": seeds, "shots": shots})
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, runs)) as pool:
            results = list(pool.map(sweep_run, [rc] * runs, range(runs), [shots] * runs))
    else:
        results = [sweep_run(rc, i, shots) for i in range(runs)]
    timing = {"train_seconds": [r.pop("train_seconds") for r in results]}
    accs = np.array([r["accuracy"] for r in results])
    body = {"runs": runs, "seeds": seeds, "mean_accuracy": float(accs.mean()),
            "std_accuracy": float(accs.std()), "accuracies": accs.tolist()}
    rates = [r["reconstruction_rate"] for r in results if "reconstruction_rate" in r]
    if rates:
        body["mean_reconstruction_rate"] = float(np.mean(rates))
    body["per_run"] = results
    write_text(out / "sweep.json", to_json(body) + "\n")
    write_text(out / "timing.json", to_json(timing) + "\n")
    return body


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qae", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=["prep", "train", "eval", "reconstruct", "sweep"])
    p.add_argument("--config", type=Path, help="INI config file (defaults: QCNN protocol)")
    p.add_argument("--out", type=Path, default=Path("runs/out"), help="output directory")
    p.add_argument("--seed", type=int, help="override [training] seed")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel sweep runs; 1 is the bit-exact reference mode")
    p.add_argument("--shots", type=int, default=0, help="readout shots (0 = exact)")
    p.add_argument("--checkpoint", type=Path,
                   help="params file for eval (default OUT/params.txt)")
    p.add_argument("--runs", type=int, help="override [training] runs for sweep")
    p.add_argument("--no-download", action="store_true", help="prep: never fetch data")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        rc = load_config(args.config)
        if args.seed is not None:
            rc = replace(rc, train=replace(rc.train, seed=args.seed))
        if args.runs is not None:
            rc = replace(rc, runs=args.runs)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.shots < 0:
            raise ConfigError("--shots must be >= 0")
        out = args.out
        if args.command == "prep":
            res = cmd_prep(rc, out, download=not args.no_download)
            print("prep: " + ("wrote reducers and digests" if res["changed"] else "up to date"))
        elif args.command == "train":
            res = cmd_train(rc, out)
            print(f"train: final loss {res['final_loss']:.6f} ({res['n_params']} params)")
        elif args.command == "eval":
            res = cmd_eval(rc, out, args.checkpoint or out / "params.txt", args.shots)
            print(f"eval: accuracy {res['accuracy']:.4f}")
        elif args.command == "reconstruct":
            res = cmd_reconstruct(rc, out, args.shots)
            print(f"reconstruct: rate {res['reconstruction_rate']:.6f}")
        else:
            res = cmd_sweep(rc, out, args.workers, args.shots)
            print(f"sweep: mean accuracy {res['mean_accuracy']:.4f} "
                  f"± {res['std_accuracy']:.4f} over {res['runs']} runs")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ValidationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("done in %.1f s", time.perf_counter() - start)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
