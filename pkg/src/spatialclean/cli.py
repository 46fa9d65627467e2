"""Command-line driver.

Commands: ``clean``, ``detect``, ``generate``, ``eval`` and ``sweep``.

Exit codes:
    0  success
    1  I/O or parse failure (missing file, malformed CSV)
    2  configuration or parameter validation failure

Standard output carries one JSON document per command; human-readable
diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__, pipeline
from .constraints import (
    FORMULATORS,
    KNN,
    CleaningConfig,
    ConfigError,
    DatasetStats,
    Range,
    parse_config,
    render_config,
    schema_for,
    validate_against_schema,
)
from .corrector import write_log
from .dataset import Dataset, DatasetError, read_csv, write_csv
from .detection import detect_errors
from .distance_matrix import build_distance_matrix, index_for
from .evaluation import CHICAGO_BBOX, GroundTruth, evaluate, generate_synthetic
from .formulators import write_jsonl

EXIT_OK, EXIT_IO, EXIT_CONFIG = 0, 1, 2


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _write_json(doc, dest: Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- loading -------------------------------------------------------------------


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CommandError(EXIT_IO, f"cannot read {path}: {exc}") from None


def _load_config(path: str, seed: int | None = None) -> CleaningConfig:
    text = _read_text(path)
    try:
        config = parse_config(text)
        if seed is not None:
            config = dataclasses.replace(config, rng_seed=seed)
    except ConfigError as exc:
        raise CommandError(EXIT_CONFIG, f"{path}: {exc}") from None
    return config


def _load_dataset(path: str, id_col: str = "id") -> Dataset:
    try:
        return read_csv(path, id_col)
    except (OSError, UnicodeDecodeError, csv.Error, DatasetError) as exc:
        raise CommandError(EXIT_IO, f"cannot load {path}: {exc}") from None


def _validate(dataset: Dataset, config: CleaningConfig) -> None:
    stats = DatasetStats(
        len(dataset),
        {t: len({v for v in dataset.column(t) if v is not None})
         for t in config.targets if t in dataset.columns},
    )
    diags = validate_against_schema(config, schema_for(dataset.names, config), stats)
    for d in diags:
        _log(str(d))
    if any(d.level == "error" for d in diags):
        raise CommandError(EXIT_CONFIG, "configuration does not match the input schema")
    for c in config.constraints:
        try:
            dataset.coordinates(c.lat, c.lon)
        except (DatasetError, ValueError) as exc:
            raise CommandError(EXIT_IO, f"bad coordinates: {exc}") from None


def _config_hash(config: CleaningConfig) -> str:
    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot create {path}: {exc}") from None
    return out


def _manifest(args, config, outputs, timings, command) -> dict:
    # everything outside "run" is reproducible byte for byte
    return {
        "command": command,
        "version": __version__,
        "inputs": {"input": args.input, "config": args.config},
        "config_sha256": _config_hash(config),
        "seed": config.rng_seed,
        "formulator": getattr(args, "formulator", None) or config.formulator,
        "outputs": outputs,
        "run": {
            "threads": args.threads,
            "timings_ms": {k: round(v, 3) for k, v in timings.items()},
        },
    }


# -- commands ------------------------------------------------------------------


def cmd_clean(args) -> int:
    config = _load_config(args.config, args.seed)
    data = _load_dataset(args.input, config.id_col)
    _validate(data, config)
    out = _out_dir(args.out)
    result = pipeline.run(
        data, config, formulator=args.formulator, threads=args.threads, exact=args.exact
    )

    outputs = {
        "repaired": "repaired.csv",
        "detection": "detection.json",
        "candidates": "candidates.json",
        "formulator": "formulator.jsonl",
        "repairs": "repairs.csv",
    }
    try:
        write_csv(result.repaired, out / outputs["repaired"])
        _write_json(
            {t: r.detection.report(data) for t, r in result.targets.items()},
            out / outputs["detection"],
        )
        _write_json(
            [c for r in result.targets.values() for c in r.generation.report()],
            out / outputs["candidates"],
        )
        write_jsonl(
            [o for r in result.targets.values() for o in r.outputs.values()],
            out / outputs["formulator"],
        )
        write_log(result.repairs, out / outputs["repairs"])
        if args.dump_matrix:
            single = len(result.targets) == 1
            for target, r in result.targets.items():
                name = "matrix.csv" if single else f"matrix_{target}.csv"
                r.matrix.to_csv(out / name)
                outputs["matrix" if single else f"matrix_{target}"] = name
        outputs["manifest"] = "manifest.json"
        _write_json(_manifest(args, config, outputs, result.timings_ms, "clean"), out / "manifest.json")
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot write outputs: {exc}") from None

    for r in result.targets.values():
        for msg in r.generation.diagnostics:
            _log(f"warning: {msg}")
    changed = sum(1 for r in result.repairs if r.new_value != r.old_value)
    _emit({
        "command": "clean",
        "out": str(out),
        "erroneous": sum(len(r.detection.erroneous) for r in result.targets.values()),
        "auto_labeled": sum(len(r.generation.labels) for r in result.targets.values()),
        "repairs": len(result.repairs),
        "changed": changed,
        "unrepaired": sum(len(r.unrepaired) for r in result.targets.values()),
    })
    return EXIT_OK


def cmd_detect(args) -> int:
    config = _load_config(args.config, args.seed)
    data = _load_dataset(args.input, config.id_col)
    _validate(data, config)
    out = _out_dir(args.out)
    timings = {"index": 0.0, "matrix": 0.0, "detect": 0.0}
    reports = {}
    for target in config.targets:
        matrices = []
        for c in config.constraints:
            if c.target != target:
                continue
            t0 = time.perf_counter()
            index = index_for(data, c)
            t1 = time.perf_counter()
            matrices.append(build_distance_matrix(data, c, index, args.threads)[0])
            t2 = time.perf_counter()
            timings["index"] += (t1 - t0) * 1000
            timings["matrix"] += (t2 - t1) * 1000
        t0 = time.perf_counter()
        reports[target] = detect_errors(data, matrices, target).report(data)
        timings["detect"] += (time.perf_counter() - t0) * 1000
    outputs = {"detection": "detection.json", "manifest": "manifest.json"}
    try:
        _write_json(reports, out / outputs["detection"])
        _write_json(_manifest(args, config, outputs, timings, "detect"), out / "manifest.json")
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot write outputs: {exc}") from None
    _emit({
        "command": "detect",
        "out": str(out),
        "erroneous": {t: r["n_erroneous"] for t, r in reports.items()},
    })
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        data, truth, _ = generate_synthetic(
            args.records, args.regions, args.errors, args.dup,
            bbox=args.bbox, seed=args.seed, null_ratio=args.null_ratio, target=args.target,
        )
    except ValueError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from None
    out = _out_dir(args.out)
    try:
        write_csv(data, out / "dataset.csv")
        truth.write_csv(out / "truth.csv")
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot write outputs: {exc}") from None
    _emit({
        "command": "generate",
        "dataset": str(out / "dataset.csv"),
        "truth": str(out / "truth.csv"),
        "records": len(data),
        "errors": sum(truth.is_error),
        "duplicate_location_errors": sum(
            1 for e, d in zip(truth.is_error, truth.is_duplicate_location) if e and d
        ),
    })
    return EXIT_OK


def _guess_target(data: Dataset, target: str | None) -> str:
    if target is not None:
        if target not in data.columns:
            raise CommandError(EXIT_CONFIG, f"unknown target column {target!r}")
        return target
    rest = [c for c in data.names if c not in (data.id_col, "lat", "lon")]
    if len(rest) != 1:
        raise CommandError(EXIT_CONFIG, f"cannot infer the target column from {rest}; pass --target")
    return rest[0]


def _load_truth(path: str) -> GroundTruth:
    try:
        return GroundTruth.read_csv(path)
    except (OSError, UnicodeDecodeError, csv.Error, KeyError) as exc:
        raise CommandError(EXIT_IO, f"cannot load {path}: {exc}") from None


def cmd_eval(args) -> int:
    original = _load_dataset(args.original)
    repaired = _load_dataset(args.repaired)
    truth = _load_truth(args.truth)
    target = _guess_target(original, args.target)
    try:
        metrics = evaluate(original, repaired, truth, target)
    except DatasetError as exc:
        raise CommandError(EXIT_CONFIG, str(exc)) from None
    _emit(metrics.as_dict())
    return EXIT_OK


def _parse_list(raw: str, kind):
    try:
        values = [kind(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list: {raw!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


SWEEP_FIELDS = ["neighborhood", "param", "n", "precision", "recall", "f1", "runtime_ms", "status"]


def cmd_sweep(args) -> int:
    config = _load_config(args.config, args.seed)
    data = _load_dataset(args.input, config.id_col)
    _validate(data, config)
    truth = _load_truth(args.truth)
    out = _out_dir(args.out)
    if args.d is not None:
        grid = [("d", float(p)) for p in args.d]
    else:
        grid = [("k", int(p)) for p in args.k]
    rows = []
    for kind, param in grid:
        for n in args.n:
            row = {"neighborhood": kind, "param": param, "n": n}
            start = time.perf_counter()
            try:
                hood = Range(param) if kind == "d" else KNN(param)
                cfg = dataclasses.replace(config, constraints=tuple(
                    dataclasses.replace(c, neighborhood=hood, n=n) for c in config.constraints
                ))
                result = pipeline.run(data, cfg, formulator=args.formulator, threads=args.threads)
                target = cfg.constraints[0].target
                m = evaluate(data, result.repaired, truth, target)
                row.update(precision=m.precision, recall=m.recall, f1=m.f1, status="ok")
            except Exception as exc:  # a failed grid point must not stop the sweep
                _log(f"{kind}={param} n={n} failed: {exc}")
                row.update(precision="", recall="", f1="", status=f"failed: {exc}")
            row["runtime_ms"] = round((time.perf_counter() - start) * 1000.0, 1)
            _log(f"{kind}={param} n={n} f1={row['f1']} ({row['runtime_ms']:.0f} ms)")
            rows.append(row)
    rows.sort(key=lambda r: (r["param"], r["n"]))
    dest = out / "sweep.csv"
    try:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise CommandError(EXIT_IO, f"cannot write {dest}: {exc}") from None
    _emit({
        "command": "sweep",
        "out": str(dest),
        "rows": len(rows),
        "failed": sum(1 for r in rows if r["status"] != "ok"),
    })
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _bbox(raw: str):
    parts = _parse_list(raw, float)
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox needs min_lat,min_lon,max_lat,max_lon")
    return tuple(parts)


def _threads(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialclean",
        description="Detect and repair location-dependent attribute errors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_args(p, formulator=True):
        p.add_argument("--input", required=True, help="input CSV (header first, empty = NULL)")
        p.add_argument("--config", required=True, help="constraint configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=_threads, default=1, help="matrix build threads")
        if formulator:
            p.add_argument("--formulator", choices=FORMULATORS, default=None,
                           help="score encoding (default: from config)")

    p = sub.add_parser("clean", help="detect, generate candidates and repair")
    pipeline_args(p)
    p.add_argument("--dump-matrix", action="store_true", help="also write the distance matrix")
    p.add_argument("--exact", action="store_true",
                   help="rational arithmetic for weights and probabilities (small inputs)")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("detect", help="detection only")
    pipeline_args(p, formulator=False)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    p.add_argument("--records", type=int, default=20000)
    p.add_argument("--regions", type=int, default=50)
    p.add_argument("--errors", type=int, default=2000)
    p.add_argument("--dup", type=float, default=0.0, help="duplication ratio in [0, 1]")
    p.add_argument("--null-ratio", type=float, default=0.1, help="share of errors that are NULL")
    p.add_argument("--bbox", type=_bbox, default=CHICAGO_BBOX,
                   help="min_lat,min_lon,max_lat,max_lon (default: Chicago)")
    p.add_argument("--target", default="region", help="name of the labeled column")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score a repaired CSV against ground truth")
    p.add_argument("--original", required=True)
    p.add_argument("--repaired", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--target", default=None, help="column to score (inferred if unique)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="F1 and runtime over a grid of d or k and n")
    pipeline_args(p)
    p.add_argument("--truth", required=True)
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--d", type=lambda s: _parse_list(s, float), help="comma-separated ranges (m)")
    grid.add_argument("--k", type=lambda s: _parse_list(s, int), help="comma-separated k values")
    p.add_argument("--n", type=lambda s: _parse_list(s, float), default=[2.0],
                   help="comma-separated weight exponents (default 2)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        _log(f"error: {exc}")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
