"""Command-line entry point: ``odcp {detect,generate,evaluate,experiment}``.

Every command that writes files also writes ``<output>.manifest.json`` with
the full argument set, timing and version, so a run can be repeated exactly.
Exit status is 0 on success, 1 on a runtime failure and 2 on bad usage or
unparseable input.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .datagen import PRESETS, generate, preset
from .detector import TEST_METHODS, DetectorConfig, detect
from .errors import InvalidSampleError, InvalidSeriesError, OdcpError
from .evaluation import default_tolerance, match_and_score, sweep_curves
from .experiment import run_experiment
from .simplex import Series
from .transform import fit_standardization, to_compositional

_log = logging.getLogger("odcp")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input files or arguments; maps to exit status 2."""


# ---------------------------------------------------------------------------
# file helpers


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _csv_text(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_series_csv(path) -> np.ndarray:
    """Numeric CSV, one sample per row, optional header row.

    A first row with any non-numeric field is taken as a header. Blank lines
    are ignored. Raises :class:`UsageError` naming the offending row (1-based,
    counting the header) and column.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    rows = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not all(_is_number(c) for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise UsageError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise UsageError(f"{path}: row {lineno}, column {col}: cannot parse {cell!r} as a number") from None
                if not math.isfinite(v):
                    raise UsageError(f"{path}: row {lineno}, column {col}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows)


def write_series_csv(path, x: np.ndarray) -> None:
    header = [f"x{i + 1}" for i in range(x.shape[1])]
    atomic_write(path, _csv_text((map(repr, map(float, r)) for r in x), header))


def read_reports(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"detected-report file not found: {path}")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(int(json.loads(line)["global_index"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise UsageError(f"{path}: line {lineno}: not a change-point report ({exc})") from None
    return sorted(out)


def read_truth(path):
    """Change points and first segment length from a truth JSON file."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"truth file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(doc, list):
        return [int(v) for v in doc], None
    try:
        cps = [int(v) for v in doc["change_points"]]
    except (KeyError, TypeError, ValueError):
        raise UsageError(f"{path}: expected a list or an object with 'change_points'") from None
    seg = None
    segs = (doc.get("spec") or {}).get("segments")
    if segs:
        seg = int(segs[0]["length"])
    elif cps:
        seg = cps[0]
    return cps, seg


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    command: list
    config: dict
    seed: int | None
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0
    version: str = __version__
    backend: str = _kernels.BACKEND
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        atomic_write(path, json.dumps(self.__dict__, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _manifest_path(output) -> Path:
    p = Path(output)
    return p.with_name(p.name + ".manifest.json")


def _sibling(output, suffix) -> Path:
    p = Path(output)
    return p.with_name(p.stem + suffix)


# ---------------------------------------------------------------------------
# argument parsing


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _seed(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _detector_flags(p):
    d = DetectorConfig()
    g = p.add_argument_group("detector")
    g.add_argument("--alpha", type=float, default=d.alpha, help="significance level (default %(default)s)")
    g.add_argument("--window", type=_positive_int, default=d.initial_window, help="initial window size I (default %(default)s)")
    g.add_argument("--batch", type=_positive_int, default=d.batch, help="samples appended per step b (default %(default)s)")
    g.add_argument("--subsets", type=_positive_int, default=d.replicates, help="resampling replicates M (default %(default)s)")
    g.add_argument("--min-segment", type=_positive_int, default=None, help="shortest segment (default max(10, K+1))")
    g.add_argument("--eps", type=float, default=d.eps, help="simplex clamp floor (default %(default)s)")
    g.add_argument("--test", choices=TEST_METHODS, default=d.test, help="significance procedure (default %(default)s)")
    g.add_argument("--no-early-stop", action="store_true", help="always draw all replicates")
    g.add_argument("--threads", type=_positive_int, default=d.threads, help="worker threads for fitting (default %(default)s)")


def _config(args) -> DetectorConfig:
    return DetectorConfig(
        initial_window=args.window,
        batch=args.batch,
        replicates=args.subsets,
        alpha=args.alpha,
        min_segment=args.min_segment,
        eps=args.eps,
        seed=args.seed,
        test=args.test,
        early_stop=not args.no_early_stop,
        threads=args.threads,
    )


def _preset_flags(p, required=True):
    p.add_argument("--preset", choices=sorted(PRESETS), required=required, help="dataset family")
    p.add_argument("--dim", type=_positive_int, help="data dimension d")
    p.add_argument("--seg-len", type=_positive_int, help="samples per segment")
    p.add_argument("--segments", type=_positive_int, help="number of segments (Gaussian presets)")
    p.add_argument("--sym-kl", type=float, help="symmetric KL between segments (d1)")
    p.add_argument("--sparsity", type=float, help="fraction of coordinates that change (Gaussian presets)")
    p.add_argument("--change", choices=["mean", "var"], help="type of change (Gaussian presets)")
    p.add_argument("--snr", choices=["high", "low"], help="noise level label (Gaussian presets)")


def _preset_kwargs(args) -> dict:
    return {
        "dim": args.dim,
        "seg_len": args.seg_len,
        "segments": args.segments,
        "sym_kl": args.sym_kl,
        "sparsity": args.sparsity,
        "change": args.change,
        "snr": args.snr,
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odcp", description="Online change-point detection for compositional data.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({_kernels.BACKEND} kernels)")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="find change points in a CSV series")
    p.add_argument("--input", required=True, help="CSV file, one sample per row")
    p.add_argument("--mode", choices=["compositional", "general"], default="compositional")
    p.add_argument("--output", help="JSON-lines report file (default: stdout)")
    p.add_argument("--seed", type=_seed, default=0)
    _detector_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("generate", help="write a synthetic series and its truth file")
    _preset_flags(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--output", required=True, help="series CSV path")
    p.add_argument("--truth", help="truth JSON path (default: <output stem>.truth.json)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score detections against a truth file")
    p.add_argument("--detected", required=True, help="JSON-lines report file from detect")
    p.add_argument("--truth", required=True, help="truth JSON from generate, or a JSON list of indices")
    p.add_argument("--tolerance-pct", type=float, default=4.0, help="W as a percentage of the segment length")
    p.add_argument("--tolerance-w", type=int, help="absolute W; overrides --tolerance-pct")
    p.add_argument("--seg-len", type=_positive_int, help="segment length for --tolerance-pct (default: from truth)")
    p.add_argument("--sweep", type=int, help="also write curves for W = 0..SWEEP")
    p.add_argument("--lenient", action="store_true", help="any-within-W matching instead of one-to-one")
    p.add_argument("--output", help="metrics CSV (default: stdout)")
    p.add_argument("--sweep-output", help="curve CSV (default: <output stem>.sweep.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="Monte Carlo generate/detect/evaluate loop")
    _preset_flags(p)
    p.add_argument("--runs", type=_positive_int, default=20)
    p.add_argument("--seed", type=_seed, default=0, help="first run seed; run r uses seed + r")
    p.add_argument("--tolerance-pct", type=float, default=4.0)
    p.add_argument("--tolerance-w", type=int)
    p.add_argument("--workers", type=_positive_int, default=1, help="runs evaluated concurrently")
    p.add_argument("--output", help="aggregate CSV (default: stdout); per-run rows go to <stem>.runs.csv")
    _detector_flags(p)
    p.set_defaults(func=cmd_experiment)
    return ap


# ---------------------------------------------------------------------------
# commands


def _emit(text: str, output) -> None:
    if output:
        atomic_write(output, text)
    else:
        sys.stdout.write(text)


def cmd_detect(args, manifest: RunManifest) -> None:
    x = read_series_csv(args.input)
    manifest.inputs.append(args.input)
    cfg = _config(args)
    if args.mode == "general":
        general = Series(x, kind="general")
        std = fit_standardization(general)
        if std.guarded:
            _log.warning("constant column(s) %s left unscaled", list(std.guarded))
        series = to_compositional(general, std)
        manifest.extra["standardization"] = std.to_dict()
    else:
        series = Series(x)
    stats = {}
    reports = detect(series, cfg, stats=stats)
    manifest.config["detector"] = cfg.resolved(series.dim).to_dict()
    manifest.extra.update(samples=len(series), dim=int(x.shape[1]), **stats)
    text = "".join(json.dumps(r.to_dict()) + "\n" for r in reports)
    _emit(text, args.output)
    if args.output:
        manifest.outputs.append(args.output)
    _log.info("%d change point(s) from %d test(s)", len(reports), stats.get("tests", 0))


def cmd_generate(args, manifest: RunManifest) -> None:
    try:
        spec = preset(args.preset, seed=args.seed, **_preset_kwargs(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    series, labeling = generate(spec)
    truth_path = args.truth or str(_sibling(args.output, ".truth.json"))
    write_series_csv(args.output, series.samples)
    truth = {
        "change_points": list(labeling.change_points),
        "length": len(series),
        "kind": series.kind,
        "spec": spec.to_dict(),
    }
    atomic_write(truth_path, json.dumps(truth, indent=2) + "\n")
    manifest.outputs += [args.output, truth_path]


def _tolerance(args, seg_len) -> int:
    if args.tolerance_w is not None:
        if args.tolerance_w < 0:
            raise UsageError("--tolerance-w must be non-negative")
        return args.tolerance_w
    seg = args.seg_len or seg_len
    if seg is None:
        raise UsageError("cannot derive W: pass --seg-len or --tolerance-w")
    return default_tolerance(seg, args.tolerance_pct)


def cmd_evaluate(args, manifest: RunManifest) -> None:
    detected = read_reports(args.detected)
    truth, seg_len = read_truth(args.truth)
    manifest.inputs += [args.detected, args.truth]
    w = _tolerance(args, seg_len)
    one_to_one = not args.lenient
    res = match_and_score(detected, truth, w, one_to_one)
    d = res.to_dict()
    header = list(d)
    _emit(_csv_text([d.values()], header), args.output)
    if args.output:
        manifest.outputs.append(args.output)
    if args.sweep is not None:
        if args.sweep < 0:
            raise UsageError("--sweep must be non-negative")
        curve = sweep_curves(detected, truth, args.sweep, one_to_one)
        path = args.sweep_output or (str(_sibling(args.output, ".sweep.csv")) if args.output else None)
        if path is None:
            raise UsageError("--sweep needs --output or --sweep-output")
        atomic_write(path, _csv_text(curve, ["w", "precision", "recall"]))
        manifest.outputs.append(path)
    manifest.extra["tolerance_w"] = w


def cmd_experiment(args, manifest: RunManifest) -> None:
    cfg = _config(args)
    cfg.validate()
    kwargs = _preset_kwargs(args)
    try:
        spec = preset(args.preset, seed=args.seed, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    agg = run_experiment(
        args.preset,
        runs=args.runs,
        seed=args.seed,
        cfg=cfg,
        tolerance_pct=args.tolerance_pct,
        tolerance_w=args.tolerance_w,
        workers=args.workers,
        **kwargs,
    )
    meta = spec.meta
    kind = meta.get("kind", "dirichlet" if args.preset in ("d1", "d2") else "")
    row = {
        "preset": args.preset,
        "type": {"mean_change": "mean", "var_change": "var"}.get(kind, kind),
        "snr": meta.get("snr", ""),
        "runs": args.runs,
        "precision": agg.mean_precision,
        "recall": agg.mean_recall,
        "n_null_precision": agg.n_null_precision,
        "n_failed": agg.n_failed,
    }
    _emit(_csv_text([row.values()], list(row)), args.output)
    if args.output:
        runs_path = _sibling(args.output, ".runs.csv")
        rows = [r.to_row() for r in agg.runs]
        atomic_write(runs_path, _csv_text((r.values() for r in rows), list(rows[0])))
        manifest.outputs += [args.output, str(runs_path)]
    manifest.extra["aggregate"] = agg.to_dict()


def _has_outputs(args) -> bool:
    return bool(getattr(args, "output", None))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = RunManifest(command=["odcp", *(sys.argv[1:] if argv is None else argv)], config=config, seed=getattr(args, "seed", None))
    t0 = time.perf_counter()
    try:
        args.func(args, manifest)
    except (UsageError, InvalidSampleError, InvalidSeriesError) as exc:
        print(f"odcp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OdcpError as exc:
        print(f"odcp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # configuration values rejected by the library (e.g. window too small)
        print(f"odcp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"odcp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    manifest.duration_s = time.perf_counter() - t0
    if _has_outputs(args):
        manifest.write(_manifest_path(args.output))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
