"""Precision/recall of detected change points within a tolerance window."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "EvalResult",
    "RunRecord",
    "MonteCarloResult",
    "match_and_score",
    "sweep_curves",
    "default_tolerance",
    "monte_carlo",
]

_log = logging.getLogger(__name__)


@dataclass
class EvalResult:
    """Scores for one run; ``precision`` is None when nothing was detected."""

    precision: float | None
    recall: float
    matches: list
    tolerance_w: int
    n_detected: int = 0
    n_truth: int = 0

    def to_dict(self):
        return {
            "tolerance_w": self.tolerance_w,
            "precision": self.precision,
            "recall": self.recall,
            "n_detected": self.n_detected,
            "n_truth": self.n_truth,
            "n_matched": len(self.matches),
        }


def _sorted_ints(values, name):
    arr = [int(v) for v in values]
    if any(b < a for a, b in zip(arr, arr[1:])):
        raise ValueError(f"{name} indices must be sorted ascending")
    return arr


def default_tolerance(segment_length: int, pct: float = 4.0) -> int:
    """Tolerance window as a percentage of the segment length, rounded."""
    return int(round(segment_length * pct / 100.0))


def match_and_score(detected, truth, w: int, one_to_one: bool = True) -> EvalResult:
    """Score detections against ground truth with tolerance ``w``.

    With ``one_to_one`` (default) candidate pairs within ``w`` are taken
    greedily by increasing distance, earlier truth first on ties, and each
    index is used at most once. Otherwise a detection is correct if any truth
    lies within ``w`` and a truth is recalled if any detection does.
    """
    det = _sorted_ints(detected, "detected")
    tru = _sorted_ints(truth, "truth")
    if w < 0:
        raise ValueError("tolerance must be non-negative")
    if one_to_one:
        pairs = sorted(
            (abs(d - t), j, i) for i, d in enumerate(det) for j, t in enumerate(tru) if abs(d - t) <= w
        )
        used_d, used_t, matches = set(), set(), []
        for _, j, i in pairs:
            if i in used_d or j in used_t:
                continue
            used_d.add(i)
            used_t.add(j)
            matches.append((det[i], tru[j]))
        matches.sort()
        hit_d = hit_t = len(matches)
    else:
        matches = [(d, t) for d in det for t in tru if abs(d - t) <= w]
        hit_d = len({d for d, _ in matches})
        hit_t = len({t for _, t in matches})
    precision = hit_d / len(det) if det else None
    recall = hit_t / len(tru) if tru else (1.0 if not det else 0.0)
    return EvalResult(precision, recall, matches, int(w), len(det), len(tru))


def sweep_curves(detected, truth, w_max: int, one_to_one: bool = True):
    """``[(w, precision, recall)]`` for every ``w`` in ``0..w_max``."""
    if w_max < 0:
        raise ValueError("w_max must be non-negative")
    out = []
    for w in range(w_max + 1):
        r = match_and_score(detected, truth, w, one_to_one)
        out.append((w, r.precision, r.recall))
    return out


@dataclass
class RunRecord:
    seed: int
    result: EvalResult | None = None
    detected: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.result is None

    def to_row(self):
        r = self.result
        return {
            "seed": self.seed,
            "precision": None if r is None else r.precision,
            "recall": None if r is None else r.recall,
            "n_detected": len(self.detected),
            "n_truth": len(self.truth),
            "detected": " ".join(map(str, self.detected)),
            "truth": " ".join(map(str, self.truth)),
            "error": self.error or "",
        }


@dataclass
class MonteCarloResult:
    mean_precision: float | None
    mean_recall: float | None
    runs: list
    n_null_precision: int
    n_failed: int

    def to_dict(self):
        return {
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "n_runs": len(self.runs),
            "n_null_precision": self.n_null_precision,
            "n_failed": self.n_failed,
        }


Runner = Callable[[int], RunRecord]


def monte_carlo(runner: Runner, runs: int = 20, seed0: int = 0, workers: int = 1) -> MonteCarloResult:
    """Run ``runner(seed)`` for ``seed0 .. seed0 + runs - 1`` and average.

    Undefined precisions are left out of the precision mean and counted in
    ``n_null_precision``. A runner that raises is recorded as failed and left
    out of both means.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")

    def one(seed):
        try:
            rec = runner(seed)
            rec.seed = seed
            return rec
        except Exception as exc:  # noqa: BLE001 - failures are tallied, not fatal
            _log.warning("run with seed %d failed: %s", seed, exc)
            return RunRecord(seed=seed, error=f"{type(exc).__name__}: {exc}")

    seeds = range(seed0, seed0 + runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, seeds))
    else:
        records = [one(s) for s in seeds]

    ok = [r for r in records if not r.failed]
    precisions = [r.result.precision for r in ok if r.result.precision is not None]
    return MonteCarloResult(
        mean_precision=float(np.mean(precisions)) if precisions else None,
        mean_recall=float(np.mean([r.result.recall for r in ok])) if ok else None,
        runs=records,
        n_null_precision=sum(1 for r in ok if r.result.precision is None),
        n_failed=len(records) - len(ok),
    )
