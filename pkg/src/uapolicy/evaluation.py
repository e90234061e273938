"""Metrics and report tables over persisted attack outcomes.

Everything here recomputes exactly from outcome records, so any report
can be regenerated byte-for-byte from the JSONL files alone.
"""

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .env import AttackOutcome
from .ioutil import atomic_write_text

EVAL_CSV_HEADER = (
    "method,seed,threshold,success_rate,mean_similarity,"
    "mean_label_queries,mean_logit_queries,n_texts"
)

ACCESS_CSV_HEADER = (
    "method,n_texts,mean_label_queries,mean_logit_queries,"
    "mean_status_label_queries,mean_ordering_label_queries,"
    "mean_ordering_logit_queries,mean_synonym_logit_queries"
)


class EmptyOutcomesError(Exception):
    pass


class SizeExceedsCorpusError(Exception):
    pass


@dataclass
class EvalRow:
    method: str
    seed: int | None
    threshold: float
    success_rate: float
    mean_similarity: float
    mean_label_queries: float
    mean_logit_queries: float
    n_texts: int

    def csv_line(self) -> str:
        seed = "" if self.seed is None else self.seed
        return (
            f"{self.method},{seed},{self.threshold!r},{self.success_rate!r},"
            f"{self.mean_similarity!r},{self.mean_label_queries!r},"
            f"{self.mean_logit_queries!r},{self.n_texts}"
        )


def success_rate(outcomes: Sequence[AttackOutcome], threshold: float) -> float:
    """Fraction of outcomes that flipped the class with similarity at or
    above the threshold."""
    if not outcomes:
        raise EmptyOutcomesError("no outcomes to aggregate")
    hits = sum(1 for o in outcomes if o.success and o.similarity >= threshold)
    return hits / len(outcomes)


def eval_row(outcomes: Sequence[AttackOutcome], threshold: float,
             method: str, seed: int | None) -> EvalRow:
    if not outcomes:
        raise EmptyOutcomesError("no outcomes to aggregate")
    return EvalRow(
        method=method,
        seed=seed,
        threshold=threshold,
        success_rate=success_rate(outcomes, threshold),
        mean_similarity=float(np.mean([o.similarity for o in outcomes])),
        mean_label_queries=float(np.mean([o.label_queries for o in outcomes])),
        mean_logit_queries=float(np.mean([o.logit_queries for o in outcomes])),
        n_texts=len(outcomes),
    )


@dataclass
class Curve:
    """One plottable series: x positions, central values, and a band.

    Points with defined[i] == False are gaps (e.g. a zero baseline made
    normalization undefined there).
    """

    x: list[float]
    values: list[float]
    lo: list[float] = field(default_factory=list)
    hi: list[float] = field(default_factory=list)
    defined: list[bool] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        if not self.lo:
            self.lo = list(self.values)
        if not self.hi:
            self.hi = list(self.values)
        if not self.defined:
            self.defined = [True] * len(self.x)


def _t_interval(rates: np.ndarray) -> tuple[float, float, float]:
    """Mean and 95% confidence interval across seeds (t distribution)."""
    mean = float(np.mean(rates))
    if len(rates) < 2:
        return mean, mean, mean
    sem = float(np.std(rates, ddof=1) / np.sqrt(len(rates)))
    half = float(stats.t.ppf(0.975, len(rates) - 1)) * sem
    return mean, mean - half, mean + half


def normalized_curve(
    method_outcomes_per_seed: Sequence[Sequence[AttackOutcome]],
    baseline_outcomes_per_seed: Sequence[Sequence[AttackOutcome]],
    thresholds: Sequence[float],
    label: str = "",
) -> Curve:
    """Method success divided by the mean random-search success, per
    threshold, with a 95% band across the method's seeds.

    Thresholds where the baseline mean is zero come out as gaps.
    """
    if not baseline_outcomes_per_seed or any(not b for b in baseline_outcomes_per_seed):
        raise EmptyOutcomesError("baseline outcomes missing")
    values, lo, hi, defined = [], [], [], []
    for th in thresholds:
        base = float(np.mean([success_rate(b, th) for b in baseline_outcomes_per_seed]))
        rates = np.array([success_rate(m, th) for m in method_outcomes_per_seed])
        if base == 0.0:
            values.append(float("nan"))
            lo.append(float("nan"))
            hi.append(float("nan"))
            defined.append(False)
            continue
        mean, m_lo, m_hi = _t_interval(rates)
        values.append(mean / base)
        lo.append(m_lo / base)
        hi.append(m_hi / base)
        defined.append(True)
    return Curve(x=list(thresholds), values=values, lo=lo, hi=hi, defined=defined, label=label)


def training_size_sweep(
    sizes: Sequence[int],
    run_fn: Callable[[int, int], Sequence[AttackOutcome]],
    threshold: float,
    seeds: Sequence[int],
    corpus_size: int | None = None,
    label: str = "",
) -> Curve:
    """Success rate at one threshold as training size grows.

    `run_fn(size, seed)` trains on the first `size` texts and returns
    outcomes on the eval texts. The band is mean +/- std across seeds.
    """
    if list(sizes) != sorted(set(sizes)):
        raise ValueError("sizes must be strictly ascending without duplicates")
    if corpus_size is not None:
        too_big = [s for s in sizes if s > corpus_size]
        if too_big:
            raise SizeExceedsCorpusError(f"sizes {too_big} exceed corpus of {corpus_size}")
    values, lo, hi = [], [], []
    for size in sizes:
        rates = np.array([success_rate(run_fn(size, seed), threshold) for seed in seeds])
        mean = float(np.mean(rates))
        std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
        values.append(mean)
        lo.append(mean - std)
        hi.append(mean + std)
    return Curve(x=[float(s) for s in sizes], values=values, lo=lo, hi=hi, label=label)


def oracle_access_report(outcomes_by_method: Mapping[str, Sequence[AttackOutcome]]) -> list[dict]:
    """Mean per-text query counts per method, split by kind and phase."""
    rows = []
    for method in sorted(outcomes_by_method):
        outcomes = outcomes_by_method[method]
        if not outcomes:
            raise EmptyOutcomesError(f"no outcomes for method {method!r}")
        n = len(outcomes)

        def phase_mean(kind: str, phase: str) -> float:
            attr = "phase_label_queries" if kind == "label" else "phase_logit_queries"
            return sum(getattr(o, attr).get(phase, 0) for o in outcomes) / n

        rows.append(
            {
                "method": method,
                "n_texts": n,
                "mean_label_queries": sum(o.label_queries for o in outcomes) / n,
                "mean_logit_queries": sum(o.logit_queries for o in outcomes) / n,
                "mean_status_label_queries": phase_mean("label", "status"),
                "mean_ordering_label_queries": phase_mean("label", "ordering"),
                "mean_ordering_logit_queries": phase_mean("logit", "ordering"),
                "mean_synonym_logit_queries": phase_mean("logit", "synonym"),
            }
        )
    return rows


def emit_csv(rows: Sequence[EvalRow], path) -> None:
    lines = [EVAL_CSV_HEADER] + [r.csv_line() for r in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def emit_access_csv(rows: Sequence[dict], path) -> None:
    lines = [ACCESS_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r['method']},{r['n_texts']},{r['mean_label_queries']!r},"
            f"{r['mean_logit_queries']!r},{r['mean_status_label_queries']!r},"
            f"{r['mean_ordering_label_queries']!r},{r['mean_ordering_logit_queries']!r},"
            f"{r['mean_synonym_logit_queries']!r}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")
