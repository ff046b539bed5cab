"""Cohort-level validation statistics for the health index.

Implements the validation protocol: eligibility groups by treatment
duration and sequence length, pooled EQ-VAS vs. index correlation, per
person maximum-pain vs. index trajectory correlations with Bonferroni
correction, tertile binning by sequence length, and (gamma, y) parameter
sweeps.  All outputs are deterministic given the cohort and grid.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import t as student_t

from .codes import IcfTree, build_tree
from .cohort import CohortStore, Person, stats
from .engine import attach, evaluate
from .errors import InsufficientDataError
from .linkage import QualifierRecord, RuleSet, apply_rules
from .weighting import WeightingSpec, make_spec

DEFAULT_ALPHA = 0.05

PAIN_INSTRUMENT = "pain_vas"


@dataclass(frozen=True, order=True)
class GroupSpec:
    """Eligibility thresholds: minimum treatment duration (days) and
    minimum length of the treatment sequence (distinct measurement days)."""

    min_duration: int
    min_sequence_length: int

    def __post_init__(self):
        if self.min_duration <= 0 or self.min_sequence_length <= 0:
            raise ValueError("group thresholds must be positive")

    @property
    def label(self) -> str:
        return f"{self.min_duration}d_{self.min_sequence_length}v"


DEFAULT_GROUPS = (GroupSpec(90, 10), GroupSpec(30, 5))


def form_groups(store: CohortStore, specs: Sequence[GroupSpec]) -> dict[GroupSpec, list[str]]:
    """Person ids per group; a person may satisfy several groups at once."""
    groups: dict[GroupSpec, list[str]] = {spec: [] for spec in specs}
    for person in store:
        if not person.days:
            continue
        st = stats(person)
        for spec in specs:
            if st.duration >= spec.min_duration and st.sequence_length >= spec.min_sequence_length:
                groups[spec].append(person.person_id)
    return groups


def pearson(xs: Sequence[float], ys: Sequence[float]):
    """Pearson product-moment coefficient with a two-sided p-value from the
    t distribution on n-2 degrees of freedom; None when either series has
    zero variance (undefined, the caller decides how to treat omission)."""
    if len(xs) != len(ys):
        raise ValueError(f"series lengths differ: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 3:
        raise ValueError(f"need at least 3 pairs, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0.0 or syy == 0.0:
        return None
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(student_t.sf(abs(t), n - 2))
    return r, min(p, 1.0)


@dataclass(frozen=True)
class CorrelationReport:
    n: int
    coefficient: float
    p_value: float
    bonferroni_significant: bool
    omitted_constant_trajectories: int = 0


@dataclass(frozen=True)
class PersonCorrelation:
    person_id: str
    n_days: int
    coefficient: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class BoxplotStats:
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float


@dataclass(frozen=True)
class MaxPainReport:
    correlations: tuple[PersonCorrelation, ...]
    median: float
    significant_portion: float
    omitted_constant_trajectories: int
    boxplot: BoxplotStats
    alpha: float
    threshold: float

    @property
    def n(self) -> int:
        return len(self.correlations)


@dataclass(frozen=True)
class SequenceBin:
    index: int
    min_length: int
    max_length: int
    n: int
    significant_portion: float
    median_correlation: float


@dataclass(frozen=True)
class SweepCell:
    gamma: float
    y: float
    eqvas_n: int
    eqvas_coefficient: float
    eqvas_p: float
    maxpain_n: int
    maxpain_median: float
    maxpain_significant_portion: float


class CohortEvaluator:
    """Links a cohort once, holds the cohort-wide tree skeleton, and caches
    per (person, day, gamma, y) index evaluations."""

    def __init__(self, store: CohortStore, rules: RuleSet, *,
                 min_raw: float = 0.0, max_raw: float = 4.0):
        self.store = store
        self.min_raw = min_raw
        self.max_raw = max_raw
        self.records: dict[str, list[QualifierRecord]] = {
            person.person_id: apply_rules(person.answers, rules) for person in store
        }
        codes = {r.code for recs in self.records.values() for r in recs}
        self.tree: IcfTree | None = build_tree(codes) if codes else None
        self._cache: dict[tuple, "int | None"] = {}

    def hi(self, person_id: str, day: int, spec: WeightingSpec) -> "int | None":
        """Index value at ``day`` from records up to that day; None when the
        person has no linkable records yet."""
        key = (person_id, day, spec.gamma, spec.y)
        if key not in self._cache:
            records = [r for r in self.records.get(person_id, ()) if r.day <= day]
            if not records or self.tree is None:
                self._cache[key] = None
            else:
                attached = attach(self.tree, records, day, spec)
                index = evaluate(attached, spec, min_raw=self.min_raw, max_raw=self.max_raw)
                self._cache[key] = index.value
        return self._cache[key]

    def seed_cache(self, entries: Iterable[tuple[tuple, "int | None"]]) -> None:
        self._cache.update(entries)

    def precompute(self, person_ids: Sequence[str], specs: Sequence[WeightingSpec],
                   workers: int = 1) -> None:
        """Fill the cache for every (person, measurement day, spec) in
        parallel; results are identical for any worker count."""
        if workers <= 1 or self.tree is None:
            return
        payloads = []
        for pid in person_ids:
            records = self.records.get(pid, [])
            if not records:
                continue
            days = sorted({r.day for r in records} | set(self.store.person(pid).eqvas))
            payloads.append((pid, records, days,
                             [(s.y, s.gamma) for s in specs],
                             self.tree, self.min_raw, self.max_raw))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for entries in pool.map(_trajectory_task, payloads, chunksize=4):
                self.seed_cache(entries)


def _trajectory_task(payload):
    pid, records, days, spec_params, tree, min_raw, max_raw = payload
    out = []
    for y, gamma in spec_params:
        spec = make_spec(y, gamma)
        for day in days:
            visible = [r for r in records if r.day <= day]
            if not visible:
                out.append(((pid, day, gamma, y), None))
                continue
            attached = attach(tree, visible, day, spec)
            index = evaluate(attached, spec, min_raw=min_raw, max_raw=max_raw)
            out.append(((pid, day, gamma, y), index.value))
    return out


def eqvas_vs_hi(evaluator: CohortEvaluator, person_ids: Sequence[str],
                spec: WeightingSpec, alpha: float = DEFAULT_ALPHA) -> CorrelationReport:
    """Pooled correlation between every EQ-VAS answer in the group and the
    index evaluated at that answer's day.  Answers given before a person has
    any linkable record are skipped."""
    eqvas_values: list[float] = []
    hi_values: list[float] = []
    for pid in person_ids:
        person = evaluator.store.person(pid)
        for day, value in person.eqvas.items():
            hi = evaluator.hi(pid, day, spec)
            if hi is None:
                continue
            eqvas_values.append(value)
            hi_values.append(float(hi))
    if len(eqvas_values) < 3:
        raise InsufficientDataError(
            f"only {len(eqvas_values)} EQ-VAS/index pairs in the group; need at least 3"
        )
    result = pearson(eqvas_values, hi_values)
    if result is None:
        raise InsufficientDataError("pooled EQ-VAS/index series has zero variance")
    r, p = result
    return CorrelationReport(
        n=len(eqvas_values), coefficient=r, p_value=p, bonferroni_significant=p < alpha
    )


def max_pain_by_day(person: Person) -> dict[int, float]:
    """Highest raw pain VAS answer per measurement day."""
    out: dict[int, float] = {}
    for answer in person.answers:
        if answer.instrument == PAIN_INSTRUMENT:
            day = answer.day
            out[day] = max(out.get(day, 0.0), answer.value)
    return dict(sorted(out.items()))


def maxpain_vs_hi(evaluator: CohortEvaluator, person_ids: Sequence[str],
                  spec: WeightingSpec, alpha: float = DEFAULT_ALPHA) -> MaxPainReport:
    """Per-person correlation between the maximum-pain trajectory and the
    index trajectory on the same days, Bonferroni-corrected at alpha/n.

    Persons with fewer than three pain days are not eligible; persons whose
    index (or pain) trajectory is constant are omitted and counted.
    """
    raw: list[tuple[str, int, float, float]] = []
    omitted = 0
    for pid in person_ids:
        person = evaluator.store.person(pid)
        pain = max_pain_by_day(person)
        if len(pain) < 3:
            continue
        days = list(pain)
        his = [evaluator.hi(pid, day, spec) for day in days]
        series = [(p, h) for p, h in zip(pain.values(), his) if h is not None]
        if len(series) < 3:
            continue
        result = pearson([p for p, _ in series], [float(h) for _, h in series])
        if result is None:
            omitted += 1
            continue
        raw.append((pid, len(series), result[0], result[1]))
    if not raw:
        raise InsufficientDataError("no person in the group has a computable "
                                    "maximum-pain/index correlation")
    threshold = alpha / len(raw)
    correlations = tuple(
        PersonCorrelation(pid, n_days, r, p, p < threshold) for pid, n_days, r, p in raw
    )
    coeffs = [c.coefficient for c in correlations]
    portion = sum(c.significant for c in correlations) / len(correlations)
    return MaxPainReport(
        correlations=correlations,
        median=float(np.median(coeffs)),
        significant_portion=portion,
        omitted_constant_trajectories=omitted,
        boxplot=_boxplot_stats(coeffs),
        alpha=alpha,
        threshold=threshold,
    )


def _boxplot_stats(values: Sequence[float]) -> BoxplotStats:
    arr = np.asarray(values, dtype=float)
    q1, median, q3 = (float(v) for v in np.percentile(arr, [25, 50, 75]))
    iqr = q3 - q1
    low_fence, high_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= low_fence) & (arr <= high_fence)]
    return BoxplotStats(
        n=len(arr),
        median=median,
        q1=q1,
        q3=q3,
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
    )


def bin_by_sequence_length(store: CohortStore, report: MaxPainReport,
                           k: int = 3) -> list[SequenceBin]:
    """Split the per-person correlations into ``k`` near-equal bins by the
    person's treatment sequence length (ties broken by person id)."""
    if len(report.correlations) < k:
        raise InsufficientDataError(
            f"cannot form {k} bins from {len(report.correlations)} correlations"
        )
    keyed = sorted(
        ((stats(store.person(c.person_id)).sequence_length, c.person_id, c)
         for c in report.correlations),
    )
    chunks = np.array_split(np.arange(len(keyed)), k)
    bins: list[SequenceBin] = []
    for i, chunk in enumerate(chunks, start=1):
        members = [keyed[j] for j in chunk]
        corrs = [c.coefficient for _, _, c in members]
        bins.append(
            SequenceBin(
                index=i,
                min_length=members[0][0],
                max_length=members[-1][0],
                n=len(members),
                significant_portion=sum(c.significant for _, _, c in members) / len(members),
                median_correlation=float(np.median(corrs)),
            )
        )
    return bins


def sweep(evaluator: CohortEvaluator, person_ids: Sequence[str],
          gammas: Sequence[float], ys: Sequence[float],
          alpha: float = DEFAULT_ALPHA) -> list[SweepCell]:
    """One row per (gamma, y): the pooled EQ-VAS correlation and the
    maximum-pain median correlation for the group."""
    cells: list[SweepCell] = []
    for gamma in gammas:
        for y in ys:
            spec = make_spec(y, gamma)
            eq = eqvas_vs_hi(evaluator, person_ids, spec, alpha)
            mp = maxpain_vs_hi(evaluator, person_ids, spec, alpha)
            cells.append(
                SweepCell(
                    gamma=gamma,
                    y=y,
                    eqvas_n=eq.n,
                    eqvas_coefficient=eq.coefficient,
                    eqvas_p=eq.p_value,
                    maxpain_n=mp.n,
                    maxpain_median=mp.median,
                    maxpain_significant_portion=mp.significant_portion,
                )
            )
    return cells
