"""Sweeps of initial chords and the census of their orthogonal-chord limits."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .chordcore import Chord, make_chord, ogc_residual
from .errors import ConfigError, DegenerateChord, EmptyPlan
from .flowengine import (BudgetExhausted, ConvergedToOGC, FlowParams, ShrunkToPoint,
                         StepFailure, _integrate, _outcome, run_many)
from .manifold import ManifoldModel, rebuild


@dataclass(frozen=True)
class SweepPlan:
    resolution: int | tuple[int, ...] = 24
    min_length_frac: float = 0.05  # of the manifold diameter
    params: FlowParams = field(default_factory=FlowParams)
    tol: float = 1e-4
    batch: int = 2048

    def __post_init__(self):
        if np.any(np.atleast_1d(self.resolution) < 1):
            raise ConfigError("resolution must be a positive integer")
        if not self.tol > 0:
            raise ConfigError("dedupe tolerance must be positive")
        if self.min_length_frac < 0:
            raise ConfigError("min_length_frac must be non-negative")
        if self.batch < 1:
            raise ConfigError("batch must be positive")


@dataclass(frozen=True)
class Limit:
    """An OGC limit reduced to ambient endpoints."""

    xp: np.ndarray
    xq: np.ndarray
    length: float
    residual: float
    chord: Chord | None = None


@dataclass
class Cluster:
    representative: Limit
    members: list[Limit]

    @property
    def basin(self) -> int:
        return len(self.members)


@dataclass
class OgcCensus:
    clusters: list[Cluster]
    shrink_count: int
    budget_count: int
    failure_count: int
    total: int
    cross_component_shrinks: int = 0
    limits: list[Limit] = field(default_factory=list)
    failures: list[tuple[int, str, float]] = field(default_factory=list)

    @property
    def ogc_count(self) -> int:
        return sum(c.basin for c in self.clusters)


def pair_distance(a: Limit, b: Limit) -> float:
    """Unordered-pair metric; invariant under swapping either pair's endpoints."""
    direct = np.linalg.norm(a.xp - b.xp) + np.linalg.norm(a.xq - b.xq)
    swapped = np.linalg.norm(a.xp - b.xq) + np.linalg.norm(a.xq - b.xp)
    return float(min(direct, swapped))


def _canonical_key(lim: Limit):
    lo, hi = sorted((tuple(lim.xp), tuple(lim.xq)))
    return lo + hi


def dedupe(limits: list[Limit], tol: float) -> list[Cluster]:
    """Single-linkage clusters under the unordered-pair metric.

    Limits are processed in lexicographic order of their sorted endpoints, so
    the result does not depend on input order.  The representative of a
    cluster is its lowest-residual member.
    """
    if not tol > 0:
        raise ConfigError("tol must be positive")
    order = sorted(range(len(limits)), key=lambda i: _canonical_key(limits[i]))
    items = [limits[i] for i in order]
    n = len(items)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if n:
        P = np.array([lim.xp for lim in items])
        Q = np.array([lim.xq for lim in items])
        for i in range(n):
            Pr, Qr = P[i + 1:], Q[i + 1:]
            direct = np.linalg.norm(Pr - P[i], axis=1) + np.linalg.norm(Qr - Q[i], axis=1)
            swapped = np.linalg.norm(Pr - Q[i], axis=1) + np.linalg.norm(Qr - P[i], axis=1)
            for j in np.nonzero(np.minimum(direct, swapped) <= tol)[0]:
                a, b = find(i), find(i + 1 + int(j))
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict[int, list[Limit]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(items[i])
    clusters = []
    for root in sorted(groups):
        members = groups[root]
        best = min(members, key=lambda lim: (lim.residual, _canonical_key(lim)))
        clusters.append(Cluster(best, members))
    return clusters


def sample_chords(m: ManifoldModel, plan: SweepPlan) -> list[Chord]:
    """One initial chord per unordered grid pair (i < j), minus near-diagonal pairs."""
    if np.any(np.atleast_1d(plan.resolution) < 2):
        raise EmptyPlan(f"resolution {plan.resolution} yields no chords (need >= 2)")
    pts = m.sample_points(plan.resolution)
    x = np.array([m.jets(np.array([p.chart]), p.u[None, :], order=1)[0][0] for p in pts])
    dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    min_len = plan.min_length_frac * float(dist.max()) if len(pts) else 0.0
    chords = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if dist[i, j] < max(min_len, 1e-12):
                continue
            try:
                chords.append(make_chord(m, pts[i], pts[j]))
            except DegenerateChord:
                continue
    if not chords:
        raise EmptyPlan("every grid pair was excluded as near-diagonal")
    return chords


def _run_chunk(args):
    # Charts hold closures, so workers rebuild the manifold from its description
    # and send back plain arrays.
    source, C0, U0, params = args
    return _integrate(rebuild(source), C0, U0, replace(params, report_dt=None))


def _component(m: ManifoldModel, chord: Chord, u: int) -> int:
    return m.charts[chord.point(u).chart].component


def census(m: ManifoldModel, plan: SweepPlan, jobs: int = 1,
           chords: list[Chord] | None = None) -> OgcCensus:
    """Flow every initial chord and cluster the OGC limits.

    Flows run in vectorized batches; with ``jobs > 1`` batches are spread over
    worker processes.  Aggregation happens afterwards in input order, so the
    census does not depend on scheduling.
    """
    chords = sample_chords(m, plan) if chords is None else chords
    chunks = [chords[i:i + plan.batch] for i in range(0, len(chords), plan.batch)]
    if jobs > 1 and len(chunks) > 1:
        tasks = [(m.source, np.array([[c.p.chart, c.q.chart] for c in ch], dtype=int),
                  np.array([[c.p.u, c.q.u] for c in ch], dtype=float), plan.params)
                 for ch in chunks]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_run_chunk, tasks))
        results = [[_outcome(m, res, i, plan.params) for i in range(len(ch))]
                   for res, ch in zip(batches, chunks)]
    else:
        results = [run_many(m, ch, plan.params) for ch in chunks]
    outcomes = [o for r in results for o in r]

    limits, failures = [], []
    shrink = budget = cross_shrink = 0
    for idx, (c0, out) in enumerate(zip(chords, outcomes)):
        if isinstance(out, ConvergedToOGC):
            c = out.chord
            limits.append(Limit(c.xp.copy(), c.xq.copy(), c.ell, out.residual, c))
        elif isinstance(out, ShrunkToPoint):
            shrink += 1
            if _component(m, c0, 0) != _component(m, c0, 1):
                cross_shrink += 1
        elif isinstance(out, BudgetExhausted):
            budget += 1
        elif isinstance(out, StepFailure):
            failures.append((idx, out.reason, out.t))
    # A chord joining two components is bounded below in length by their gap,
    # so cross_shrink must stay 0; callers treat a nonzero count as a defect.
    clusters = dedupe(limits, plan.tol)
    return OgcCensus(clusters, shrink, budget, len(failures), len(chords),
                     cross_shrink, limits, failures)


def recheck_representatives(cen: OgcCensus, m: ManifoldModel) -> list[float]:
    """OGC residuals of the representatives, recomputed from their chart points."""
    out = []
    for cl in cen.clusters:
        c = cl.representative.chord
        out.append(ogc_residual(make_chord(m, c.p, c.q)) if c is not None else math.nan)
    return out


def reversed_chords(chords: list[Chord]) -> list[Chord]:
    return [c.reversed() for c in chords]
