"""Integration of the chord shortening flow in chart coordinates.

Each endpoint moves with ambient velocity ``-eta^T`` (minus the tangential
part of the outward unit conormal).  The state is the pair of chart points,
so endpoints stay on Sigma exactly; the velocity is pulled back through the
chart Jacobian.  Steps are classical RK4 with step-doubling error control,
and the run ends in one of four outcomes: the chord shrinks to a point, it
converges to an orthogonal geodesic chord, the time budget runs out, or the
integrator fails.

The integrator is vectorized over a batch of chords (``run_many``), which is
what the census uses; ``run`` is the single-chord front end that also
records a trajectory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .chordcore import Chord, boundary_angle, conormal_data, make_chord
from .errors import DegenerateChord, StepRejected
from .manifold import ChartPoint, ManifoldModel, pullback_velocity

log = logging.getLogger(__name__)

ELL_SLACK = 1e-12
MAX_HALVINGS = 20
BISECT_TOL = 1e-14


@dataclass(frozen=True)
class FlowParams:
    dt_init: float = 1e-2
    dt_max: float = 1e-1
    t_max: float = 200.0
    eps_shrink: float = 1e-6
    eps_ogc: float = 1e-8
    ogc_dwell: int = 10
    safety: float = 0.9
    shrink_cap: float = 0.2  # dt <= shrink_cap * ell
    tol: float = 1e-9  # step-doubling acceptance, relative to 1 + |state|
    report_dt: float | None = None  # None: record every accepted step

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "t_max", "eps_shrink", "eps_ogc", "safety",
                     "shrink_cap", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FlowParams.{name} must be positive")
        if self.ogc_dwell < 1:
            raise ValueError("FlowParams.ogc_dwell must be >= 1")
        if self.report_dt is not None and not self.report_dt > 0:
            raise ValueError("FlowParams.report_dt must be positive")


@dataclass(frozen=True)
class FlowState:
    t: float
    chord: Chord
    ell: float
    eta_t_norm_sq: float
    theta: tuple | None = None  # (Theta(p), Theta(q)) for planar boundaries

    @classmethod
    def of(cls, t: float, chord: Chord) -> "FlowState":
        cd = conormal_data(chord)
        theta = None
        if chord.m.is_planar_domain_boundary:
            th = boundary_angle(chord)
            theta = (th.p, th.q)
        return cls(float(t), chord, chord.ell, cd.eta_T.l2_sq, theta)

    @property
    def residual(self) -> float:
        return math.sqrt(self.eta_t_norm_sq)


# ---------------------------------------------------------------- outcomes


@dataclass(frozen=True)
class ShrunkToPoint:
    t_final: float
    limit_point: np.ndarray
    kind: str = field(default="shrunk", init=False)


@dataclass(frozen=True)
class ConvergedToOGC:
    chord: Chord
    residual: float
    t_final: float
    kind: str = field(default="ogc", init=False)


@dataclass(frozen=True)
class BudgetExhausted:
    state: FlowState
    kind: str = field(default="budget", init=False)


@dataclass(frozen=True)
class StepFailure:
    reason: str
    t: float
    kind: str = field(default="failure", init=False)


FlowOutcome = ShrunkToPoint | ConvergedToOGC | BudgetExhausted | StepFailure


@dataclass
class Trajectory:
    samples: list[FlowState]
    outcome: FlowOutcome | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def __len__(self):
        return len(self.samples)


def classify(states: Sequence[FlowState], params: FlowParams) -> FlowOutcome | None:
    """Threshold classification of the tail of a state sequence.

    Returns None while none of the stopping rules applies.
    """
    if not states:
        raise ValueError("classify needs at least one state")
    last = states[-1]
    if last.ell < params.eps_shrink:
        mid = 0.5 * (last.chord.xp + last.chord.xq)
        return ShrunkToPoint(last.t, mid)
    tail = states[-params.ogc_dwell:]
    if len(tail) == params.ogc_dwell and all(s.residual < params.eps_ogc for s in tail):
        return ConvergedToOGC(last.chord, last.residual, last.t)
    if last.t >= params.t_max:
        return BudgetExhausted(last)
    return None


# ------------------------------------------------------------ vector field


class _Field:
    """Batched right-hand side; states are (B, 2, k) chart arrays with (B, 2) chart ids."""

    def __init__(self, m: ManifoldModel):
        self.m = m

    def __call__(self, C, U):
        x, J, _ = self.m.jets(C, U, order=1)
        d = x[:, 0] - x[:, 1]
        ell = np.sqrt(np.einsum("bn,bn->b", d, d))
        eta_p = d / ell[:, None]
        eta = np.stack([eta_p, -eta_p], axis=1)
        b = np.einsum("btnk,btn->btk", J, eta)
        if self.m.k == 1:
            g = np.einsum("btn,btn->bt", J[..., 0], J[..., 0])
            bad = g <= 0
            w = b / np.where(bad, 1.0, g)[..., None]
        else:
            G = np.einsum("btni,btnj->btij", J, J)
            det = np.linalg.det(G)
            scale = np.einsum("btii->bt", G) ** self.m.k
            bad = ~(np.abs(det) > 1e-20 * scale)
            if bad.any():
                G = np.where(bad[..., None, None], np.eye(self.m.k), G)
            w = np.linalg.solve(G, b[..., None])[..., 0]
        etaT = np.einsum("btnk,btk->btn", J, w)
        resid_sq = np.einsum("btn,btn->b", etaT, etaT)
        return -w, ell, resid_sq, bad.any(axis=1) | ~np.isfinite(ell)


def _rk4(f: _Field, C, U, h, k1=None):
    hb = h[:, None, None]
    if k1 is None:
        k1 = f(C, U)[0]
    k2 = f(C, U + 0.5 * hb * k1)[0]
    k3 = f(C, U + 0.5 * hb * k2)[0]
    k4 = f(C, U + hb * k3)[0]
    return U + hb / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ------------------------------------------------------------- operations


def velocity(c: Chord):
    """Chart velocities of p and q (ambient velocities are -eta^T)."""
    cd = conormal_data(c)
    return (pullback_velocity(c.m, c.p, -cd.eta_T.f0),
            pullback_velocity(c.m, c.q, -cd.eta_T.f1))


def _state_arrays(c: Chord):
    C = np.array([[c.p.chart, c.q.chart]])
    U = np.array([[c.p.u, c.q.u]], dtype=float)
    return C, U


def _chord_from_arrays(m: ManifoldModel, C, U) -> Chord:
    return make_chord(m, ChartPoint(int(C[0]), U[0]), ChartPoint(int(C[1]), U[1]))


def step(s: FlowState, dt: float) -> FlowState:
    """One classical RK4 step of size ``dt`` (halved until length does not increase)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = s.chord.m
    f = _Field(m)
    C, U = _state_arrays(s.chord)
    for _ in range(MAX_HALVINGS + 1):
        V = _rk4(f, C, U, np.array([dt]))
        try:
            chord = _chord_from_arrays(m, C[0], V[0])
        except DegenerateChord:
            chord = None
        if chord is not None and chord.ell <= s.ell + ELL_SLACK:
            return FlowState.of(s.t + dt, chord)
        dt *= 0.5
    raise StepRejected(f"length kept increasing after {MAX_HALVINGS} halvings at t={s.t}")


@dataclass
class _BatchResult:
    kind: np.ndarray  # object array of outcome kinds
    t: np.ndarray
    C: np.ndarray
    U: np.ndarray
    ell: np.ndarray
    resid_sq: np.ndarray
    reason: list


def _integrate(m: ManifoldModel, C0, U0, params: FlowParams, recorder=None) -> _BatchResult:
    """Adaptive batched integration; every chord runs until it is classified."""
    f = _Field(m)
    B = len(U0)
    C = np.array(C0, dtype=int)
    U = np.array(U0, dtype=float)
    t = np.zeros(B)
    dt = np.full(B, min(params.dt_init, params.dt_max))
    dwell = np.zeros(B, dtype=int)
    halvings = np.zeros(B, dtype=int)
    kind = np.full(B, None, dtype=object)
    reason = [""] * B
    next_report = np.full(B, params.report_dt if params.report_dt else np.inf)

    k1, ell, resid_sq, bad = f(C, U)
    for i in np.flatnonzero(bad):
        kind[i], reason[i] = "failure", "singular chart Jacobian at initial chord"
    active = kind == None  # noqa: E711
    if recorder is not None:
        recorder(0, t[0], C[0], U[0])

    while active.any():
        idx = np.flatnonzero(active)
        Ci, Ui, ti = C[idx], U[idx], t[idx]
        h = np.minimum(dt[idx], params.dt_max)
        h = np.minimum(h, params.shrink_cap * ell[idx])
        h = np.minimum(h, params.t_max - ti)
        clip_report = next_report[idx] - ti
        lands = clip_report <= h * (1 + 1e-12)
        h = np.where(lands, clip_report, h)
        clipped = h < dt[idx]

        k1i = k1[idx]
        full = _rk4(f, Ci, Ui, h, k1i)
        # A step cut short to land on a report time, at most half the step the
        # controller proposed, has predicted error <= tol/32; skip the estimate.
        trusted = lands & (h <= 0.5 * dt[idx])
        half = full.copy()
        err = np.zeros(len(idx))
        chk = np.flatnonzero(~trusted)
        if chk.size:
            hc = h[chk]
            mid = _rk4(f, Ci[chk], Ui[chk], 0.5 * hc, k1i[chk])
            half[chk] = _rk4(f, Ci[chk], mid, 0.5 * hc)
            err[chk] = np.sqrt(np.sum((full[chk] - half[chk]) ** 2, axis=(1, 2)))
        tol = params.tol * (1.0 + np.sqrt(np.sum(Ui**2, axis=(1, 2))))
        k1n, elln, rsqn, badn = f(Ci, half)
        ok = (err <= tol) & ~badn & (elln <= ell[idx] + ELL_SLACK) & np.isfinite(err)

        # rejected steps: halve
        rej = idx[~ok]
        dt[rej] = h[~ok] * 0.5
        halvings[rej] += 1
        for i in rej[halvings[rej] > MAX_HALVINGS]:
            kind[i] = "failure"
            reason[i] = f"step rejected {MAX_HALVINGS} times in a row"
            active[i] = False

        acc = idx[ok]
        if acc.size == 0:
            continue
        hok, errok = h[ok], err[ok]
        halvings[acc] = 0
        # shrink crossing: bisect the single-step map for the time ell hits eps_shrink
        crossing = elln[ok] < params.eps_shrink
        new_t = t[acc] + hok
        new_U = half[ok]
        if crossing.any():
            ci = np.flatnonzero(crossing)
            s_hit, U_hit = _bisect_shrink(f, C[acc[ci]], U[acc[ci]], k1[acc[ci]], hok[ci],
                                          params.eps_shrink)
            new_t[ci] = t[acc[ci]] + s_hit
            new_U[ci] = U_hit
        landed = lands[ok] & ~crossing
        new_t = np.where(landed, next_report[acc], new_t)
        next_report[acc] = np.where(landed, next_report[acc] + params.report_dt
                                    if params.report_dt else np.inf, next_report[acc])
        t[acc] = new_t
        U[acc] = new_U
        # periodic reduction and atlas switching happen only between steps
        Cn, Un = m.rechart(C[acc].reshape(-1), U[acc].reshape(-1, m.k))
        C[acc] = Cn.reshape(-1, 2)
        U[acc] = m.reduce(C[acc], Un.reshape(-1, 2, m.k))
        moved = np.any(C[acc] != Ci[ok], axis=1) | crossing
        k1n_ok, elln_ok, rsqn_ok = k1n[ok], elln[ok], rsqn[ok]
        if moved.any():
            k1n_ok, elln_ok, rsqn_ok, _ = f(C[acc], U[acc])
        k1[acc], ell[acc], resid_sq[acc] = k1n_ok, elln_ok, rsqn_ok

        # step size control
        with np.errstate(divide="ignore"):
            factor = np.where(errok > 0, params.safety * (tol[ok] / errok) ** 0.2, 4.0)
        factor = np.clip(factor, 0.2, 4.0)
        grown = np.minimum(params.dt_max, hok * factor)
        dt[acc] = np.where(clipped[ok], np.maximum(dt[acc], grown), grown)

        # classification
        dwell[acc] = np.where(resid_sq[acc] < params.eps_ogc**2, dwell[acc] + 1, 0)
        for j, i in enumerate(acc):
            if recorder is not None and (params.report_dt is None or landed[j] or crossing[j]):
                recorder(i, t[i], C[i], U[i])
            if ell[i] < params.eps_shrink:
                kind[i] = "shrunk"
            elif dwell[i] >= params.ogc_dwell:
                kind[i] = "ogc"
            elif t[i] >= params.t_max * (1 - 1e-15):
                kind[i] = "budget"
            if kind[i] is not None:
                active[i] = False
                if recorder is not None and params.report_dt is not None and not (
                        landed[j] or crossing[j]):
                    recorder(i, t[i], C[i], U[i])
    return _BatchResult(kind, t, C, U, ell, resid_sq, reason)


def _bisect_shrink(f: _Field, C, U, k1, h, eps):
    """Per chord, find s in (0, h] with ell(RK4 step of size s) = eps."""
    lo = np.zeros_like(h)
    hi = h.copy()
    for _ in range(200):
        if np.all(hi - lo <= BISECT_TOL * np.maximum(1.0, hi)):
            break
        mid = 0.5 * (lo + hi)
        V = _rk4(f, C, U, mid, k1)
        ell_mid = f(C, V)[1]
        above = ell_mid >= eps
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return hi, _rk4(f, C, U, hi, k1)


def _outcome(m, res: _BatchResult, i: int, params: FlowParams, last_state=None) -> FlowOutcome:
    kind = res.kind[i]
    if kind == "failure":
        return StepFailure(res.reason[i], float(res.t[i]))
    chart_p = ChartPoint(int(res.C[i, 0]), res.U[i, 0])
    chart_q = ChartPoint(int(res.C[i, 1]), res.U[i, 1])
    if kind == "shrunk":
        x = m.jets(np.array([chart_p.chart, chart_q.chart]), res.U[i], order=1)[0]
        return ShrunkToPoint(float(res.t[i]), 0.5 * (x[0] + x[1]))
    chord = make_chord(m, chart_p, chart_q)
    if kind == "ogc":
        return ConvergedToOGC(chord, math.sqrt(res.resid_sq[i]), float(res.t[i]))
    return BudgetExhausted(last_state or FlowState.of(res.t[i], chord))


def _initial_arrays(m: ManifoldModel, chord: Chord):
    if chord.m is not m:
        raise ValueError("chord belongs to a different manifold")
    return _state_arrays(chord)


def run(m: ManifoldModel, initial: Chord, params: FlowParams = FlowParams()):
    """Flow one chord; returns ``(Trajectory, FlowOutcome)``.

    Samples are recorded at every accepted step, or on the uniform grid
    ``params.report_dt`` (steps are clipped to land on it), plus the final
    state.  A shrinking run ends exactly when the length crosses
    ``eps_shrink`` (located by bisection on the crossing step).
    """
    C0, U0 = _initial_arrays(m, initial)
    raw: list[tuple] = []

    def recorder(i, t, C, U):
        raw.append((float(t), C.copy(), U.copy()))

    res = _integrate(m, C0, U0, params, recorder)
    samples = []
    for t, C, U in raw:
        try:
            samples.append(FlowState.of(t, _chord_from_arrays(m, C, U)))
        except DegenerateChord:
            break
    outcome = _outcome(m, res, 0, params, samples[-1] if samples else None)
    return Trajectory(samples, outcome), outcome


def run_many(m: ManifoldModel, chords: Sequence[Chord], params: FlowParams = FlowParams()):
    """Flow a batch of chords without recording trajectories; returns outcomes in order."""
    if not chords:
        return []
    params = replace(params, report_dt=None)
    C0 = np.array([[c.p.chart, c.q.chart] for c in chords], dtype=int)
    U0 = np.array([[c.p.u, c.q.u] for c in chords], dtype=float)
    res = _integrate(m, C0, U0, params)
    return [_outcome(m, res, i, params) for i in range(len(chords))]
