"""Residual checks of the evolution equations along computed trajectories.

Time derivatives are centered differences on uniformly reported samples
(``FlowParams.report_dt``); the right-hand sides are assembled pointwise from
chord and manifold quantities.  A check whose preconditions are not met is
reported as skipped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import manifold as mf
from .chordcore import Chord, EndpointField, conormal_data, half_laplacian, make_chord
from .errors import NotPlanarBoundary, PreconditionNotMet, TooFewSamples
from .flowengine import FlowParams, Trajectory, run
from .manifold import ChartPoint, ManifoldModel, gram_schmidt, sff_from_jet

UNIFORM_RTOL = 1e-9


@dataclass
class ResidualReport:
    equation: str
    times: np.ndarray
    residuals: np.ndarray
    lhs_max: float = 0.0  # largest |left-hand side| seen, for "both sides zero" checks
    rhs_max: float = 0.0
    order: float | None = None

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0

    def as_dict(self) -> dict:
        return {"equation": self.equation, "max_residual": self.max_residual,
                "lhs_max": self.lhs_max, "rhs_max": self.rhs_max, "order": self.order,
                "samples": int(len(self.residuals))}


# ------------------------------------------------------------ sample access


def uniform_samples(traj: Trajectory):
    """Longest prefix of samples on a uniform time grid; returns (states, dt)."""
    s = traj.samples
    if len(s) < 3:
        raise TooFewSamples(f"need >= 3 samples, got {len(s)}")
    dt = s[1].t - s[0].t
    n = 2
    while n < len(s) and abs((s[n].t - s[n - 1].t) - dt) <= UNIFORM_RTOL * max(1.0, s[n].t):
        n += 1
    if n < 3 or not dt > 0:
        raise TooFewSamples("fewer than 3 uniformly spaced samples")
    return s[:n], dt


def _centered(values: np.ndarray, dt: float) -> np.ndarray:
    return (values[2:] - values[:-2]) / (2.0 * dt)


@dataclass
class _Geometry:
    """Everything the right-hand sides need at one chord."""

    ell: float
    eta: np.ndarray  # (2, n)
    etaT: np.ndarray  # (2, n)
    etaN: np.ndarray
    J: np.ndarray  # (2, n, k)
    H: np.ndarray
    basis: np.ndarray  # (2, n, k)

    @classmethod
    def of(cls, c: Chord) -> "_Geometry":
        cd = conormal_data(c)
        J = np.stack([c.jet_p.J, c.jet_q.J])
        H = np.stack([c.jet_p.H, c.jet_q.H])
        return cls(c.ell, np.stack(list(cd.eta)), np.stack(list(cd.eta_T)),
                   np.stack(list(cd.eta_N)), J, H, gram_schmidt(J))

    def project(self, u: int, v: np.ndarray) -> np.ndarray:
        J = self.J[u]
        return J @ np.linalg.solve(J.T @ J, J.T @ v)

    def A(self, u: int, a, b) -> np.ndarray:
        return sff_from_jet(self.J[u], self.H[u], a, b)


def eta_T_rhs(g: _Geometry) -> np.ndarray:
    """Right side of the eta^T evolution equation at both endpoints, (2, n)."""
    ell = g.ell
    norm_sq = float(np.sum(g.etaT**2))
    out = np.empty_like(g.etaT)
    for u in (0, 1):
        other = g.etaT[1 - u]
        lap = (g.etaT[u] - other) / ell
        tangential = np.zeros_like(lap)
        for i in range(g.basis.shape[-1]):
            e = g.basis[u][:, i]
            tangential += np.dot(g.A(u, g.etaT[u], e), g.etaN[u]) * e
        other_normal = other - g.project(u, other)
        out[u] = (-lap + norm_sq / ell * g.etaT[u] - tangential - other_normal / ell
                  - g.A(u, g.etaT[u], g.etaT[u]))
    return out


def eta_norm_rhs(g: _Geometry) -> float:
    ell = g.ell
    norm_sq = float(np.sum(g.etaT**2))
    lap = (g.etaT[0] - g.etaT[1]) / ell
    lap_sq = 2.0 * float(np.dot(lap, lap))
    curv = sum(float(np.dot(g.A(u, g.etaT[u], g.etaT[u]), g.eta[u])) for u in (0, 1))
    return -0.5 * ell * lap_sq + norm_sq**2 / ell - curv


def _require_samples(traj):
    states, dt = uniform_samples(traj)
    return states, dt, [s.t for s in states]


def check_length_evolution(traj: Trajectory) -> ResidualReport:
    """d ell/dt = -||eta^T||^2."""
    states, dt, t = _require_samples(traj)
    ell = np.array([s.ell for s in states])
    rhs = -np.array([s.eta_t_norm_sq for s in states])
    lhs = _centered(ell, dt)
    return ResidualReport("length", np.array(t[1:-1]), np.abs(lhs - rhs[1:-1]),
                          float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs[1:-1]))))


def check_eta_evolution(traj: Trajectory, m: ManifoldModel | None = None) -> ResidualReport:
    states, dt, t = _require_samples(traj)
    geo = [_Geometry.of(s.chord) for s in states]
    etaT = np.stack([g.etaT for g in geo])
    lhs = (etaT[2:] - etaT[:-2]) / (2.0 * dt)
    rhs = np.stack([eta_T_rhs(g) for g in geo[1:-1]])
    resid = np.max(np.linalg.norm(lhs - rhs, axis=-1), axis=-1)
    return ResidualReport("eta_T", np.array(t[1:-1]), resid,
                          float(np.max(np.linalg.norm(lhs, axis=-1))),
                          float(np.max(np.linalg.norm(rhs, axis=-1))))


def check_eta_norm_evolution(traj: Trajectory, m: ManifoldModel | None = None) -> ResidualReport:
    """1/2 d/dt ||eta^T||^2 against its closed-form right side."""
    states, dt, t = _require_samples(traj)
    half_sq = 0.5 * np.array([s.eta_t_norm_sq for s in states])
    lhs = _centered(half_sq, dt)
    rhs = np.array([eta_norm_rhs(_Geometry.of(s.chord)) for s in states[1:-1]])
    return ResidualReport("eta_T_norm", np.array(t[1:-1]), np.abs(lhs - rhs),
                          float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))


# ------------------------------------------------------------------ planar


@dataclass
class _PlanarGeometry:
    ell: float
    theta: np.ndarray  # (2,)
    eta: np.ndarray  # (2, 2)
    xi: np.ndarray  # (2, 2)
    nu: np.ndarray
    kappa: np.ndarray  # (2,)

    @classmethod
    def of(cls, c: Chord) -> "_PlanarGeometry":
        if not c.m.is_planar_domain_boundary:
            raise NotPlanarBoundary(f"{c.m.name} is not a planar domain boundary")
        fr = [mf.planar_frame_from_jet(c.jet(u).J, c.jet(u).H,
                                       c.m.charts[c.point(u).chart].orientation) for u in (0, 1)]
        xi = np.stack([fr[0][0], fr[1][0]])
        nu = np.stack([fr[0][1], fr[1][1]])
        kappa = np.array([float(fr[0][2]), float(fr[1][2])])
        eta_p = (c.xp - c.xq) / c.ell
        eta = np.stack([eta_p, -eta_p])
        theta = np.array([np.dot(eta[0], xi[0]), -np.dot(eta[1], xi[1])])
        return cls(c.ell, theta, eta, xi, nu, kappa)

    @property
    def X(self) -> float:
        return float(np.dot(self.xi[0], self.xi[1]))

    @property
    def bend(self) -> np.ndarray:
        """k <-eta, nu> at both endpoints."""
        return self.kappa * np.einsum("un,un->u", -self.eta, self.nu)


def theta_rhs(g: _PlanarGeometry):
    """Right sides for (dTheta/dt, d bar(Theta)/dt, 1/2 d/dt ||Theta||^2)."""
    th, ell, X = g.theta, g.ell, g.X
    nsq = float(np.dot(th, th))
    bar = float(th.sum())
    lap = half_laplacian(EndpointField.of(th[0], th[1]), ell)
    lap = np.array([float(lap.f0), float(lap.f1)])
    pointwise = -lap + (nsq + ell * g.bend) * th / ell + (1.0 + X) * (th - bar) / ell
    d_bar = (nsq - 1.0 - X) * bar / ell + float(np.sum(g.bend * th))
    d_norm = (0.5 * ell * X * float(np.dot(lap, lap)) + float(np.sum(g.bend * th**2))
              + (nsq - 1.0 - X) * nsq / ell)
    return pointwise, d_bar, d_norm


def check_theta_evolution(traj: Trajectory, m: ManifoldModel | None = None):
    """Boundary-angle equation and its two corollaries; returns three reports."""
    states, dt, t = _require_samples(traj)
    geo = [_PlanarGeometry.of(s.chord) for s in states]
    th = np.stack([g.theta for g in geo])
    rhs = [theta_rhs(g) for g in geo[1:-1]]
    tt = np.array(t[1:-1])
    lhs_pt = (th[2:] - th[:-2]) / (2.0 * dt)
    rhs_pt = np.stack([r[0] for r in rhs])
    lhs_bar = _centered(th.sum(axis=1), dt)
    rhs_bar = np.array([r[1] for r in rhs])
    lhs_n = _centered(0.5 * np.sum(th**2, axis=1), dt)
    rhs_n = np.array([r[2] for r in rhs])
    return (
        ResidualReport("theta", tt, np.max(np.abs(lhs_pt - rhs_pt), axis=1),
                       float(np.max(np.abs(lhs_pt))), float(np.max(np.abs(rhs_pt)))),
        ResidualReport("theta_bar", tt, np.abs(lhs_bar - rhs_bar),
                       float(np.max(np.abs(lhs_bar))), float(np.max(np.abs(rhs_bar)))),
        ResidualReport("theta_norm", tt, np.abs(lhs_n - rhs_n),
                       float(np.max(np.abs(lhs_n))), float(np.max(np.abs(rhs_n)))),
    )


def check_planar_velocity_identity(traj: Trajectory, m: ManifoldModel | None = None) -> ResidualReport:
    """|-eta^T - Theta N| per endpoint, with N(p) = -xi(p), N(q) = xi(q)."""
    res, times = [], []
    for s in traj.samples:
        g = _PlanarGeometry.of(s.chord)
        etaT = np.stack(list(conormal_data(s.chord).eta_T))
        N = np.stack([-g.xi[0], g.xi[1]])
        res.append(float(np.max(np.linalg.norm(-etaT - g.theta[:, None] * N, axis=1))))
        times.append(s.t)
    return ResidualReport("planar_velocity", np.array(times), np.array(res))


def check_theta_norm_identity(traj: Trajectory) -> ResidualReport:
    """||eta^T||^2 = Theta(p)^2 + Theta(q)^2 at every sample."""
    res = [abs(s.eta_t_norm_sq - (s.theta[0] ** 2 + s.theta[1] ** 2)) for s in traj.samples]
    return ResidualReport("theta_norm_identity", traj.times, np.array(res))


# ---------------------------------------------------------------- monotone


@dataclass
class MonotoneReport:
    checks: dict = field(default_factory=dict)  # name -> {"status", "worst", "reason"}

    def status(self, name: str) -> str:
        return self.checks[name]["status"]

    def as_dict(self) -> dict:
        return dict(self.checks)


def _non_decreasing(values, slack):
    worst = float(np.min(np.diff(values))) if len(values) > 1 else 0.0
    return worst >= -slack, worst


def check_monotone(traj: Trajectory, m: ManifoldModel | None = None,
                   slack: float = 1e-10, ell_slack: float = 1e-12) -> MonotoneReport:
    """Length non-increasing; for convex chords in convex planar domains also
    Theta_min >= 0, Theta_min/ell and bar(Theta)/ell non-decreasing."""
    m = m or traj.samples[0].chord.m
    rep = MonotoneReport()
    ell = np.array([s.ell for s in traj.samples])
    ok, worst = _non_decreasing(-ell, ell_slack)
    rep.checks["ell_nonincreasing"] = {"status": "pass" if ok else "fail", "worst": -worst}
    names = ("theta_min_nonnegative", "theta_min_over_ell", "theta_bar_over_ell")
    reason = None
    if not m.is_planar_domain_boundary:
        reason = "not a planar domain boundary"
    elif not m.convex_domain:
        reason = "domain not convex"
    elif min(traj.samples[0].theta) < 0:
        reason = "initial chord not convex"
    if reason:
        for name in names:
            rep.checks[name] = {"status": "skip", "reason": reason}
        return rep
    th = np.array([s.theta for s in traj.samples])
    tmin = th.min(axis=1)
    worst = float(tmin.min())
    rep.checks[names[0]] = {"status": "pass" if worst >= -slack else "fail", "worst": worst}
    ok, worst = _non_decreasing(tmin / ell, slack)
    rep.checks[names[1]] = {"status": "pass" if ok else "fail", "worst": worst}
    ok, worst = _non_decreasing(th.sum(axis=1) / ell, slack)
    rep.checks[names[2]] = {"status": "pass" if ok else "fail", "worst": worst}
    return rep


# ----------------------------------------------------------- convergence


def observed_order(coarse: ResidualReport, fine: ResidualReport) -> float:
    """log2 of the ratio of max residuals over the coarse grid's sample times."""
    common = np.isin(np.round(fine.times, 9), np.round(coarse.times, 9))
    fine_max = float(np.max(fine.residuals[common]))
    coarse_max = coarse.max_residual
    if fine_max == 0.0:
        return math.inf if coarse_max > 0 else math.nan
    return math.log2(coarse_max / fine_max)


def flow_samples(m: ManifoldModel, chord: Chord, t_end: float, dt: float,
                 params: FlowParams | None = None) -> Trajectory:
    """Trajectory reported every ``dt`` on [0, t_end]."""
    params = replace(params or FlowParams(), report_dt=dt, t_max=t_end)
    return run(m, chord, params)[0]


def measure_order(check: Callable, m: ManifoldModel, chord: Chord, t_end: float, dt: float,
                  params: FlowParams | None = None, pick: int | None = None):
    """Run ``check`` at report steps dt and dt/2; returns (coarse, fine) with order set."""
    out = []
    for h in (dt, dt / 2):
        rep = check(flow_samples(m, chord, t_end, h, params))
        out.append(rep if pick is None else rep[pick])
    coarse, fine = out
    coarse.order = fine.order = observed_order(coarse, fine)
    return coarse, fine


# -------------------------------------------------------------- calibration


def orientation_calibration(width: float = 1.0, h: float = 0.7) -> tuple[bool, str]:
    """Strip check of the orientation convention against closed forms.

    For p = (0, -h/2), q = (w, h/2): the inward normals are (1, 0) and
    (-1, 0), and Theta(p) = -Theta(q) = h / sqrt(w^2 + h^2).
    """
    m = mf.strip_lines(width)
    c = make_chord(m, ChartPoint(0, np.array([-h / 2])), ChartPoint(1, np.array([h / 2])))
    g = _PlanarGeometry.of(c)
    expect = h / math.hypot(width, h)
    problems = []
    if not np.allclose(g.nu, [[1.0, 0.0], [-1.0, 0.0]], atol=1e-14):
        problems.append(f"inward normals {g.nu.tolist()} (expected [[1,0],[-1,0]])")
    if not np.allclose(g.theta, [expect, -expect], atol=1e-14):
        problems.append(f"Theta {g.theta.tolist()} (expected [{expect}, {-expect}])")
    if problems:
        return False, "orientation field xi is flipped: " + "; ".join(problems)
    return True, "orientation convention matches the strip closed form"


# -------------------------------------------------------------- suites


def _ellipse_diameter_chord(m, degrees=30.0):
    u = math.atan2(2.0 * math.sin(math.radians(degrees)), math.cos(math.radians(degrees)))
    return make_chord(m, u, u + math.pi)


def _entry(suite, name, status, **kw):
    d = {"suite": suite, "check": name, "status": status}
    d.update(kw)
    return d


def _residual_entry(suite, name, rep: ResidualReport, threshold: float):
    ok = rep.max_residual < threshold
    return _entry(suite, name, "pass" if ok else "fail", threshold=threshold, **rep.as_dict())


def _order_entry(suite, name, coarse: ResidualReport, min_order: float = 1.8):
    ok = coarse.order is not None and coarse.order >= min_order
    d = coarse.as_dict()
    d["min_order"] = min_order
    return _entry(suite, name, "pass" if ok else "fail", **d)


def _monotone_entries(suite, rep: MonotoneReport):
    return [_entry(suite, f"monotone:{k}", v["status"], **{kk: vv for kk, vv in v.items()
                                                             if kk != "status"})
            for k, v in rep.checks.items()]


def suite_flat() -> list[dict]:
    m = mf.line()
    c = make_chord(m, -1.0, 1.0)
    traj = flow_samples(m, c, 0.5, 0.01)
    out = [_residual_entry("flat", "length_evolution", check_length_evolution(traj), 1e-10)]
    rep = check_eta_evolution(traj)
    out.append(_entry("flat", "eta_T_both_sides_zero",
                      "pass" if max(rep.lhs_max, rep.rhs_max) < 1e-12 else "fail",
                      **rep.as_dict()))
    rep = check_eta_norm_evolution(traj)
    out.append(_entry("flat", "eta_T_norm_both_sides_zero",
                      "pass" if max(rep.lhs_max, rep.rhs_max) < 1e-12 else "fail",
                      **rep.as_dict()))
    out += _monotone_entries("flat", check_monotone(traj, m))
    return out


def strip_h(traj: Trajectory) -> np.ndarray:
    return np.array([s.chord.xq[1] - s.chord.xp[1] for s in traj.samples])


def suite_strip() -> list[dict]:
    ok, msg = orientation_calibration()
    out = [_entry("strip", "orientation_calibration", "pass" if ok else "fail", message=msg)]
    if not ok:
        return out + [_entry("strip", "theta_checks", "skip",
                             reason="orientation calibration failed")]
    m = mf.strip_lines()
    c = make_chord(m, ChartPoint(0, np.array([-0.5])), ChartPoint(1, np.array([0.5])))
    dt = 1e-3
    traj = flow_samples(m, c, 1.0, dt)
    h = strip_h(traj)
    ode = np.abs(_centered(h, dt) + 2 * h[1:-1] / np.sqrt(1 + h[1:-1] ** 2))
    out.append(_entry("strip", "h_ode", "pass" if ode.max() < 1e-6 else "fail",
                      max_residual=float(ode.max()), threshold=1e-6))
    closed = np.array([s.theta for s in traj.samples]) - np.stack(
        [h / np.sqrt(1 + h**2), -h / np.sqrt(1 + h**2)], axis=1)
    out.append(_entry("strip", "theta_closed_form",
                      "pass" if np.abs(closed).max() < 1e-12 else "fail",
                      max_residual=float(np.abs(closed).max()), threshold=1e-12))
    for rep in check_theta_evolution(traj):
        out.append(_residual_entry("strip", rep.equation + "_evolution", rep, 1e-6))
    out.append(_residual_entry("strip", "eta_T_evolution", check_eta_evolution(traj), 1e-6))
    out.append(_residual_entry("strip", "planar_velocity",
                               check_planar_velocity_identity(traj), 1e-12))
    return out


def suite_circle() -> list[dict]:
    m = mf.circle()
    out = []
    diam = make_chord(m, 0.3, 0.3 + math.pi)
    traj = flow_samples(m, diam, 1.0, 0.05)
    for rep in check_theta_evolution(traj):
        both = max(rep.lhs_max, rep.rhs_max)
        out.append(_entry("circle", f"{rep.equation}_zero_on_diameter",
                          "pass" if both < 1e-12 else "fail", **rep.as_dict()))
    c = make_chord(m, 0.4, 2.9)
    coarse, _ = measure_order(check_eta_evolution, m, c, 0.6, 0.02)
    out.append(_order_entry("circle", "eta_T_evolution_order", coarse))
    out.append(_residual_entry("circle", "planar_velocity",
                               check_planar_velocity_identity(flow_samples(m, c, 0.6, 0.02)),
                               1e-12))
    return out


def suite_ellipse() -> list[dict]:
    m = mf.ellipse()
    c = _ellipse_diameter_chord(m)
    out = []
    coarse, _ = measure_order(check_length_evolution, m, c, 2.0, 0.05)
    out.append(_order_entry("ellipse", "length_evolution_order", coarse))
    coarse, _ = measure_order(check_eta_evolution, m, c, 2.0, 0.05)
    out.append(_order_entry("ellipse", "eta_T_evolution_order", coarse))
    coarse, _ = measure_order(check_eta_norm_evolution, m, c, 2.0, 0.05)
    out.append(_order_entry("ellipse", "eta_T_norm_evolution_order", coarse))
    convex = make_chord(m, 2.2, 0.6)
    for i, name in enumerate(("theta", "theta_bar", "theta_norm")):
        coarse, _ = measure_order(check_theta_evolution, m, convex, 0.5, 0.02, pick=i)
        out.append(_order_entry("ellipse", f"{name}_evolution_order", coarse))
    traj, _ = run(m, convex)
    out += _monotone_entries("ellipse", check_monotone(traj, m))
    out.append(_residual_entry("ellipse", "planar_velocity",
                               check_planar_velocity_identity(traj), 1e-12))
    out.append(_residual_entry("ellipse", "theta_norm_identity",
                               check_theta_norm_identity(traj), 1e-12))
    return out


def suite_sphere() -> list[dict]:
    m = mf.sphere()
    c = make_chord(m, (0.9, 0.2), (2.0, 2.5))
    coarse, _ = measure_order(check_eta_evolution, m, c, 1.0, 0.05)
    out = [_order_entry("sphere", "eta_T_evolution_order", coarse)]
    coarse, _ = measure_order(check_eta_norm_evolution, m, c, 1.0, 0.05)
    out.append(_order_entry("sphere", "eta_T_norm_evolution_order", coarse))
    return out


def suite_ellipsoid() -> list[dict]:
    m = mf.ellipsoid()
    c = make_chord(m, (0.9, 0.2), (2.0, 2.5))
    coarse, _ = measure_order(check_eta_evolution, m, c, 1.0, 0.05)
    out = [_order_entry("ellipsoid", "eta_T_evolution_order", coarse)]
    coarse, _ = measure_order(check_eta_norm_evolution, m, c, 1.0, 0.05)
    out.append(_order_entry("ellipsoid", "eta_T_norm_evolution_order", coarse))
    return out


SUITES: dict[str, Callable[[], list[dict]]] = {
    "flat": suite_flat,
    "strip": suite_strip,
    "circle": suite_circle,
    "ellipse": suite_ellipse,
    "sphere": suite_sphere,
    "ellipsoid": suite_ellipsoid,
}


def run_suites(selector: str = "all") -> list[dict]:
    if selector == "all":
        names = list(SUITES)
    elif selector in SUITES:
        names = [selector]
    else:
        raise PreconditionNotMet(
            f"unknown suite {selector!r}; valid suites: all, {', '.join(SUITES)}")
    entries = []
    for name in names:
        entries += SUITES[name]()
    return entries
