"""Parametric submanifolds of R^n and their pointwise differential geometry.

A :class:`ManifoldModel` is a finite atlas of charts ``phi: U subset R^k -> R^n``.
Disconnected manifolds use one chart per component; spheres and ellipsoids
carry a second chart so that the polar singularity of either chart can be
avoided (see :meth:`ManifoldModel.rechart`).

All chart evaluations are vectorized: ``u`` has shape ``(..., k)`` and the
returned jets have shapes ``(..., n)``, ``(..., n, k)`` and ``(..., n, k, k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import exprparse
from .errors import ConfigError, NotPlanarBoundary, NotTangent, RankDeficient

TWO_PI = 2.0 * math.pi
RANK_RTOL = 1e-10
TANGENT_TOL = 1e-8


class AmbientJet(NamedTuple):
    x: np.ndarray  # (n,)
    J: np.ndarray  # (n, k)
    H: np.ndarray  # (n, k, k)


class ChartPoint(NamedTuple):
    chart: int
    u: np.ndarray  # (k,)

    def __repr__(self):
        return f"ChartPoint({self.chart}, {list(np.round(self.u, 15))})"


JetFn = Callable[[np.ndarray, int], tuple]


@dataclass(frozen=True, eq=False)
class Chart:
    """One evaluable map ``phi`` with per-coordinate periods.

    ``jet_fn(u, order)`` returns ``(x, J, H)`` (``H`` is None when order < 2).
    ``inverse`` maps ambient points back to chart coordinates and
    ``quality`` scores how far ``u`` is from the chart's singular set; both
    are optional and only used for atlas switching.
    """

    k: int
    n: int
    jet_fn: JetFn
    periods: tuple = ()
    component: int = 0
    orientation: int = 1
    domain: tuple = ()  # ((lo, hi), ...) used for sampling and plotting
    expressions: tuple = ()  # source strings, when known
    inverse: Callable | None = None
    quality: Callable | None = None
    name: str = ""

    def jet(self, u, order: int = 2):
        u = np.asarray(u, dtype=float)
        return self.jet_fn(u, order)

    def reduce(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        for i, per in enumerate(self.periods):
            if per:
                u[..., i] = np.mod(u[..., i], per)
                # np.mod can return `per` itself for tiny negative inputs
                u[..., i] = np.where(u[..., i] >= per, 0.0, u[..., i])
        return u


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Immutable atlas description of Sigma."""

    k: int
    n: int
    charts: tuple
    source: dict = field(default_factory=dict)
    is_planar_domain_boundary: bool = False
    convex_domain: bool = False
    compact: bool = True
    switch_below: float = 0.3  # chart quality threshold for rechart

    def __post_init__(self):
        if not (self.n > self.k >= 1):
            raise ConfigError(f"need n > k >= 1, got k={self.k}, n={self.n}")
        if self.is_planar_domain_boundary and (self.k, self.n) != (1, 2):
            raise ConfigError("planar domain boundaries need k=1, n=2")

    @property
    def name(self) -> str:
        return self.source.get("builtin", "parametric")

    @property
    def n_components(self) -> int:
        return len({c.component for c in self.charts})

    def point(self, u, chart: int = 0) -> ChartPoint:
        """Coerce ``u`` (number, sequence or ChartPoint) into a reduced ChartPoint."""
        if isinstance(u, ChartPoint):
            chart, u = u.chart, u.u
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.k,):
            raise ConfigError(f"chart point must have {self.k} coordinates, got {u.shape}")
        if not 0 <= chart < len(self.charts):
            raise ConfigError(f"no chart with index {chart}")
        return ChartPoint(int(chart), self.charts[chart].reduce(u))

    def jets(self, charts, u, order: int = 2):
        """Batched jets for chart indices ``charts`` (shape S) at ``u`` (S + (k,))."""
        charts = np.asarray(charts)
        u = np.asarray(u, dtype=float)
        if len(self.charts) == 1:
            return self.charts[0].jet(u, order)
        S = charts.shape
        x = np.empty(S + (self.n,))
        J = np.empty(S + (self.n, self.k))
        H = np.empty(S + (self.n, self.k, self.k)) if order >= 2 else None
        for ci, chart in enumerate(self.charts):
            mask = charts == ci
            if not mask.any():
                continue
            xs, Js, Hs = chart.jet(u[mask], order)
            x[mask], J[mask] = xs, Js
            if H is not None:
                H[mask] = Hs
        return x, J, H

    def reduce(self, charts, u):
        charts = np.asarray(charts)
        u = np.array(u, dtype=float)
        for ci, chart in enumerate(self.charts):
            if any(chart.periods):
                mask = charts == ci
                u[mask] = chart.reduce(u[mask])
        return u

    def rechart(self, charts, u):
        """Move points whose chart quality is poor onto the best chart of their component.

        ``charts`` has shape (N,), ``u`` shape (N, k); returns updated copies.
        """
        charts = np.array(charts).reshape(-1)
        u = np.array(u, dtype=float).reshape(-1, self.k)
        for ci, chart in enumerate(self.charts):
            if chart.quality is None:
                continue
            bad = (charts == ci) & (chart.quality(u) < self.switch_below)
            for idx in np.flatnonzero(bad):
                x = chart.jet(u[idx], 1)[0]
                best = self._best_chart(chart.component, x)
                charts[idx] = best.chart
                u[idx] = best.u
        return charts, u

    def _best_chart(self, component: int, x) -> ChartPoint:
        best, score = None, -np.inf
        for ci, chart in enumerate(self.charts):
            if chart.component != component or chart.inverse is None:
                continue
            uc = chart.inverse(np.asarray(x))
            q = float(chart.quality(uc)) if chart.quality else 1.0
            if q > score:
                best, score = ChartPoint(ci, chart.reduce(uc)), q
        if best is None:
            raise RankDeficient("no chart available for point")
        return best

    def locate(self, x, component: int = 0) -> ChartPoint:
        """Chart point of the ambient point ``x`` (charts must provide inverses)."""
        return self._best_chart(component, np.asarray(x, dtype=float))

    def sample_points(self, resolution) -> list[ChartPoint]:
        """Grid points per chart domain, deduplicated by ambient position.

        Only the first chart of every component is gridded; periodic coordinates
        get ``res`` points on [0, period), closed intervals ``res + 1`` points.
        """
        res = list(np.broadcast_to(np.atleast_1d(resolution), (self.k,)))
        out: list[ChartPoint] = []
        seen_components = set()
        for ci, chart in enumerate(self.charts):
            if chart.component in seen_components:
                continue
            seen_components.add(chart.component)
            axes = []
            for i in range(self.k):
                lo, hi = chart.domain[i]
                if chart.periods and chart.periods[i]:
                    axes.append(lo + (hi - lo) * np.arange(res[i]) / res[i])
                else:
                    axes.append(np.linspace(lo, hi, int(res[i]) + 1))
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.k)
            x = chart.jet(grid, 1)[0]
            keys = set()
            for u, xi in zip(grid, x):
                key = tuple(np.round(xi, 9) + 0.0)
                if key in keys:
                    continue
                keys.add(key)
                cp = ChartPoint(ci, chart.reduce(u))
                if chart.quality is not None and chart.quality(cp.u) < self.switch_below:
                    cp = self._best_chart(chart.component, xi)
                out.append(cp)
        return out

    def diameter(self, resolution: int = 48) -> float:
        pts = self.sample_points(resolution)
        x = np.array([evaluate(self, p).x for p in pts])
        d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        return float(d.max())


# ---------------------------------------------------------------- operations


def _check_rank(J: np.ndarray):
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] < RANK_RTOL * s[0] or s[0] == 0.0:
        raise RankDeficient(f"Jacobian singular values {s} (rank < {J.shape[1]})")


def evaluate(m: ManifoldModel, u) -> AmbientJet:
    """Position, Jacobian and Hessian of the chart at ``u``."""
    cp = m.point(u)
    x, J, H = m.charts[cp.chart].jet(cp.u, 2)
    _check_rank(J)
    return AmbientJet(x, J, H)


def _pinv_apply(J: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.linalg.solve(J.T @ J, J.T @ v)


def project_tangent(m: ManifoldModel, u, v) -> np.ndarray:
    """Orthogonal projection of the ambient vector ``v`` onto T_x Sigma."""
    jet = evaluate(m, u)
    return jet.J @ _pinv_apply(jet.J, np.asarray(v, dtype=float))


def pullback_velocity(m: ManifoldModel, u, v) -> np.ndarray:
    """Chart velocity ``(J^T J)^{-1} J^T v`` of a tangent vector ``v``."""
    jet = evaluate(m, u)
    return _pinv_apply(jet.J, np.asarray(v, dtype=float))


def _require_tangent(J, a, label):
    resid = a - J @ _pinv_apply(J, a)
    if np.linalg.norm(resid) > TANGENT_TOL * max(1.0, np.linalg.norm(a)):
        raise NotTangent(f"{label} is not tangent (normal part {np.linalg.norm(resid):.3e})")


def second_fundamental_form(m: ManifoldModel, u, a, b) -> np.ndarray:
    """``A(a, b) = (D_a b)^N`` for tangent vectors ``a``, ``b`` at ``u``."""
    jet = evaluate(m, u)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _require_tangent(jet.J, a, "a")
    _require_tangent(jet.J, b, "b")
    return sff_from_jet(jet.J, jet.H, a, b)


def sff_from_jet(J, H, a, b):
    """Vectorized second fundamental form from cached jets (no tangency check).

    Shapes: J (..., n, k), H (..., n, k, k), a, b (..., n).
    """
    G = np.swapaxes(J, -1, -2) @ J
    alpha = np.linalg.solve(G, np.einsum("...nk,...n->...k", J, a)[..., None])[..., 0]
    beta = np.linalg.solve(G, np.einsum("...nk,...n->...k", J, b)[..., None])[..., 0]
    D = np.einsum("...nij,...i,...j->...n", H, alpha, beta)
    Dt = np.linalg.solve(G, np.einsum("...nk,...n->...k", J, D)[..., None])[..., 0]
    return D - np.einsum("...nk,...k->...n", J, Dt)


def orthonormal_tangent_basis(m: ManifoldModel, u) -> np.ndarray:
    """Gram-Schmidt on the Jacobian columns, in column order; returns (n, k)."""
    return gram_schmidt(evaluate(m, u).J)


def gram_schmidt(J: np.ndarray) -> np.ndarray:
    """Orthonormalize the columns of ``J`` (..., n, k) in order."""
    E = np.array(J, dtype=float)
    k = E.shape[-1]
    for i in range(k):
        for j in range(i):
            E[..., :, i] -= np.sum(E[..., :, j] * E[..., :, i], axis=-1)[..., None] * E[..., :, j]
        E[..., :, i] /= np.linalg.norm(E[..., :, i], axis=-1)[..., None]
    return E


def rot90(v: np.ndarray) -> np.ndarray:
    """Counterclockwise rotation by pi/2 of planar vectors (..., 2)."""
    v = np.asarray(v)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def planar_frame_from_jet(J, H, orientation):
    """Vectorized ``(xi, nu, curvature)`` from jets of planar curve charts."""
    t = J[..., 0]
    speed = np.linalg.norm(t, axis=-1)
    xi = np.asarray(orientation)[..., None] * t / speed[..., None]
    nu = rot90(xi)
    kappa = np.sum(H[..., 0, 0] * nu, axis=-1) / speed**2
    return xi, nu, kappa


def planar_frame(m: ManifoldModel, u):
    """Orientation field, inward normal and signed curvature at ``u``."""
    if not m.is_planar_domain_boundary:
        raise NotPlanarBoundary(f"{m.name} is not a planar domain boundary")
    cp = m.point(u)
    jet = evaluate(m, cp)
    xi, nu, kappa = planar_frame_from_jet(jet.J, jet.H, m.charts[cp.chart].orientation)
    return xi, nu, float(kappa)


# ------------------------------------------------------------------ builtins


def _zeros(u, *shape):
    return np.zeros(u.shape[:-1] + shape)


def _line_chart(point, direction, **kw) -> Chart:
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    n = point.size

    def jet(u, order):
        x = point + u[..., 0:1] * direction
        J = np.empty(u.shape[:-1] + (n, 1))
        J[...] = direction[:, None]
        H = _zeros(u, n, 1, 1) if order >= 2 else None
        return x, J, H

    exprs = tuple(f"({float(p)!r}) + ({float(d)!r})*u1" for p, d in zip(point, direction))

    def inverse(x):
        return np.array([np.dot(np.asarray(x) - point, direction) / np.dot(direction, direction)])

    return Chart(1, n, jet, periods=(None,), expressions=exprs, inverse=inverse, **kw)


def _ellipse_chart(a, b, cx=0.0, cy=0.0, **kw) -> Chart:
    def jet(u, order):
        c, s = np.cos(u[..., 0]), np.sin(u[..., 0])
        x = np.stack([cx + a * c, cy + b * s], axis=-1)
        J = np.stack([-a * s, b * c], axis=-1)[..., None]
        H = np.stack([-a * c, -b * s], axis=-1)[..., None, None] if order >= 2 else None
        return x, J, H

    exprs = (f"({float(cx)!r}) + ({float(a)!r})*cos(u1)", f"({float(cy)!r}) + ({float(b)!r})*sin(u1)")

    def inverse(x):
        return np.array([math.atan2((x[1] - cy) / b, (x[0] - cx) / a) % TWO_PI])

    kw.setdefault("domain", ((0.0, TWO_PI),))
    return Chart(1, 2, jet, periods=(TWO_PI,), expressions=exprs, inverse=inverse, **kw)


_AXES = "xyz"


def _ellipsoid_chart(radii, pole: int, **kw) -> Chart:
    """Polar-angle chart with the pole on ambient axis ``pole``.

    u = (theta, phi); the unit-sphere point (sin t cos p, sin t sin p, cos t)
    is placed so that cos t lies on axis ``pole`` and the other two follow
    cyclically.
    """
    radii = np.asarray(radii, dtype=float)
    ax_a, ax_b = (pole + 1) % 3, (pole + 2) % 3

    def jet(u, order):
        th, ph = u[..., 0], u[..., 1]
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        S = u.shape[:-1]
        s = np.empty(S + (3,))
        s[..., ax_a], s[..., ax_b], s[..., pole] = st * cp, st * sp, ct
        dth = np.empty(S + (3,))
        dth[..., ax_a], dth[..., ax_b], dth[..., pole] = ct * cp, ct * sp, -st
        dph = np.empty(S + (3,))
        dph[..., ax_a], dph[..., ax_b], dph[..., pole] = -st * sp, st * cp, 0.0
        x = radii * s
        J = np.stack([radii * dth, radii * dph], axis=-1)
        H = None
        if order >= 2:
            tt = -s
            tp = np.empty(S + (3,))
            tp[..., ax_a], tp[..., ax_b], tp[..., pole] = -ct * sp, ct * cp, 0.0
            pp = np.empty(S + (3,))
            pp[..., ax_a], pp[..., ax_b], pp[..., pole] = -st * cp, -st * sp, 0.0
            H = np.stack(
                [np.stack([radii * tt, radii * tp], axis=-1),
                 np.stack([radii * tp, radii * pp], axis=-1)],
                axis=-1,
            )
        return x, J, H

    comp = {ax_a: "sin(u1)*cos(u2)", ax_b: "sin(u1)*sin(u2)", pole: "cos(u1)"}
    exprs = tuple(f"({float(radii[i])!r})*{comp[i]}" for i in range(3))

    def inverse(x):
        s = np.asarray(x, dtype=float) / radii
        s = s / np.linalg.norm(s)
        th = math.acos(min(1.0, max(-1.0, s[pole])))
        ph = math.atan2(s[ax_b], s[ax_a]) % TWO_PI
        return np.array([th, ph])

    def quality(u):
        return np.abs(np.sin(np.asarray(u)[..., 0]))

    return Chart(
        2, 3, jet, periods=(None, TWO_PI), domain=((0.0, math.pi), (0.0, TWO_PI)),
        expressions=exprs, inverse=inverse, quality=quality,
        name=f"pole-{_AXES[pole]}", **kw,
    )


def _torus_chart(R, r) -> Chart:
    def jet(u, order):
        w, v = u[..., 0], u[..., 1]
        cw, sw, cv, sv = np.cos(w), np.sin(w), np.cos(v), np.sin(v)
        rho = R + r * cv
        x = np.stack([rho * cw, rho * sw, r * sv], axis=-1)
        Jw = np.stack([-rho * sw, rho * cw, 0.0 * w], axis=-1)
        Jv = np.stack([-r * sv * cw, -r * sv * sw, r * cv], axis=-1)
        J = np.stack([Jw, Jv], axis=-1)
        H = None
        if order >= 2:
            ww = np.stack([-rho * cw, -rho * sw, 0.0 * w], axis=-1)
            wv = np.stack([r * sv * sw, -r * sv * cw, 0.0 * w], axis=-1)
            vv = np.stack([-r * cv * cw, -r * cv * sw, -r * sv], axis=-1)
            H = np.stack([np.stack([ww, wv], axis=-1), np.stack([wv, vv], axis=-1)], axis=-1)
        return x, J, H

    exprs = (
        f"(({float(R)!r}) + ({float(r)!r})*cos(u2))*cos(u1)",
        f"(({float(R)!r}) + ({float(r)!r})*cos(u2))*sin(u1)",
        f"({float(r)!r})*sin(u2)",
    )

    def inverse(x):
        w = math.atan2(x[1], x[0]) % TWO_PI
        rho = math.hypot(x[0], x[1])
        v = math.atan2(x[2], rho - R) % TWO_PI
        return np.array([w, v])

    return Chart(2, 3, jet, periods=(TWO_PI, TWO_PI), domain=((0.0, TWO_PI), (0.0, TWO_PI)),
                 expressions=exprs, inverse=inverse)


def line(px: float = 0.0, py: float = 0.0, dx: float = 1.0, dy: float = 0.0,
         extent: float = 2.0) -> ManifoldModel:
    """Affine line through (px, py) with direction (dx, dy); the x-axis by default."""
    chart = _line_chart((px, py), (dx, dy), domain=((-extent, extent),))
    return ManifoldModel(1, 2, (chart,), source={"builtin": "line", "params": dict(
        px=px, py=py, dx=dx, dy=dy, extent=extent)}, compact=False)


def circle(r: float = 1.0, cx: float = 0.0, cy: float = 0.0) -> ManifoldModel:
    chart = _ellipse_chart(r, r, cx, cy)
    return ManifoldModel(1, 2, (chart,), source={"builtin": "circle", "params": dict(
        r=r, cx=cx, cy=cy)}, is_planar_domain_boundary=True, convex_domain=True)


def ellipse(a: float = 1.0, b: float = 0.5) -> ManifoldModel:
    """Ellipse x^2/a^2 + y^2/b^2 = 1, counterclockwise; defaults give x^2 + 4y^2 = 1."""
    chart = _ellipse_chart(a, b)
    return ManifoldModel(1, 2, (chart,), source={"builtin": "ellipse", "params": dict(a=a, b=b)},
                         is_planar_domain_boundary=True, convex_domain=True)


def two_circles(r1: float = 1.0, c1x: float = 0.0, c1y: float = 0.0,
                r2: float = 1.0, c2x: float = 3.0, c2y: float = 0.0) -> ManifoldModel:
    if math.hypot(c2x - c1x, c2y - c1y) <= r1 + r2:
        raise ConfigError("two-circles requires disjoint disks")
    charts = (_ellipse_chart(r1, r1, c1x, c1y, component=0),
              _ellipse_chart(r2, r2, c2x, c2y, component=1))
    return ManifoldModel(1, 2, charts, source={"builtin": "two-circles", "params": dict(
        r1=r1, c1x=c1x, c1y=c1y, r2=r2, c2x=c2x, c2y=c2y)}, is_planar_domain_boundary=True)


def strip_lines(width: float = 1.0, extent: float = 2.0) -> ManifoldModel:
    """Boundary of the strip {0 <= x <= width}: two vertical lines.

    Chart u is the y coordinate on both lines; orientation signs make the
    orientation field point down on x=0 and up on x=width, so that the
    counterclockwise rotation of it points into the strip.
    """
    dom = ((-extent, extent),)
    charts = (
        _line_chart((0.0, 0.0), (0.0, 1.0), component=0, orientation=-1, domain=dom),
        _line_chart((width, 0.0), (0.0, 1.0), component=1, orientation=1, domain=dom),
    )
    return ManifoldModel(1, 2, charts, source={"builtin": "strip-lines", "params": dict(
        width=width, extent=extent)}, is_planar_domain_boundary=True, convex_domain=True,
        compact=False)


def ellipsoid(a: float = 1.0, b: float = 0.8, c: float = 0.6) -> ManifoldModel:
    radii = (a, b, c)
    charts = (_ellipsoid_chart(radii, pole=2), _ellipsoid_chart(radii, pole=0))
    return ManifoldModel(2, 3, charts, source={"builtin": "ellipsoid", "params": dict(
        a=a, b=b, c=c)})


def sphere(r: float = 1.0) -> ManifoldModel:
    radii = (r, r, r)
    charts = (_ellipsoid_chart(radii, pole=2), _ellipsoid_chart(radii, pole=0))
    return ManifoldModel(2, 3, charts, source={"builtin": "sphere", "params": dict(r=r)})


def torus(R: float = 2.0, r: float = 1.0) -> ManifoldModel:
    if not R > r > 0:
        raise ConfigError("torus requires R > r > 0")
    return ManifoldModel(2, 3, (_torus_chart(R, r),), source={"builtin": "torus", "params": dict(
        R=R, r=r)})


BUILTINS: dict[str, Callable[..., ManifoldModel]] = {
    "line": line,
    "circle": circle,
    "ellipse": ellipse,
    "two-circles": two_circles,
    "strip-lines": strip_lines,
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "torus": torus,
}


def builtin(name: str, params: dict | None = None) -> ManifoldModel:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


# ---------------------------------------------------------------- expressions


def expression_chart(exprs: Sequence[str], k: int, periods: Sequence | None = None,
                     domain: Sequence | None = None, component: int = 0,
                     orientation: int = 1) -> Chart:
    """Chart from one expression string per ambient coordinate (variables u1..uk)."""
    asts = tuple(exprparse.parse(s, nvars=k) for s in exprs)
    n = len(asts)

    def jet(u, order):
        cols = [u[..., i] for i in range(k)]
        S = u.shape[:-1]
        x = np.empty(S + (n,))
        J = np.empty(S + (n, k))
        H = np.empty(S + (n, k, k)) if order >= 2 else None
        for a, ast in enumerate(asts):
            for i in range(k):
                hd = exprparse.eval_jet(ast, cols, i + 1, i + 1)
                x[..., a] = hd.v
                J[..., a, i] = hd.d1
                if H is not None:
                    H[..., a, i, i] = hd.d12
            if H is not None:
                for i in range(k):
                    for j in range(i + 1, k):
                        hd = exprparse.eval_jet(ast, cols, i + 1, j + 1)
                        H[..., a, i, j] = H[..., a, j, i] = hd.d12
        return x, J, H

    periods = tuple(periods) if periods is not None else (None,) * k
    if domain is None:
        domain = tuple((0.0, p) if p else (-1.0, 1.0) for p in periods)
    return Chart(k, n, jet, periods=periods, component=component, orientation=orientation,
                 domain=tuple(tuple(d) for d in domain), expressions=tuple(exprs))


def from_expressions(charts: Sequence[dict], k: int, planar_boundary: bool = False,
                     convex_domain: bool = False, compact: bool = True) -> ManifoldModel:
    """Manifold from chart declarations ``{"expressions": [...], "periods": [...], ...}``."""
    built = tuple(
        expression_chart(c["expressions"], k, c.get("periods"), c.get("domain"),
                         c.get("component", i), c.get("orientation", 1))
        for i, c in enumerate(charts)
    )
    n = built[0].n
    if any(c.n != n for c in built):
        raise ConfigError("all charts must have the same number of expressions")
    source = {"charts": [_plain(c) for c in charts], "k": k, "planar_boundary": planar_boundary,
              "convex_domain": convex_domain, "compact": compact}
    return ManifoldModel(k, n, built, source=source, is_planar_domain_boundary=planar_boundary,
                         convex_domain=convex_domain, compact=compact)


def _plain(decl: dict) -> dict:
    out = {"expressions": list(decl["expressions"])}
    for key in ("periods", "domain", "component", "orientation"):
        if decl.get(key) is not None:
            val = decl[key]
            out[key] = [list(v) if isinstance(v, (list, tuple)) else v for v in val] \
                if isinstance(val, (list, tuple)) else val
    return out


def rebuild(source: dict) -> ManifoldModel:
    """Manifold from its ``source`` description (the inverse of construction)."""
    if "builtin" in source:
        return builtin(source["builtin"], source.get("params"))
    return from_expressions(source["charts"], source["k"],
                            planar_boundary=source.get("planar_boundary", False),
                            convex_domain=source.get("convex_domain", False),
                            compact=source.get("compact", True))
