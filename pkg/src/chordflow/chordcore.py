"""Chords, endpoint fields and the two-point calculus on them.

An endpoint field is a function on {0, 1} (the parameters of the chord's
endpoints p and q).  The half-Laplacian of a field relative to a chord of
length ``ell`` is the two-point Dirichlet-to-Neumann operator
``f -> ((f0 - f1) / ell, (f1 - f0) / ell)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChord, NotPlanarBoundary
from .manifold import AmbientJet, ChartPoint, ManifoldModel, evaluate, planar_frame_from_jet

MIN_LENGTH = 1e-12
DEFAULT_EPS_OGC = 1e-8


@dataclass(frozen=True)
class EndpointField:
    f0: np.ndarray
    f1: np.ndarray

    @classmethod
    def of(cls, f0, f1) -> "EndpointField":
        return cls(np.asarray(f0, dtype=float), np.asarray(f1, dtype=float))

    @property
    def l2(self) -> float:
        return math.sqrt(float(np.sum(self.f0 * self.f0) + np.sum(self.f1 * self.f1)))

    @property
    def l2_sq(self) -> float:
        return float(np.sum(self.f0 * self.f0) + np.sum(self.f1 * self.f1))

    @property
    def bar(self) -> np.ndarray:
        return self.f0 + self.f1

    def __iter__(self):
        yield self.f0
        yield self.f1

    def __getitem__(self, u: int) -> np.ndarray:
        return (self.f0, self.f1)[u]

    def map(self, fn) -> "EndpointField":
        return EndpointField(fn(self.f0), fn(self.f1))


def pair_inner(f: EndpointField, g: EndpointField) -> EndpointField:
    """Pointwise inner product, as a scalar field."""
    return EndpointField(np.asarray(np.dot(f.f0, g.f0)), np.asarray(np.dot(f.f1, g.f1)))


def half_laplacian(f: EndpointField, ell: float) -> EndpointField:
    if not ell > 0:
        raise DegenerateChord(f"half-Laplacian needs positive length, got {ell}")
    d = (f.f0 - f.f1) / ell
    return EndpointField(d, -d)


@dataclass(frozen=True)
class Chord:
    """Oriented chord from ``p`` (parameter 0) to ``q`` (parameter 1)."""

    m: ManifoldModel
    p: ChartPoint
    q: ChartPoint
    jet_p: AmbientJet
    jet_q: AmbientJet
    ell: float

    @property
    def xp(self) -> np.ndarray:
        return self.jet_p.x

    @property
    def xq(self) -> np.ndarray:
        return self.jet_q.x

    def jet(self, u: int) -> AmbientJet:
        return (self.jet_p, self.jet_q)[u]

    def point(self, u: int) -> ChartPoint:
        return (self.p, self.q)[u]

    def reversed(self) -> "Chord":
        return Chord(self.m, self.q, self.p, self.jet_q, self.jet_p, self.ell)


def make_chord(m: ManifoldModel, u_p, u_q) -> Chord:
    p, q = m.point(u_p), m.point(u_q)
    jp, jq = evaluate(m, p), evaluate(m, q)
    ell = float(np.linalg.norm(jp.x - jq.x))
    if ell < MIN_LENGTH:
        raise DegenerateChord(f"endpoints coincide (distance {ell:.3e})")
    return Chord(m, p, q, jp, jq, ell)


@dataclass(frozen=True)
class ConormalData:
    eta: EndpointField
    eta_T: EndpointField
    eta_N: EndpointField


def _project(J: np.ndarray, v: np.ndarray) -> np.ndarray:
    return J @ np.linalg.solve(J.T @ J, J.T @ v)


def conormal_data(c: Chord) -> ConormalData:
    eta_p = (c.xp - c.xq) / c.ell
    eta = EndpointField(eta_p, -eta_p)
    tp = _project(c.jet_p.J, eta.f0)
    tq = _project(c.jet_q.J, eta.f1)
    return ConormalData(eta, EndpointField(tp, tq), EndpointField(eta.f0 - tp, eta.f1 - tq))


def ogc_residual(c: Chord) -> float:
    """L2 norm of the tangential conormal; zero exactly at orthogonal geodesic chords."""
    return conormal_data(c).eta_T.l2


def is_ogc(c: Chord, eps_ogc: float = DEFAULT_EPS_OGC) -> bool:
    return ogc_residual(c) < eps_ogc


@dataclass(frozen=True)
class PlanarFrames:
    xi: EndpointField
    nu: EndpointField
    kappa: EndpointField


def planar_frames(c: Chord) -> PlanarFrames:
    if not c.m.is_planar_domain_boundary:
        raise NotPlanarBoundary(f"{c.m.name} is not a planar domain boundary")
    frames = [
        planar_frame_from_jet(c.jet(u).J, c.jet(u).H, c.m.charts[c.point(u).chart].orientation)
        for u in (0, 1)
    ]
    return PlanarFrames(*(EndpointField(frames[0][i], frames[1][i]) for i in range(3)))


@dataclass(frozen=True)
class BoundaryAngle:
    theta: EndpointField

    @property
    def p(self) -> float:
        return float(self.theta.f0)

    @property
    def q(self) -> float:
        return float(self.theta.f1)


def boundary_angle(c: Chord, m: ManifoldModel | None = None) -> BoundaryAngle:
    """Theta(p) = <eta(p), xi(p)>, Theta(q) = -<eta(q), xi(q)>."""
    if m is not None and m is not c.m:
        c = make_chord(m, c.p, c.q)
    xi = planar_frames(c).xi
    eta_p = (c.xp - c.xq) / c.ell
    return BoundaryAngle(EndpointField.of(np.dot(eta_p, xi.f0), np.dot(eta_p, xi.f1)))


def endpoint_normals(c: Chord) -> EndpointField:
    """In-boundary unit normals of {p, q}: N(p) = -xi(p), N(q) = xi(q)."""
    xi = planar_frames(c).xi
    return EndpointField(-xi.f0, xi.f1)


def is_convex_chord(c: Chord, slack: float = 0.0) -> bool:
    th = boundary_angle(c).theta
    return bool(th.f0 >= -slack and th.f1 >= -slack)


def xi_angle_identity_check(c: Chord, m: ManifoldModel | None = None) -> float | None:
    """``|<xi(p), xi(q)> - (Tp Tq - sqrt((1 - Tp^2)(1 - Tq^2)))|``.

    Returns None (skipped) unless the domain is convex and the chord is convex.
    """
    if m is not None and m is not c.m:
        c = make_chord(m, c.p, c.q)
    frames = planar_frames(c)
    th = boundary_angle(c)
    if not c.m.convex_domain or th.p < 0 or th.q < 0:
        return None
    lhs = float(np.dot(frames.xi.f0, frames.xi.f1))
    rhs = th.p * th.q - math.sqrt(max(0.0, (1 - th.p**2) * (1 - th.q**2)))
    return abs(lhs - rhs)
