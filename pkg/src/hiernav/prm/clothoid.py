"""G1 Hermite clothoid fitting.

A clothoid has curvature linear in arc length, ``k(s) = kappa0 + dkappa * s``, so

    x(s) = x0 + s * X0(dkappa s^2, kappa0 s, theta0)
    y(s) = y0 + s * Y0(dkappa s^2, kappa0 s, theta0)

with the generalised Fresnel moments

    Xk(a, b, c) = int_0^1 t^k cos(a t^2 / 2 + b t + c) dt,   Yk likewise with sin.

The two-point G1 problem reduces to one scalar root of
``g(A) = Y0(2A, delta - A, phi0)``; Newton on ``A`` converges from the
polynomial initial guess for any pair of headings in (-pi, pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..terrain import wrap_angle

_GL_N = 24
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W
_PANEL_PHASE = 2.5  # max phase swing (rad) per quadrature panel
_MAX_PANELS = 64

FIT_TOL = 1e-3


def _moments_fixed(a, b, c, panels: int):
    """Composite Gauss-Legendre with a fixed number of panels."""
    edges = np.arange(panels) / panels
    t = (edges[:, None] + _GL_X[None, :] / panels).ravel()
    w = np.tile(_GL_W / panels, panels)
    phase = 0.5 * a[:, None] * t ** 2 + b[:, None] * t + c[:, None]
    cs, sn = np.cos(phase), np.sin(phase)
    wt = w * t
    wt2 = wt * t
    return (cs @ w, cs @ wt, cs @ wt2, sn @ w, sn @ wt, sn @ wt2)


def fresnel_moments(a, b, c):
    """Return (X0, X1, X2, Y0, Y1, Y2) for broadcastable arrays a, b, c.

    The panel count adapts to the phase swing of each element, so accuracy holds
    for strongly winding arguments as well as nearly straight ones.
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    shape = a.shape
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    swing = 0.5 * np.abs(a) + np.abs(b)
    need = np.clip(np.ceil(swing / _PANEL_PHASE), 1, _MAX_PANELS).astype(int)
    levels = 2 ** np.ceil(np.log2(need)).astype(int)
    out = [np.empty(a.size) for _ in range(6)]
    for lvl in np.unique(levels):
        idx = np.nonzero(levels == lvl)[0]
        res = _moments_fixed(a[idx], b[idx], c[idx], int(lvl))
        for o, r in zip(out, res):
            o[idx] = r
    return tuple(o.reshape(shape) for o in out)


@dataclass(frozen=True)
class ClothoidSegment:
    x0: float
    y0: float
    theta0: float
    kappa0: float
    dkappa: float
    length: float

    def curvature(self, s):
        return self.kappa0 + self.dkappa * np.asarray(s, dtype=float)

    def heading(self, s):
        s = np.asarray(s, dtype=float)
        return self.theta0 + self.kappa0 * s + 0.5 * self.dkappa * s ** 2

    def points(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        X0, _, _, Y0, _, _ = fresnel_moments(self.dkappa * s ** 2, self.kappa0 * s, self.theta0)
        return np.column_stack([self.x0 + s * X0, self.y0 + s * Y0])

    @property
    def max_abs_curvature(self) -> float:
        return max(abs(self.kappa0), abs(self.kappa0 + self.dkappa * self.length))

    def end_pose(self) -> tuple[float, float, float]:
        p = self.points([self.length])[0]
        return float(p[0]), float(p[1]), float(wrap_angle(self.heading(self.length)))

    def stations(self, step: float) -> np.ndarray:
        """Arc-length stations at most ``step`` apart, both ends included."""
        n = max(1, int(math.ceil(self.length / step)))
        return np.linspace(0.0, self.length, n + 1)


def _initial_guess(phi0, phi1):
    u0, u1 = phi0 / math.pi, phi1 / math.pi
    return (phi0 + phi1) * (3.070645 + 0.947923 * u0 * u1 - 0.673029 * (u0 ** 2 + u1 ** 2))


def fit_g1(p0, theta0, p1, theta1, free0=None, free1=None, max_iter: int = 40, tol: float = 1e-12):
    """Vectorised G1 clothoid fit between planar poses.

    ``free0``/``free1`` flag endpoints whose heading is unconstrained; a free end
    gets the circular arc fixed by the other end's heading (a straight line if both
    are free).

    Returns ``(theta0_used, kappa0, dkappa, length, converged)`` arrays.
    """
    p0 = np.asarray(p0, dtype=float).reshape(-1, 2)
    p1 = np.asarray(p1, dtype=float).reshape(-1, 2)
    n = len(p0)
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (n,)).copy()
    theta1 = np.broadcast_to(np.asarray(theta1, dtype=float), (n,)).copy()
    free0 = np.zeros(n, bool) if free0 is None else np.broadcast_to(np.asarray(free0, bool), (n,))
    free1 = np.zeros(n, bool) if free1 is None else np.broadcast_to(np.asarray(free1, bool), (n,))

    d = p1 - p0
    r = np.hypot(d[:, 0], d[:, 1])
    phi = np.arctan2(d[:, 1], d[:, 0])
    phi0 = wrap_angle(theta0 - phi)
    phi1 = wrap_angle(theta1 - phi)

    kappa0 = np.zeros(n)
    dkappa = np.zeros(n)
    length = r.copy()
    converged = r > 0
    theta_used = theta0.copy()

    both = free0 & free1
    theta_used[both] = phi[both]

    def _arc(chord, alpha):
        small = np.abs(alpha) < 1e-9
        sinc = np.where(small, 1.0, np.sin(alpha) / np.where(small, 1.0, alpha))
        return chord / sinc

    m = free1 & ~free0  # arc leaving a fixed heading, free arrival
    if m.any():
        length[m] = _arc(r[m], phi0[m])
        kappa0[m] = -2.0 * phi0[m] / length[m]
    m = free0 & ~free1  # free departure, fixed arrival heading
    if m.any():
        length[m] = _arc(r[m], phi1[m])
        kappa0[m] = 2.0 * phi1[m] / length[m]
        theta_used[m] = phi[m] - phi1[m]

    g1 = ~free0 & ~free1 & converged
    if g1.any():
        f0, f1 = phi0[g1], phi1[g1]
        delta = f1 - f0
        A = _initial_guess(f0, f1)
        done = np.zeros(len(A), bool)
        for _ in range(max_iter):
            X0, X1, X2, Y0, _, _ = fresnel_moments(2 * A, delta - A, f0)
            dg = X2 - X1
            step = np.where(done | (dg == 0), 0.0, Y0 / np.where(dg == 0, 1.0, dg))
            A = A - step
            done |= np.abs(Y0) < tol
            if done.all():
                break
        X0, _, _, Y0, _, _ = fresnel_moments(2 * A, delta - A, f0)
        ok = (np.abs(Y0) < 1e-9) & (X0 > 0) & np.isfinite(A)
        L = np.where(ok, r[g1] / np.where(X0 > 0, X0, 1.0), np.inf)
        length[g1] = L
        kappa0[g1] = np.where(ok, (delta - A) / L, 0.0)
        dkappa[g1] = np.where(ok, 2 * A / L ** 2, 0.0)
        conv = converged[g1].copy()
        conv &= ok
        converged[g1] = conv
    return theta_used, kappa0, dkappa, length, converged


def fit_segment(pose0, pose1, free0: bool = False, free1: bool = False) -> ClothoidSegment | None:
    """Single-pair convenience wrapper; ``None`` when the fit does not converge."""
    th, k0, dk, L, ok = fit_g1(
        np.array(pose0[:2]), pose0[2], np.array(pose1[:2]), pose1[2], free0, free1
    )
    if not ok[0]:
        return None
    return ClothoidSegment(float(pose0[0]), float(pose0[1]), float(th[0]),
                           float(k0[0]), float(dk[0]), float(L[0]))


def sample_batch(x0, y0, theta0, kappa0, dkappa, length, step: float):
    """Sample many clothoids at spacing <= ``step``.

    Returns ``(owner, s, xy, heading, curvature)`` flattened over all segments.
    """
    length = np.asarray(length, dtype=float)
    counts = np.maximum(1, np.ceil(length / step).astype(int)) + 1
    owner = np.repeat(np.arange(len(length)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(owner.size) - np.repeat(offsets, counts)
    s = local * np.repeat(length / (counts - 1), counts)
    k0 = np.asarray(kappa0)[owner]
    dk = np.asarray(dkappa)[owner]
    th0 = np.asarray(theta0)[owner]
    X0, _, _, Y0, _, _ = fresnel_moments(dk * s ** 2, k0 * s, th0)
    xy = np.column_stack([np.asarray(x0)[owner] + s * X0, np.asarray(y0)[owner] + s * Y0])
    heading = th0 + k0 * s + 0.5 * dk * s ** 2
    return owner, s, xy, heading, k0 + dk * s
