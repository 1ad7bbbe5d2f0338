"""Volterra-type Lyapunov function and its orbital derivative.

For a steady state Y* the function is v(Y) = sum_i (Y_i - Y_i* ln Y_i),
with the convention that a coordinate with Y_i* = 0 contributes just Y_i
(no logarithm).  Its derivative along trajectories splits into a negative
quadratic in the susceptible deviation, a linear combination weighted by
the per-capita rates frozen at Y*, and a correction Phi collecting the
cross-transmission terms:

    v' = -(b/K)(Y0 - Y0*)^2 + sum_i Y_i F_i(Y*) + Phi

    Phi = (g1 + g2) (Y1 Y2* + Y1* Y2 - Y3* Y1 Y2 / Y3)
          - Y0 Y3 (b1 Y1*/Y1 + b2 Y2*/Y2)
          + (b1 + b2) (Y3 Y0* + Y0 Y3*)

Every product carrying a starred factor equal to zero is dropped exactly,
by branching before the quotient is formed, never by relying on IEEE
semantics; this removes the Y3 division when Y3* = 0 and the Y1, Y2
divisions when those starred coordinates vanish.  With this convention the
expression is the exact chain-rule derivative of v along the flow, so it
can be cross-checked against finite differences of v over trajectory
samples, which monitor_descent does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .equilibria import Equilibrium
from .integrators import Trajectory
from .model import ModelParameters, UsageError

F_STAR_TOL = 1e-12


class DomainError(ValueError):
    """A coordinate needed inside a logarithm or quotient is zero."""


def per_capita_rates(params: ModelParameters, y) -> np.ndarray:
    """Per-capita growth rates F(Y) of the four tracked classes.

    The class equations read Y_i' = F_i(Y) Y_i + H_i(Y) with nonnegative
    forcing H, so F_i(Y*) <= 0 at any steady state whose i-th coordinate is
    positive.
    """
    y = np.asarray(y, dtype=float)
    p = params
    a3h = p.alpha3 + p.beta1 + p.beta2
    return np.array([
        (p.b - p.mu0) - (p.b / p.K) * y[0] - p.alpha1 * y[1] - p.alpha2 * y[2] - a3h * y[3],
        p.alpha1 * y[0] - p.gamma1 * y[2] - p.eta1 * y[3] - p.mu1,
        p.alpha2 * y[0] - p.gamma2 * y[1] - p.eta2 * y[3] - p.mu2,
        p.alpha3 * y[0] + p.eta1 * y[1] + p.eta2 * y[2] - p.mu3,
    ])


def _coords(y_star) -> np.ndarray:
    if isinstance(y_star, Equilibrium):
        return y_star.y
    y = np.asarray(y_star, dtype=float)
    if y.shape != (4,):
        raise UsageError(f"expected 4 coordinates, got shape {y.shape}")
    return y


def _check_domain(ys: np.ndarray, y: np.ndarray):
    for i in range(4):
        if ys[i] > 0.0 and y[i] <= 0.0:
            raise DomainError(
                f"coordinate {i} is zero but the reference steady state needs it positive"
            )
    if np.any(y < 0.0):
        raise DomainError("coordinates must be nonnegative")


def v_value(y_star, y) -> float:
    """Lyapunov function value; zero starred coordinates contribute linearly."""
    ys = _coords(y_star)
    y = np.asarray(y, dtype=float)
    if y.shape != (4,):
        raise UsageError(f"expected 4 coordinates, got shape {y.shape}")
    _check_domain(ys, y)
    total = 0.0
    for i in range(4):
        total += y[i] if ys[i] == 0.0 else y[i] - ys[i] * math.log(y[i])
    return total


@dataclass(frozen=True)
class LyapunovEvaluation:
    v: float
    v_dot_analytic: float
    phi: float
    f_star: np.ndarray
    f_star_nonpositive: bool
    v_dot_fd: Optional[float] = None


def v_dot(params: ModelParameters, y_star: Union[Equilibrium, np.ndarray], y) -> LyapunovEvaluation:
    """Evaluate v and its orbital derivative at coordinates y.

    f_star_nonpositive records the sanity check F_i(Y*) <= 0 (it holds at
    every steady state in the regimes where descent is asserted).
    """
    ys = _coords(y_star)
    y = np.asarray(y, dtype=float)
    if y.shape != (4,):
        raise UsageError(f"expected 4 coordinates, got shape {y.shape}")
    _check_domain(ys, y)
    p = params
    f_star = per_capita_rates(p, ys)
    g12 = p.gamma1 + p.gamma2

    phi = 0.0
    if g12 > 0.0:
        gamma_part = y[1] * ys[2] + ys[1] * y[2]
        if ys[3] > 0.0:
            gamma_part -= ys[3] * y[1] * y[2] / y[3]
        phi += g12 * gamma_part
    quot = 0.0
    if ys[1] > 0.0:
        quot += p.beta1 * ys[1] / y[1]
    if ys[2] > 0.0:
        quot += p.beta2 * ys[2] / y[2]
    phi -= y[0] * y[3] * quot
    phi += (p.beta1 + p.beta2) * (y[3] * ys[0] + y[0] * ys[3])

    u0 = y[0] - ys[0]
    vdot = -(p.b / p.K) * u0 * u0 + float(np.dot(y, f_star)) + phi
    scale = 1.0 + float(np.abs(f_star).max())
    return LyapunovEvaluation(
        v=v_value(ys, y),
        v_dot_analytic=vdot,
        phi=phi,
        f_star=f_star,
        f_star_nonpositive=bool(np.all(f_star <= F_STAR_TOL * scale)),
    )


@dataclass
class DescentReport:
    """Lyapunov evaluations along a trajectory.

    v_dot_fd holds centered finite differences of v over the (unevenly
    spaced) samples, nan at the ends.  truncated_at is the first sample
    index where the trajectory left the domain of v (None if it never did);
    all arrays stop just before that point.
    """

    t: np.ndarray
    v: np.ndarray
    v_dot: np.ndarray
    v_dot_fd: np.ndarray
    phi: np.ndarray
    max_v_dot: float
    max_fd_gap_rel: float
    f_star: np.ndarray
    f_star_nonpositive: bool
    truncated_at: Optional[int]

    def descent_ok(self, eps_scale: float = 1e-10) -> bool:
        """Monotone descent up to integrator noise: v_dot <= eps(1 + |v|)."""
        return bool(np.all(self.v_dot <= eps_scale * (1.0 + np.abs(self.v))))


def monitor_descent(
    params: ModelParameters, y_star: Union[Equilibrium, np.ndarray], traj: Trajectory
) -> DescentReport:
    """Evaluate v and v' at every trajectory sample and cross-check the
    analytic derivative against finite differences of the sampled v."""
    ys = _coords(y_star)
    n = len(traj)
    t = traj.t
    vs, vds, phis = [], [], []
    truncated = None
    for i in range(n):
        y = traj.y[i, :4]
        try:
            ev = v_dot(params, ys, y)
        except DomainError:
            truncated = i
            break
        vs.append(ev.v)
        vds.append(ev.v_dot_analytic)
        phis.append(ev.phi)
    m = len(vs)
    v = np.array(vs)
    vd = np.array(vds)
    phi = np.array(phis)
    tt = t[:m]

    fd = np.full(m, np.nan)
    for i in range(1, m - 1):
        h0 = tt[i] - tt[i - 1]
        h1 = tt[i + 1] - tt[i]
        if h0 <= 0.0 or h1 <= 0.0:
            continue
        # second-order three-point formula for uneven spacing
        fd[i] = (
            h0 * h0 * v[i + 1] - h1 * h1 * v[i - 1] + (h1 * h1 - h0 * h0) * v[i]
        ) / (h0 * h1 * (h0 + h1))

    interior = ~np.isnan(fd)
    if interior.any():
        gap = np.abs(vd[interior] - fd[interior]) / (1.0 + np.abs(vd[interior]))
        max_gap = float(gap.max())
    else:
        max_gap = math.nan

    f_star = per_capita_rates(params, ys)
    scale = 1.0 + float(np.abs(f_star).max())
    return DescentReport(
        t=tt,
        v=v,
        v_dot=vd,
        v_dot_fd=fd,
        phi=phi,
        max_v_dot=float(vd.max()) if m else math.nan,
        max_fd_gap_rel=max_gap,
        f_star=f_star,
        f_star_nonpositive=bool(np.all(f_star <= F_STAR_TOL * scale)),
        truncated_at=truncated,
    )


def write_descent_csv(report: DescentReport, path) -> None:
    """Write t,v,v_dot_analytic,v_dot_fd,phi rows for one monitored run."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,v,v_dot_analytic,v_dot_fd,phi\n")
        for i in range(report.t.shape[0]):
            fh.write(
                f"{float(report.t[i])!r},{float(report.v[i])!r},{float(report.v_dot[i])!r},"
                f"{float(report.v_dot_fd[i])!r},{float(report.phi[i])!r}\n"
            )
