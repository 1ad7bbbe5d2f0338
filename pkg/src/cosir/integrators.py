"""Adaptive explicit time integration with positivity handling.

The default stepper is the Dormand-Prince 5(4) embedded pair with a mixed
absolute/relative error criterion; a fixed-step classical RK4 is available
as a cross-check mode.  Steps that would push a density slightly below zero
(within roundoff of the state scale) are clamped to zero, more negative
excursions reject the step, so every emitted sample lies in the
nonnegative cone.

check_bounds evaluates two a priori estimates along a finished trajectory:
a pointwise upper envelope for S(t) that decays from S(0) toward the
modified carrying capacity, and a cap on the total infected-plus-susceptible
population.  It also reports trailing-window estimates of the asymptotic
infection pressure kappa = limsup(a1 I1 + a2 I2 + a3h I12) and of
liminf S, together with the lower separation bound K (b - mu0 - kappa) / b
that applies when kappa < b - mu0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .model import (
    FullModelParameters,
    ModelParameters,
    State,
    UsageError,
    derive,
    rhs_full,
    rhs_sub,
)


class StiffnessError(RuntimeError):
    """Step size underflowed; carries the last valid time and state."""

    def __init__(self, message: str, t: float, state: np.ndarray):
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 5.0
    positivity_floor: float = 0.0
    method: str = "dopri45"  # "dopri45" or "rk4" (fixed step h_init)
    stop_at_steady: bool = False
    steady_rhs_tol: float = 1e-8
    steady_steps: int = 10

    def __post_init__(self):
        if not (0.0 < self.h_min <= self.h_init <= self.h_max):
            raise UsageError("step bounds must satisfy 0 < h_min <= h_init <= h_max")
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise UsageError("tolerances must be positive")
        if self.positivity_floor < 0.0:
            raise UsageError("positivity_floor must be nonnegative")
        if self.t_end <= 0.0:
            raise UsageError("t_end must be positive")
        if self.method not in ("dopri45", "rk4"):
            raise UsageError(f"unknown method {self.method!r}")


@dataclass
class Trajectory:
    """Accepted-step samples of one integration run.

    t is strictly increasing, y holds (S, I1, I2, I12, R) per row and every
    entry is nonnegative.  monitor_log collects (time, monitor id, margin)
    events recorded while stepping (currently positivity clamps).  steady is
    True when the run stopped early on the steady-state detector.
    """

    t: np.ndarray
    y: np.ndarray
    dense: bool
    monitor_log: list = field(default_factory=list)
    steady: bool = False
    params: Union[ModelParameters, FullModelParameters, None] = None

    def __len__(self) -> int:
        return self.t.shape[0]

    def state(self, i: int) -> State:
        return State.from_array(self.t[i], self.y[i])

    def final_state(self) -> State:
        return self.state(len(self) - 1)

    def samples(self):
        for i in range(len(self)):
            yield self.state(i)


@dataclass(frozen=True)
class BoundMonitorReport:
    """Margins of the a priori bounds along a trajectory (negative margin
    means the bound was violated beyond integration noise)."""

    colo_margin_min: float
    total_margin_min: float
    total_cap: float
    liminf_estimate: float
    kappa_estimate: float
    prop_separation_bound: Optional[float]  # None when kappa >= b - mu0 (inapplicable)
    window_start_time: float


# Dormand-Prince 5(4): seven stages, order 5 propagated, order 4 embedded.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
# b5 - b4: weights of the embedded error estimate
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_SAFETY = 0.9
_GROW_MAX = 5.0
_SHRINK_MIN = 0.2


def _rhs_for(params):
    if isinstance(params, FullModelParameters):
        return lambda y: rhs_full(params, y)
    if isinstance(params, ModelParameters):
        return lambda y: rhs_sub(params, y)
    raise UsageError(f"unsupported parameter type {type(params).__name__}")


def _validate_y0(y0: np.ndarray):
    if not np.all(np.isfinite(y0)):
        raise UsageError("initial state must be finite")
    if y0[0] <= 0.0:
        raise UsageError("initial susceptible density must be positive")
    if np.any(y0[1:] < 0.0):
        raise UsageError("initial densities must be nonnegative")


def integrate(params, y0, cfg: IntegratorConfig) -> Trajectory:
    """Integrate the model from y0 until cfg.t_end.

    y0 may be a State (its t is the start time) or a 5-component array
    starting at t = 0.  Every accepted step is recorded.  Raises
    StiffnessError when the step size underflows h_min.
    """
    f = _rhs_for(params)
    if isinstance(y0, State):
        t = float(y0.t)
        y = y0.as_array()
    else:
        t = 0.0
        y = np.asarray(y0, dtype=float).copy()
        if y.shape != (5,):
            raise UsageError(f"expected a 5-component initial state, got shape {y.shape}")
    _validate_y0(y)
    t_end = t + cfg.t_end

    times = [t]
    states = [y.copy()]
    log: list = []
    steady = False

    if cfg.method == "rk4":
        steady = _run_rk4(f, t, y, t_end, cfg, times, states, log)
    else:
        steady = _run_dopri(f, t, y, t_end, cfg, times, states, log)

    return Trajectory(
        t=np.array(times),
        y=np.array(states),
        dense=True,
        monitor_log=log,
        steady=steady,
        params=params,
    )


def _clamp_small_negatives(y: np.ndarray, t: float, floor_mag: float, log: list) -> bool:
    """Clamp components in [-floor_mag, 0) to zero; return False if any
    component is more negative than the floor."""
    bad = y < 0.0
    if not bad.any():
        return True
    if np.any(y < -floor_mag):
        return False
    for j in np.nonzero(bad)[0]:
        log.append((t, f"clamp[{j}]", float(y[j])))
        y[j] = 0.0
    return True


def _run_dopri(f, t, y, t_end, cfg, times, states, log) -> bool:
    h = min(cfg.h_init, cfg.h_max)
    k = [None] * 7
    k[0] = f(y)
    steady_count = 0
    while t < t_end * (1.0 - 1e-15):
        h = min(h, t_end - t)
        if t + h == t:
            raise StiffnessError(f"step size underflow at t={t!r}", t, y.copy())
        for i in range(1, 7):
            yi = y + h * sum(_A[i][j] * k[j] for j in range(i))
            k[i] = f(yi)
        y_new = y + h * sum(_B5[i] * k[i] for i in range(7))
        err_vec = h * sum(_E[i] * k[i] for i in range(7))

        scale = cfg.abs_tol + cfg.rel_tol * max(
            float(np.abs(y).max()), float(np.abs(y_new).max())
        )
        err = float(np.abs(err_vec).max())

        if err <= scale:
            floor_mag = max(cfg.positivity_floor, 1e-12 * (1.0 + float(np.abs(y).max())))
            if not _clamp_small_negatives(y_new, t + h, floor_mag, log):
                # a density went clearly negative: reject and halve
                h = h / 2.0
                if h < cfg.h_min:
                    raise StiffnessError(
                        f"step size underflow at t={t!r} (positivity rejection)", t, y.copy()
                    )
                continue
            t = t + h
            y = y_new
            times.append(t)
            states.append(y.copy())
            k[0] = k[6] if not log or log[-1][0] != t else f(y)  # FSAL unless clamped
            if cfg.stop_at_steady:
                if float(np.abs(k[0]).max()) < cfg.steady_rhs_tol:
                    steady_count += 1
                    if steady_count >= cfg.steady_steps:
                        return True
                else:
                    steady_count = 0
            factor = _GROW_MAX if err == 0.0 else min(
                _GROW_MAX, max(_SHRINK_MIN, _SAFETY * (scale / err) ** 0.2)
            )
            h = min(cfg.h_max, h * factor)
        else:
            h = h * max(0.1, _SAFETY * (scale / err) ** 0.2)
            if h < cfg.h_min:
                raise StiffnessError(
                    f"step size underflow at t={t!r} (error control)", t, y.copy()
                )
    return False


def _run_rk4(f, t, y, t_end, cfg, times, states, log) -> bool:
    h0 = cfg.h_init
    steady_count = 0
    while t < t_end * (1.0 - 1e-15):
        h = min(h0, t_end - t)
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        floor_mag = max(cfg.positivity_floor, 1e-12 * (1.0 + float(np.abs(y).max())))
        if not _clamp_small_negatives(y_new, t + h, floor_mag, log):
            h0 = h0 / 2.0
            if h0 < cfg.h_min:
                raise StiffnessError(
                    f"step size underflow at t={t!r} (positivity rejection)", t, y.copy()
                )
            continue
        t = t + h
        y = y_new
        times.append(t)
        states.append(y.copy())
        if cfg.stop_at_steady:
            if float(np.abs(f(y)).max()) < cfg.steady_rhs_tol:
                steady_count += 1
                if steady_count >= cfg.steady_steps:
                    return True
            else:
                steady_count = 0
    return False


def _base_params(params) -> ModelParameters:
    return params.base if isinstance(params, FullModelParameters) else params


def check_bounds(traj: Trajectory, params) -> BoundMonitorReport:
    """Evaluate the a priori bound margins along a trajectory.

    The susceptible envelope is checked pointwise; the total bound uses
    cap = max(N4(0), b S_m / mu) with S_m = max(S**, S(0)) and mu the
    smallest of mu0..mu3.  Trailing-window (last 20% of the horizon)
    estimates stand in for the asymptotic limsup/liminf quantities.
    """
    if traj.params is not None and traj.params != params:
        raise UsageError("trajectory was produced with different parameters")
    if len(traj) < 2:
        raise UsageError("trajectory has too few samples")
    p = _base_params(params)
    d = derive(p)
    r_net = p.b - p.mu0
    s0 = float(traj.y[0, 0])
    t0 = float(traj.t[0])

    tt = traj.t - t0
    decay = np.exp(-r_net * tt)
    colo_bound = 1.0 / ((1.0 / d.s_star_star) * (1.0 - decay) + decay / s0)
    colo_margin = colo_bound - traj.y[:, 0]

    n4 = traj.y[:, :4].sum(axis=1)
    s_m = max(d.s_star_star, s0)
    mu = min(p.mu0, p.mu1, p.mu2, p.mu3)
    if mu > 0.0:
        cap = max(float(n4[0]), p.b * s_m / mu)
    else:
        cap = math.inf
    total_margin = cap - n4

    horizon = float(traj.t[-1] - t0)
    w_start = t0 + 0.8 * horizon
    tail = traj.t >= w_start
    a3h = p.alpha3_hat
    pressure = (
        p.alpha1 * traj.y[tail, 1] + p.alpha2 * traj.y[tail, 2] + a3h * traj.y[tail, 3]
    )
    kappa = float(pressure.max())
    liminf_s = float(traj.y[tail, 0].min())
    sep = (p.K / p.b) * (r_net - kappa) if kappa < r_net else None

    return BoundMonitorReport(
        colo_margin_min=float(colo_margin.min()),
        total_margin_min=float(total_margin.min()),
        total_cap=cap,
        liminf_estimate=liminf_s,
        kappa_estimate=kappa,
        prop_separation_bound=sep,
        window_start_time=w_start,
    )


def write_trajectory_csv(traj: Trajectory, path, stride: int = 1) -> None:
    """Write t,S,I1,I2,I12,R,N rows, one per accepted step (or per stride).

    The final sample is always included so downstream consumers can read
    the end state regardless of stride.
    """
    if stride < 1:
        raise UsageError("stride must be >= 1")
    idx = list(range(0, len(traj), stride))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,S,I1,I2,I12,R,N\n")
        for i in idx:
            row = [float(v) for v in traj.y[i]]
            n = float(traj.y[i].sum())
            fh.write(
                f"{float(traj.t[i])!r},{row[0]!r},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r},{n!r}\n"
            )
