"""Two-strain coinfection SIR model with logistic growth of susceptibles.

Compartments: susceptible S, singly infected I1 and I2 (one per strain),
coinfected I12, recovered R.  The core system tracks (S, I1, I2, I12); R is
carried as a passive fifth coordinate because nothing feeds back from it.
Susceptibles reproduce logistically toward the carrying capacity K, and
every infection pathway enters as a mass-action term:

    S'   = (b (1 - S/K) - a1 I1 - a2 I2 - (b1 + b2 + a3) I12 - mu0) S
    I1'  = (a1 S - e1 I12 - g1 I2 - mu1) I1 + b1 S I12
    I2'  = (a2 S - e2 I12 - g2 I1 - mu2) I2 + b2 S I12
    I12' = (a3 S + e1 I1 + e2 I2 - mu3) I12 + (g1 + g2) I1 I2
    R'   = r1 I1 + r2 I2 + r3 I12 - mu4' R

with a* = alpha, b* = beta, g* = gamma, e* = eta, r* = rho in the symbol
names below.  mu1..mu3 are total removal rates (recovery plus death), so
mu_i >= rho_i is required.

The extended variant gives every class its own logistic birth term
b_i (1 - N/K_i), all coupled through the total population N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class ParameterError(ValueError):
    """A parameter record violates a structural constraint."""


class DegenerateParametersError(ParameterError):
    """A rate that must be positive (a transmission denominator) is zero."""


class InadmissibleError(ParameterError):
    """Parameters fail the standing admissibility hypotheses."""


class UsageError(ValueError):
    """An operation was called with mismatched or inconsistent arguments."""


# Exact field names accepted in JSON parameter documents.
PARAM_FIELDS = (
    "b", "K", "mu0", "mu1", "mu2", "mu3",
    "rho1", "rho2", "rho3", "mu4p",
    "alpha1", "alpha2", "alpha3", "beta1", "beta2",
    "gamma1", "gamma2", "eta1", "eta2",
)
FULL_FIELDS = ("b2", "b3", "b4", "b5", "K1", "K2", "K3", "K4", "K5")


@dataclass(frozen=True)
class ModelParameters:
    """Rate constants of the core system (all nonnegative, 1/time or
    1/(individuals*time)); K in individuals."""

    b: float
    K: float
    mu0: float
    mu1: float
    mu2: float
    mu3: float
    rho1: float
    rho2: float
    rho3: float
    mu4p: float
    alpha1: float
    alpha2: float
    alpha3: float
    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    eta1: float
    eta2: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"field {f.name} must be a finite number, got {v!r}")
            object.__setattr__(self, f.name, float(v))
            if getattr(self, f.name) < 0.0:
                raise ParameterError(f"field {f.name} must be nonnegative, got {v!r}")
        if self.K <= 0.0:
            raise ParameterError("carrying capacity K must be positive")

    @property
    def alpha3_hat(self) -> float:
        """Total transmission rate out of the coinfected class."""
        return self.alpha3 + self.beta1 + self.beta2

    def validate(self) -> list[str]:
        """Return the list of violated semantic constraints (empty if none).

        Structural constraints (finiteness, nonnegativity, K > 0) are already
        enforced at construction; this checks the relations between rates.
        """
        problems = []
        if self.b <= self.mu0:
            problems.append("b <= mu0 (population would die out)")
        for i, (mu, rho) in enumerate(
            ((self.mu1, self.rho1), (self.mu2, self.rho2), (self.mu3, self.rho3)), start=1
        ):
            if mu < rho:
                problems.append(f"mu{i} < rho{i} (total removal below recovery)")
        return problems


@dataclass(frozen=True)
class FullModelParameters:
    """Core rates plus per-class birth rates and carrying capacities for the
    extended system in which every class reproduces logistically."""

    base: ModelParameters
    b2: float
    b3: float
    b4: float
    b5: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float

    def __post_init__(self):
        for name in FULL_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"field {name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
            if getattr(self, name) < 0.0:
                raise ParameterError(f"field {name} must be nonnegative, got {v!r}")
        for name in ("K1", "K2", "K3", "K4", "K5"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"carrying capacity {name} must be positive")


@dataclass(frozen=True)
class DerivedQuantities:
    """Threshold densities and the modified carrying capacity.

    sigma1, sigma2 are the susceptible densities at which strain 1 resp. 2
    breaks even; sigma3 is the analogue for the coinfected class, using the
    total outgoing transmission rate alpha3_hat.  s_star_star is the
    susceptible level of the disease-free steady state.
    """

    sigma1: float
    sigma2: float
    sigma3: float
    alpha3_hat: float
    s_star_star: float


@dataclass(frozen=True)
class State:
    """Class densities at a time point; densities are nonnegative."""

    t: float
    s: float
    i1: float
    i2: float
    i12: float
    r: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.i1, self.i2, self.i12, self.r], dtype=float)

    @property
    def y4(self) -> np.ndarray:
        return np.array([self.s, self.i1, self.i2, self.i12], dtype=float)

    @property
    def total(self) -> float:
        return self.s + self.i1 + self.i2 + self.i12 + self.r

    @classmethod
    def from_array(cls, t: float, y: Sequence[float]) -> "State":
        y = np.asarray(y, dtype=float)
        return cls(float(t), *(float(v) for v in y[:5]))


@dataclass(frozen=True)
class Admissibility:
    """Verdict of the admissibility check.

    admissible    threshold ordering sigma1 < sigma2 < sigma3 and b > mu0 hold
    lotka_volterra  all of beta1, beta2, gamma1, gamma2 vanish (the fully
                    analyzed oracle regime; accepted, flagged)
    nonvanish     beta1 > 0, beta2 > 0 and gamma1 + gamma2 > 0
    reasons       violated conditions, by name (empty when admissible)
    """

    admissible: bool
    lotka_volterra: bool
    nonvanish: bool
    reasons: tuple[str, ...]


def _state5(state) -> np.ndarray:
    if isinstance(state, State):
        return state.as_array()
    y = np.asarray(state, dtype=float)
    if y.shape != (5,):
        raise UsageError(f"expected a 5-component state, got shape {y.shape}")
    return y


def _state4(state) -> np.ndarray:
    if isinstance(state, State):
        return state.y4
    y = np.asarray(state, dtype=float)
    if y.shape == (5,):
        return y[:4]
    if y.shape != (4,):
        raise UsageError(f"expected a 4- or 5-component state, got shape {y.shape}")
    return y


def derive(params: ModelParameters) -> DerivedQuantities:
    """Compute threshold densities and the modified carrying capacity.

    Raises DegenerateParametersError if a transmission denominator vanishes
    and InadmissibleError if b <= mu0.
    """
    a3h = params.alpha3_hat
    if params.alpha1 == 0.0 or params.alpha2 == 0.0 or a3h == 0.0:
        raise DegenerateParametersError(
            "alpha1, alpha2 and alpha3 + beta1 + beta2 must all be positive"
        )
    if params.b <= params.mu0:
        raise InadmissibleError("b <= mu0")
    return DerivedQuantities(
        sigma1=params.mu1 / params.alpha1,
        sigma2=params.mu2 / params.alpha2,
        sigma3=params.mu3 / a3h,
        alpha3_hat=a3h,
        s_star_star=params.K * (1.0 - params.mu0 / params.b),
    )


def check_admissible(params: ModelParameters, eps_adm: float = 0.0) -> Admissibility:
    """Classify a parameter record.

    eps_adm demands the threshold inequalities hold with at least that
    margin, so callers can insist on robust separation; the default 0 keeps
    them strict.
    """
    reasons = []
    reasons.extend(params.validate())
    a3h = params.alpha3_hat
    if params.alpha1 == 0.0:
        reasons.append("alpha1 = 0 (degenerate)")
    if params.alpha2 == 0.0:
        reasons.append("alpha2 = 0 (degenerate)")
    if a3h == 0.0:
        reasons.append("alpha3 + beta1 + beta2 = 0 (degenerate)")
    if not reasons:
        s1 = params.mu1 / params.alpha1
        s2 = params.mu2 / params.alpha2
        s3 = params.mu3 / a3h
        if not s2 - s1 > eps_adm:
            reasons.append(f"sigma1 < sigma2 violated (sigma1={s1!r}, sigma2={s2!r})")
        if not s3 - s2 > eps_adm:
            reasons.append(f"sigma2 < sigma3 violated (sigma2={s2!r}, sigma3={s3!r})")
    lv = (
        params.beta1 == 0.0
        and params.beta2 == 0.0
        and params.gamma1 == 0.0
        and params.gamma2 == 0.0
    )
    nonvanish = params.beta1 > 0.0 and params.beta2 > 0.0 and params.gamma1 + params.gamma2 > 0.0
    return Admissibility(
        admissible=not reasons,
        lotka_volterra=lv,
        nonvanish=nonvanish,
        reasons=tuple(reasons),
    )


def require_admissible(params: ModelParameters, eps_adm: float = 0.0) -> Admissibility:
    verdict = check_admissible(params, eps_adm)
    if not verdict.admissible:
        raise InadmissibleError("; ".join(verdict.reasons))
    return verdict


def rhs_sub(params: ModelParameters, state) -> np.ndarray:
    """Right-hand side of the core system at a 5-component state.

    The first four components do not depend on r.
    """
    s, i1, i2, i12, r = _state5(state)
    p = params
    a3h = p.alpha3 + p.beta1 + p.beta2
    ds = (p.b * (1.0 - s / p.K) - p.alpha1 * i1 - p.alpha2 * i2 - a3h * i12 - p.mu0) * s
    di1 = (p.alpha1 * s - p.eta1 * i12 - p.gamma1 * i2 - p.mu1) * i1 + p.beta1 * s * i12
    di2 = (p.alpha2 * s - p.eta2 * i12 - p.gamma2 * i1 - p.mu2) * i2 + p.beta2 * s * i12
    di12 = (p.alpha3 * s + p.eta1 * i1 + p.eta2 * i2 - p.mu3) * i12 + (p.gamma1 + p.gamma2) * i1 * i2
    dr = p.rho1 * i1 + p.rho2 * i2 + p.rho3 * i12 - p.mu4p * r
    return np.array([ds, di1, di2, di12, dr])


def rhs_full(params: FullModelParameters, state) -> np.ndarray:
    """Right-hand side of the extended system with per-class logistic terms.

    All five equations couple through the total population N.  With
    b2..b5 = 0 the infected and recovered equations coincide with the core
    system; the susceptible equation then differs only in using N instead
    of S in its logistic term, so the two systems agree exactly on states
    where S is the sole occupied class.
    """
    s, i1, i2, i12, r = _state5(state)
    p = params.base
    n = s + i1 + i2 + i12 + r
    a3h = p.alpha3 + p.beta1 + p.beta2
    ds = (p.b * (1.0 - n / params.K1) - p.alpha1 * i1 - p.alpha2 * i2 - a3h * i12 - p.mu0) * s
    di1 = (
        params.b2 * (1.0 - n / params.K2) + p.alpha1 * s - p.eta1 * i12 - p.gamma1 * i2 - p.mu1
    ) * i1 + p.beta1 * s * i12
    di2 = (
        params.b3 * (1.0 - n / params.K3) + p.alpha2 * s - p.eta2 * i12 - p.gamma2 * i1 - p.mu2
    ) * i2 + p.beta2 * s * i12
    di12 = (
        params.b4 * (1.0 - n / params.K4) + p.alpha3 * s + p.eta1 * i1 + p.eta2 * i2 - p.mu3
    ) * i12 + (p.gamma1 + p.gamma2) * i1 * i2
    dr = (params.b5 * (1.0 - n / params.K5) - p.mu4p) * r + p.rho1 * i1 + p.rho2 * i2 + p.rho3 * i12
    return np.array([ds, di1, di2, di12, dr])


def jacobian_sub(params: ModelParameters, state) -> np.ndarray:
    """Analytic Jacobian of the first four equations of the core system.

    Entry (i, j) is the partial derivative of the class-i right-hand side
    with respect to the class-j density, evaluated at the given state.
    Hand-derived once; locked elsewhere by a finite-difference test so
    downstream eigenvalue classification never inherits differencing noise.
    """
    s, i1, i2, i12 = _state4(state)
    p = params
    a3h = p.alpha3 + p.beta1 + p.beta2
    g12 = p.gamma1 + p.gamma2
    return np.array([
        [
            p.b * (1.0 - 2.0 * s / p.K) - p.alpha1 * i1 - p.alpha2 * i2 - a3h * i12 - p.mu0,
            -p.alpha1 * s,
            -p.alpha2 * s,
            -a3h * s,
        ],
        [
            p.alpha1 * i1 + p.beta1 * i12,
            p.alpha1 * s - p.eta1 * i12 - p.gamma1 * i2 - p.mu1,
            -p.gamma1 * i1,
            -p.eta1 * i1 + p.beta1 * s,
        ],
        [
            p.alpha2 * i2 + p.beta2 * i12,
            -p.gamma2 * i2,
            p.alpha2 * s - p.eta2 * i12 - p.gamma2 * i1 - p.mu2,
            -p.eta2 * i2 + p.beta2 * s,
        ],
        [
            p.alpha3 * i12,
            p.eta1 * i12 + g12 * i2,
            p.eta2 * i12 + g12 * i1,
            p.alpha3 * s + p.eta1 * i1 + p.eta2 * i2 - p.mu3,
        ],
    ])


def _require_number(block: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParameterError(f"{block}: field {key} must be a number, got {value!r}")
    return float(value)


def load_parameters(source: Union[str, Path, dict]) -> Union[ModelParameters, FullModelParameters]:
    """Build a parameter record from a JSON document or an equivalent dict.

    Field names must match exactly; unknown keys are a hard error so typos
    cannot silently fall back to defaults.  An optional "full" object with
    fields b2..b5 and K1..K5 selects the extended model.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ParameterError("parameter document must be a JSON object")

    unknown = sorted(set(doc) - set(PARAM_FIELDS) - {"full"})
    if unknown:
        raise ParameterError(f"unknown parameter field(s): {', '.join(unknown)}")
    missing = sorted(set(PARAM_FIELDS) - set(doc))
    if missing:
        raise ParameterError(f"missing parameter field(s): {', '.join(missing)}")
    base = ModelParameters(**{k: _require_number("params", k, doc[k]) for k in PARAM_FIELDS})

    if "full" not in doc:
        return base
    full = doc["full"]
    if not isinstance(full, dict):
        raise ParameterError('"full" must be an object')
    unknown = sorted(set(full) - set(FULL_FIELDS))
    if unknown:
        raise ParameterError(f"unknown full-model field(s): {', '.join(unknown)}")
    missing = sorted(set(FULL_FIELDS) - set(full))
    if missing:
        raise ParameterError(f"missing full-model field(s): {', '.join(missing)}")
    return FullModelParameters(
        base=base, **{k: _require_number("full", k, full[k]) for k in FULL_FIELDS}
    )
