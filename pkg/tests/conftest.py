"""Shared fixtures: the reference parameter set and a random admissible
parameter generator used by the property-style tests."""

from dataclasses import replace

import numpy as np
import pytest

from cosir import ModelParameters

# Reference rates used throughout the tests.  Thresholds: sigma1 = 2,
# sigma2 = 3, sigma3 = 7.5; S** = 0.75 K.  The recovery split (rho_i,
# mu4p) is not pinned by the analysis and is fixed here once.
P_REF = ModelParameters(
    b=4.0, K=4.0, mu0=1.0,
    mu1=1.0, mu2=1.2, mu3=1.5,
    rho1=0.5, rho2=0.6, rho3=0.75, mu4p=1.0,
    alpha1=0.5, alpha2=0.4, alpha3=0.1,
    beta1=0.05, beta2=0.05,
    gamma1=0.1, gamma2=0.1,
    eta1=0.2, eta2=0.2,
)


def pref(K: float = 4.0, **over) -> ModelParameters:
    return replace(P_REF, K=float(K), **over)


def lv_limit(params: ModelParameters) -> ModelParameters:
    return replace(params, beta1=0.0, beta2=0.0, gamma1=0.0, gamma2=0.0)


def random_admissible(rng: np.random.Generator, lv: bool = False) -> ModelParameters:
    """Draw an admissible parameter record with well-separated thresholds.

    The modified carrying capacity is placed below sigma1, between sigma1
    and sigma2, or above sigma2 with equal probability so that draws cover
    the disease-free, strain-1 and strain-2 regimes.
    """
    while True:
        sig = np.sort(10.0 ** rng.uniform(-0.5, 1.5, 3))
        if sig[1] > 1.05 * sig[0] + 1e-3 and sig[2] > 1.05 * sig[1] + 1e-3:
            break
    alpha1, alpha2 = 10.0 ** rng.uniform(-0.7, 0.3, 2)
    alpha3 = 10.0 ** rng.uniform(-1.3, -0.3)
    if lv:
        beta1 = beta2 = gamma1 = gamma2 = 0.0
    else:
        beta1, beta2 = 10.0 ** rng.uniform(-2.0, -0.7, 2)
        gamma1, gamma2 = 10.0 ** rng.uniform(-2.0, -0.7, 2)
    eta1, eta2 = 10.0 ** rng.uniform(-1.3, 0.0, 2)
    a3h = alpha3 + beta1 + beta2
    mu1, mu2, mu3 = sig[0] * alpha1, sig[1] * alpha2, sig[2] * a3h
    mu0 = 10.0 ** rng.uniform(-1.0, 0.0)
    b = mu0 + 10.0 ** rng.uniform(-0.3, 0.7)

    mode = rng.integers(0, 3)
    if mode == 0:
        sss = sig[0] * rng.uniform(0.3, 0.95)
    elif mode == 1:
        sss = sig[0] + (sig[1] - sig[0]) * rng.uniform(0.1, 0.9)
    else:
        sss = sig[1] * rng.uniform(1.05, 1.8)
    K = sss / (1.0 - mu0 / b)

    return ModelParameters(
        b=b, K=K, mu0=mu0, mu1=mu1, mu2=mu2, mu3=mu3,
        rho1=rng.uniform(0.0, 1.0) * mu1,
        rho2=rng.uniform(0.0, 1.0) * mu2,
        rho3=rng.uniform(0.0, 1.0) * mu3,
        mu4p=10.0 ** rng.uniform(-1.0, 0.3),
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
        beta1=beta1, beta2=beta2, gamma1=gamma1, gamma2=gamma2,
        eta1=eta1, eta2=eta2,
    )


@pytest.fixture
def p_ref() -> ModelParameters:
    return P_REF
