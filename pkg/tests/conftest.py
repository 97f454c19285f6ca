"""
Shared model fixtures.
"""
import pytest

from app.models.risk import PayoffBundle, RiskFunction
from app.models.surface import MarkovModel
from app.services.builtin_service import (
    AffinePayoff,
    CallPayoff,
    ConstantCoefficient,
    ConstantPayoff,
    LinearCoefficient,
)


def make_model(
    L,
    U,
    xi,
    f=None,
    r=0.0,
    T=1.0,
    lambda1=1.0,
    lambda2=2.0,
    g=None,
    drift=None,
    volatility=None,
    x0=1.0,
    name="test",
):
    bundle = PayoffBundle(r=r, f=f or ConstantPayoff(0.0), L=L, U=U, xi=xi, T=T)
    return MarkovModel(
        drift=drift or ConstantCoefficient(0.0),
        volatility=volatility or ConstantCoefficient(0.0),
        x0=x0,
        bundle=bundle,
        g=g or RiskFunction.identity(),
        lambda1=lambda1,
        lambda2=lambda2,
        name=name,
    )


def constant_instance(g=None, K=1.0):
    """L = U = ξ ≡ K, f ≡ 0, r = 0: every realization pays K."""
    return make_model(
        ConstantPayoff(K), ConstantPayoff(K), ConstantPayoff(K), lambda1=2.0, lambda2=3.0, g=g, name="constant"
    )


def deterministic_instance(g=None):
    """Constant payoffs with ξ above U, so the min player stops at every signal."""
    return make_model(
        ConstantPayoff(0.8), ConstantPayoff(1.2), ConstantPayoff(1.5), f=ConstantPayoff(0.1),
        r=0.05, lambda1=1.0, lambda2=2.0, g=g, name="deterministic",
    )


def geometric_instance(g=None):
    """One-dimensional geometric diffusion with option-style obstacles."""
    return make_model(
        L=CallPayoff(1.1),
        U=CallPayoff(0.9, scale=1.2, shift=0.1),
        xi=CallPayoff(1.0),
        r=0.05,
        lambda1=1.0,
        lambda2=2.0,
        g=g,
        drift=LinearCoefficient(0.05),
        volatility=LinearCoefficient(0.2),
        name="geometric",
    )


@pytest.fixture
def constant_model():
    return constant_instance()


@pytest.fixture
def deterministic_model():
    return deterministic_instance()


@pytest.fixture
def geometric_model():
    return geometric_instance()


@pytest.fixture
def affine_payoff():
    return AffinePayoff(0.0, 2.0)
