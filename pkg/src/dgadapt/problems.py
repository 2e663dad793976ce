"""Benchmark problem definitions and a manufactured-solution generator.

All coefficient callables are numpy-vectorised with signature
``(x, y, t) -> array``; the wind ``a`` returns a pair ``(ax, ay)``.  The
divergence of the wind is supplied analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class ProblemDefinition:
    """Coefficients and data of one convection-diffusion problem."""

    name: str
    domain: tuple[float, float, float, float]
    T: float
    eps: float
    a: Callable  # (x, y, t) -> (ax, ay)
    div_a: Callable
    b: Callable
    f: Callable
    u0: Callable  # (x, y) -> values
    beta: float
    c_star: float = 0.0
    exact: Callable | None = None  # (x, y, t) -> u
    exact_grad: Callable | None = None  # (x, y, t) -> (ux, uy)
    a_depends_t: bool = False
    b_depends_t: bool = False
    f_depends_t: bool = True

    @property
    def autonomous_operator(self):
        """True when the assembled spatial operator is time-independent."""
        return not (self.a_depends_t or self.b_depends_t)


def _zero(x, y, t=None):
    return np.zeros(np.broadcast(x, y).shape)


def example1(eps: float) -> ProblemDefinition:
    """Boundary-layer problem with known exact solution.

    ``u = (1 - e^{-t}) g(x) g(y)`` on the unit square with wind (1, 1),
    where ``g`` carries an outflow boundary layer of width O(eps).
    The forcing is derived analytically from the exact solution.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    den = math.expm1(-1.0 / eps)  # e^{-1/eps} - 1

    def g(s):
        return np.expm1((s - 1.0) / eps) / den + s - 1.0

    def gp(s):
        return np.exp((s - 1.0) / eps) / (eps * den) + 1.0

    def gpp(s):
        return np.exp((s - 1.0) / eps) / (eps * eps * den)

    def exact(x, y, t):
        return -np.expm1(-t) * g(x) * g(y)

    def exact_grad(x, y, t):
        w = -np.expm1(-t)
        return w * gp(x) * g(y), w * g(x) * gp(y)

    def forcing(x, y, t):
        w = -np.expm1(-t)  # 1 - e^{-t}
        gx, gy = g(x), g(y)
        u_t = np.exp(-t) * gx * gy
        lap = gpp(x) * gy + gx * gpp(y)
        adv = gp(x) * gy + gx * gp(y)
        return u_t - eps * w * lap + w * adv

    def wind(x, y, t):
        shape = np.broadcast(x, y).shape
        return np.ones(shape), np.ones(shape)

    return ProblemDefinition(
        name="example1",
        domain=(0.0, 1.0, 0.0, 1.0),
        T=10.0,
        eps=eps,
        a=wind,
        div_a=_zero,
        b=_zero,
        f=forcing,
        u0=lambda x, y: np.zeros(np.broadcast(x, y).shape),
        beta=0.0,
        exact=exact,
        exact_grad=exact_grad,
    )


def example2(eps: float = 1.0) -> ProblemDefinition:
    """Oscillatory-in-time forcing ``f = sin(5t) x y`` on (-1, 1)^2."""

    def wind(x, y, t):
        shape = np.broadcast(x, y).shape
        return np.ones(shape), np.ones(shape)

    return ProblemDefinition(
        name="example2",
        domain=(-1.0, 1.0, -1.0, 1.0),
        T=2.0 * math.pi,
        eps=eps,
        a=wind,
        div_a=_zero,
        b=lambda x, y, t: np.ones(np.broadcast(x, y).shape),
        f=lambda x, y, t: np.sin(5.0 * t) * x * y,
        u0=lambda x, y: np.zeros(np.broadcast(x, y).shape),
        beta=1.0,
    )


def example3(eps: float = 1.0) -> ProblemDefinition:
    """Gaussian profile convected along the circular wind (y, -x)."""

    def wind(x, y, t):
        shape = np.broadcast(x, y).shape
        return np.broadcast_to(y, shape).astype(float), -np.broadcast_to(
            x, shape
        ).astype(float)

    def gaussian(x, y):
        return np.exp(-64.0 * (x - 0.5) ** 2) * np.exp(-64.0 * (y - 0.5) ** 2)

    return ProblemDefinition(
        name="example3",
        domain=(-1.0, 1.0, -1.0, 1.0),
        T=100.0,
        eps=eps,
        a=wind,
        div_a=_zero,
        b=_zero,
        f=_zero,
        u0=gaussian,
        beta=0.0,
        f_depends_t=False,
    )


def example3_center(t):
    """Advected position of the initial Gaussian's centre at time t."""
    x0, y0 = 0.5, 0.5
    return (
        x0 * math.cos(t) + y0 * math.sin(t),
        -x0 * math.sin(t) + y0 * math.cos(t),
    )


def example4(eps: float = 1.0) -> ProblemDefinition:
    """Rotating wind ``a = (sin t, cos t)`` with constant forcing."""

    def wind(x, y, t):
        shape = np.broadcast(x, y).shape
        return (
            np.full(shape, math.sin(t)),
            np.full(shape, math.cos(t)),
        )

    return ProblemDefinition(
        name="example4",
        domain=(0.0, 1.0, 0.0, 1.0),
        T=2.0 * math.pi,
        eps=eps,
        a=wind,
        div_a=_zero,
        b=_zero,
        f=lambda x, y, t: np.ones(np.broadcast(x, y).shape),
        u0=lambda x, y: np.zeros(np.broadcast(x, y).shape),
        beta=0.0,
        a_depends_t=True,
        f_depends_t=False,
    )


def manufactured(
    u,
    u_t,
    u_x,
    u_y,
    u_xx,
    u_yy,
    eps,
    a=None,
    div_a=None,
    b=None,
    domain=(0.0, 1.0, 0.0, 1.0),
    T=1.0,
    beta=0.0,
    name="manufactured",
    a_depends_t=False,
    b_depends_t=False,
) -> ProblemDefinition:
    """Problem whose forcing is derived from a closed-form solution.

    The solution must vanish on the domain boundary; all derivative
    callables share the ``(x, y, t)`` signature.
    """
    a = a or (lambda x, y, t: (_zero(x, y), _zero(x, y)))
    div_a = div_a or _zero
    b = b or _zero

    def forcing(x, y, t):
        ax, ay = a(x, y, t)
        return (
            u_t(x, y, t)
            - eps * (u_xx(x, y, t) + u_yy(x, y, t))
            + ax * u_x(x, y, t)
            + ay * u_y(x, y, t)
            + b(x, y, t) * u(x, y, t)
        )

    return ProblemDefinition(
        name=name,
        domain=domain,
        T=T,
        eps=eps,
        a=a,
        div_a=div_a,
        b=b,
        f=forcing,
        u0=lambda x, y: u(x, y, 0.0),
        beta=beta,
        exact=u,
        exact_grad=lambda x, y, t: (u_x(x, y, t), u_y(x, y, t)),
        a_depends_t=a_depends_t,
        b_depends_t=b_depends_t,
    )


_REGISTRY = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "example4": example4,
}


def by_name(name: str, eps: float) -> ProblemDefinition:
    """Look up a registered problem; eps is applied to the definition."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            "unknown problem %r (known: %s)" % (name, ", ".join(sorted(_REGISTRY)))
        ) from None
    return factory(eps)
