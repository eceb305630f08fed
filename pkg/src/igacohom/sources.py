"""Analytic source fields ``H_s``.

Sources are callables mapping points ``(m, 3)`` to field values
``(m, 3)``.  Coils are expected to lie outside the computational domain,
so ``curl H_s = 0`` there.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ellipe, ellipk

MU0 = 4e-7 * np.pi


@dataclass(frozen=True)
class UniformField:
    H0: tuple = (0.0, 0.0, 1.0)

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.H0, float), x.shape).copy()

    def describe(self) -> str:
        return "uniform H=" + ",".join(repr(float(v)) for v in self.H0)


@dataclass(frozen=True)
class CircularLoop:
    """Filamentary circular loop in a plane ``z = const`` with axis +z.

    The field is the closed-form Biot-Savart expression in complete
    elliptic integrals.  Positive current circulates counterclockwise
    seen from +z.
    """

    radius: float
    current: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, float)) - np.asarray(self.center, float)
        a, I = self.radius, self.current
        rho = np.hypot(x[:, 0], x[:, 1])
        z = x[:, 2]
        r2 = rho ** 2 + z ** 2
        alpha2 = a * a + r2 - 2 * a * rho
        beta2 = a * a + r2 + 2 * a * rho
        beta = np.sqrt(beta2)
        m = 1.0 - alpha2 / beta2
        K, E = ellipk(m), ellipe(m)
        c = I / np.pi  # B/mu0 prefactor
        Hz = c / (2 * alpha2 * beta) * ((a * a - r2) * E + alpha2 * K)
        safe = rho > 1e-12 * max(a, 1.0)
        Hrho = np.zeros_like(rho)
        Hrho[safe] = (c * z[safe] / (2 * alpha2[safe] * beta[safe] * rho[safe])
                      * ((a * a + r2[safe]) * E[safe] - alpha2[safe] * K[safe]))
        out = np.zeros_like(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            cx = np.where(safe, x[:, 0] / np.where(safe, rho, 1.0), 0.0)
            cy = np.where(safe, x[:, 1] / np.where(safe, rho, 1.0), 0.0)
        out[:, 0] = Hrho * cx
        out[:, 1] = Hrho * cy
        out[:, 2] = Hz
        return out

    def describe(self) -> str:
        c = ",".join(repr(float(v)) for v in self.center)
        return f"loop radius={self.radius!r} current={self.current!r} center={c}"


@dataclass(frozen=True)
class Coil:
    """Superposition of loops (e.g. a stacked-loop solenoid)."""

    loops: tuple = field(default_factory=tuple)

    def __call__(self, x):
        x = np.atleast_2d(x)
        out = np.zeros(x.shape)
        for lp in self.loops:
            out += lp(x)
        return out

    def describe(self) -> str:
        return "\n".join(lp.describe() for lp in self.loops)


def solenoid(radius, length, turns, current, center=(0.0, 0.0, 0.0)) -> Coil:
    zc = np.asarray(center, float)
    zs = np.linspace(-length / 2, length / 2, turns) if turns > 1 else [0.0]
    return Coil(tuple(CircularLoop(radius, current, (zc[0], zc[1], zc[2] + z)) for z in zs))
