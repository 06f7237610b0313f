"""Bounded loss used by the criterion and the Huber score used by the robust fit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

DEFAULT_B = 2.0
DEFAULT_HUBER_C = 1.345


@dataclass(frozen=True)
class RhoFunction:
    """Clipped quadratic ``rho(z) = min(z**2, b**2)``.

    ``psi`` and ``psi_prime`` are the almost-everywhere derivatives; both are
    zero on ``|z| >= b``. ``kind`` is the extension point for smoothed
    variants and currently only accepts ``"clipped-quadratic"``.
    """

    b: float = DEFAULT_B
    kind: str = "clipped-quadratic"

    def __post_init__(self) -> None:
        if not (np.isfinite(self.b) and self.b > 0):
            raise ContractViolation(f"b must be positive and finite, got {self.b}")
        if self.kind != "clipped-quadratic":
            raise ContractViolation(f"unsupported rho kind {self.kind!r}")

    @property
    def kinks(self) -> tuple[float, float]:
        return (-self.b, self.b)

    def rho(self, z):
        z = np.clip(np.asarray(z, dtype=float), -self.b, self.b)
        return z * z

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) < self.b, 2.0 * z, 0.0)

    def psi_prime(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) < self.b, 2.0, 0.0)


@dataclass(frozen=True)
class HuberPsi:
    """Huber score ``psi_c(r) = clip(r, -c, c)``."""

    c: float = DEFAULT_HUBER_C

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ContractViolation(f"huber c must be positive, got {self.c}")

    @property
    def kinks(self) -> tuple[float, float]:
        return (-self.c, self.c)

    def __call__(self, r):
        return np.clip(np.asarray(r, dtype=float), -self.c, self.c)

    def derivative(self, r):
        return np.where(np.abs(np.asarray(r, dtype=float)) <= self.c, 1.0, 0.0)


def _finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ContractViolation("argument must be finite")
    return z


def _scalar_or_array(out, z):
    return float(out) if np.ndim(z) == 0 else out


def rho(loss: RhoFunction, z):
    z = _finite(z)
    return _scalar_or_array(loss.rho(z), z)


def psi(loss: RhoFunction, z):
    z = _finite(z)
    return _scalar_or_array(loss.psi(z), z)


def psi_prime(loss: RhoFunction, z):
    z = _finite(z)
    return _scalar_or_array(loss.psi_prime(z), z)


def huber(h: HuberPsi, r):
    r = _finite(r)
    return _scalar_or_array(h(r), r)
