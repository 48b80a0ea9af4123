"""Activation functions with derivatives and Taylor coefficients at zero."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

KINDS = ("shifted-sigmoid", "truncated-power", "polynomial", "tanh", "perturbed")


def _poly_taylor(m: Sequence[float], x: np.ndarray, deriv: int = 0) -> np.ndarray:
    """``sum_r m_r x^{r-deriv} / (r-deriv)!`` evaluated by Horner's rule."""
    coefs = [m[r] / math.factorial(r - deriv) for r in range(deriv, len(m))]
    out = np.zeros_like(x, dtype=np.float64)
    for c in reversed(coefs):
        out = out * x + c
    return out


def _derivatives_via_poly(value: float, step: np.ndarray, order: int) -> list[float]:
    """Derivatives of ``y`` where ``dy/dx = step(y)`` as a polynomial in ``y``.

    Returns ``[y, y', ..., y^(order)]`` evaluated at the given value of ``y``.
    """
    out = []
    q = np.array([0.0, 1.0])
    for _ in range(order + 1):
        out.append(float(npoly.polyval(value, q)))
        q = npoly.polymul(npoly.polyder(q), step)
    return out


@dataclass
class Activation:
    """An activation ``sigma`` with ``sigma'`` and ``m_r = sigma^(r)(0)``.

    ``kind`` selects the family:

    * ``shifted-sigmoid``: ``1 / (1 + exp(-x + shift))``
    * ``tanh``: ``tanh(x)``
    * ``polynomial``: ``sum_r m_r x^r / r!`` with ``coeffs = (m_0, ..., m_L)``
    * ``truncated-power``: ``(1 + x)^L`` on ``(-1, 1)``, constant outside
    * ``perturbed``: ``base(x) + sum_r rho_r x^r / r!``
    """

    kind: str
    shift: float = 0.0
    exponent: int = 8
    coeffs: tuple[float, ...] = ()
    rho: tuple[float, ...] = ()
    base: "Activation | None" = None
    out_of_range: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "polynomial" and not self.coeffs:
            raise ValueError("polynomial activation needs Taylor coefficients")
        if self.kind == "perturbed" and self.base is None:
            raise ValueError("perturbed activation needs a base activation")
        if self.kind == "truncated-power" and self.exponent < 1:
            raise ValueError("truncated-power exponent must be positive")
        self.coeffs = tuple(float(c) for c in self.coeffs)
        self.rho = tuple(float(r) for r in self.rho)

    # constructors

    @classmethod
    def shifted_sigmoid(cls, shift: float = 0.5) -> "Activation":
        return cls("shifted-sigmoid", shift=float(shift))

    @classmethod
    def tanh(cls) -> "Activation":
        return cls("tanh")

    @classmethod
    def polynomial(cls, m: Sequence[float]) -> "Activation":
        return cls("polynomial", coeffs=tuple(m))

    @classmethod
    def truncated_power(cls, L: int = 8) -> "Activation":
        return cls("truncated-power", exponent=int(L))

    def perturb(self, rho: Sequence[float]) -> "Activation":
        return Activation("perturbed", rho=tuple(rho), base=self)

    def perturb_random(self, tau: float, R: int, gen: np.random.Generator) -> "Activation":
        """Random perturbation with ``rho_r ~ Unif[-tau, tau]`` for ``r <= R``."""
        return self.perturb(gen.uniform(-tau, tau, size=R + 1))

    # evaluation

    def __call__(self, x):
        return self.sigma(x)

    def sigma(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k == "shifted-sigmoid":
            return 0.5 * (1.0 + np.tanh(0.5 * (x - self.shift)))
        if k == "tanh":
            return np.tanh(x)
        if k == "polynomial":
            return _poly_taylor(self.coeffs, x)
        if k == "truncated-power":
            self._count(x)
            return (1.0 + np.clip(x, -1.0, 1.0)) ** self.exponent
        return self.base.sigma(x) + _poly_taylor(self.rho, x)

    def dsigma(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k == "shifted-sigmoid":
            s = 0.5 * (1.0 + np.tanh(0.5 * (x - self.shift)))
            return s * (1.0 - s)
        if k == "tanh":
            return 1.0 - np.tanh(x) ** 2
        if k == "polynomial":
            return _poly_taylor(self.coeffs, x, 1)
        if k == "truncated-power":
            inside = np.abs(x) < 1.0
            L = self.exponent
            return np.where(inside, L * (1.0 + np.clip(x, -1.0, 1.0)) ** (L - 1), 0.0)
        return self.base.dsigma(x) + _poly_taylor(self.rho, x, 1)

    def _count(self, x: np.ndarray) -> None:
        self.out_of_range += int(np.count_nonzero(np.abs(x) >= 1.0))

    def taylor_at_zero(self, r: int) -> float:
        """``m_r = sigma^(r)(0)``."""
        return self.taylor(r)[r]

    def taylor(self, order: int) -> list[float]:
        """``[m_0, ..., m_order]``."""
        k = self.kind
        if k == "shifted-sigmoid":
            s0 = 1.0 / (1.0 + math.exp(self.shift))
            # s' = s (1 - s)
            return _derivatives_via_poly(s0, np.array([0.0, 1.0, -1.0]), order)
        if k == "tanh":
            # t' = 1 - t^2
            return _derivatives_via_poly(0.0, np.array([1.0, 0.0, -1.0]), order)
        if k == "polynomial":
            return [self.coeffs[r] if r < len(self.coeffs) else 0.0 for r in range(order + 1)]
        if k == "truncated-power":
            L = self.exponent
            return [math.perm(L, r) if r <= L else 0.0 for r in range(order + 1)]
        base = self.base.taylor(order)
        return [b + (self.rho[r] if r < len(self.rho) else 0.0) for r, b in enumerate(base)]

    def ident(self) -> str:
        k = self.kind
        if k == "shifted-sigmoid":
            return f"shifted-sigmoid(shift={self.shift!r})"
        if k == "tanh":
            return "tanh"
        if k == "polynomial":
            return "polynomial(" + ",".join(repr(c) for c in self.coeffs) + ")"
        if k == "truncated-power":
            return f"truncated-power(L={self.exponent})"
        return f"perturbed({self.base.ident()};R={len(self.rho) - 1})"

    def is_polynomial_on(self, bound: float) -> bool:
        """True when ``sigma`` equals its Taylor polynomial on ``[-bound, bound]``."""
        if self.kind == "polynomial":
            return True
        if self.kind == "truncated-power":
            return bound < 1.0
        if self.kind == "perturbed":
            return self.base.is_polynomial_on(bound)
        return False

    def poly_degree(self) -> int:
        if self.kind == "polynomial":
            return len(self.coeffs) - 1
        if self.kind == "truncated-power":
            return self.exponent
        if self.kind == "perturbed":
            return max(self.base.poly_degree(), len(self.rho) - 1)
        raise ValueError(f"{self.kind} is not a polynomial activation")
