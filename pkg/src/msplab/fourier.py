"""Sparse Boolean functions in the Fourier-Walsh basis.

Subsets of ``[P]`` are bitmasks: coordinate ``i`` (1-based in text, 0-based in
code) is bit ``i - 1``. A function is stored as a map from masks to nonzero
coefficients.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .numerics import MAX_TABULATED_P, RngSpec, UnsupportedSizeError, _check_p

ZERO_TOL = 1e-12
MAX_SYMMETRY_P = 8


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_from_indices(indices: Iterable[int], one_based: bool = True) -> int:
    mask = 0
    for i in indices:
        b = i - 1 if one_based else i
        if b < 0:
            raise ValueError(f"invalid coordinate index {i}")
        mask |= 1 << b
    return mask


def indices_from_mask(mask: int, one_based: bool = True) -> tuple[int, ...]:
    off = 1 if one_based else 0
    return tuple(b + off for b in range(mask.bit_length()) if (mask >> b) & 1)


def set_label(mask: int) -> str:
    """Column label such as ``c_1_2``; the empty set is ``c_0``."""
    idx = indices_from_mask(mask)
    return "c_" + ("_".join(map(str, idx)) if idx else "0")


def set_order_key(mask: int) -> tuple[int, tuple[int, ...]]:
    return popcount(mask), indices_from_mask(mask)


def fwht(values: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    ``out[s] = sum_x values[x] * (-1)^{|s & x|}``.
    """
    a = np.array(values, dtype=np.float64, copy=True)
    n = a.shape[-1]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(*lead, n // (2 * h), 2, h)
        left = a[..., 0, :].copy()
        right = a[..., 1, :]
        a[..., 0, :] = left + right
        a[..., 1, :] = left - right
        h *= 2
    return a.reshape(*lead, n)


@dataclass(frozen=True)
class FourierFunction:
    """``h(z) = sum_S alpha_S chi_S(z)`` on ``{-1,+1}^P``."""

    P: int
    coeffs: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.P < 0:
            raise ValueError("P must be nonnegative")
        full = (1 << self.P) - 1
        clean = {}
        for mask, val in self.coeffs.items():
            mask = int(mask)
            if mask < 0 or mask & ~full:
                raise ValueError(f"subset mask {mask} references a coordinate outside [P]")
            val = float(val)
            if not np.isfinite(val):
                raise ValueError("coefficients must be finite")
            if abs(val) > ZERO_TOL:
                clean[mask] = val
        object.__setattr__(self, "coeffs", dict(sorted(clean.items(), key=lambda kv: set_order_key(kv[0]))))

    @classmethod
    def from_sets(cls, P: int, terms: Iterable[tuple[Sequence[int], float]]) -> "FourierFunction":
        """Build from ``(1-based indices, alpha)`` pairs; repeated sets add up."""
        acc: dict[int, float] = {}
        for idx, val in terms:
            m = mask_from_indices(idx)
            acc[m] = acc.get(m, 0.0) + float(val)
        return cls(P, acc)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.coeffs)

    def structure(self) -> "SetStructure":
        return SetStructure(self.P, self.support)

    def dense(self) -> np.ndarray:
        """Coefficient vector of length ``2^P`` indexed by subset mask."""
        _check_p(self.P)
        v = np.zeros(1 << self.P)
        for m, a in self.coeffs.items():
            v[m] = a
        return v

    def table(self) -> np.ndarray:
        """Values on all ``2^P`` points in :func:`numerics.hypercube` order."""
        # chi_S(z_x) = (-1)^{|S & ~x|}, i.e. the Hadamard transform read backwards
        return fwht(self.dense())[::-1].copy()

    def norm2(self) -> float:
        return float(sum(a * a for a in self.coeffs.values()))

    def coefficient(self, mask: int) -> float:
        return self.coeffs.get(mask, 0.0)

    def permuted(self, perm: Sequence[int]) -> "FourierFunction":
        """Coefficients moved by ``S -> perm(S)`` (0-based images)."""
        return FourierFunction(len(perm), {apply_perm(m, perm): a for m, a in self.coeffs.items()})

    def embed(self, d: int) -> "FourierFunction":
        if d < self.P:
            raise ValueError("cannot embed into fewer coordinates")
        return FourierFunction(d, dict(self.coeffs))

    def __str__(self) -> str:
        return dumps(self).strip().replace("\n", "; ")


@dataclass(frozen=True)
class SetStructure:
    """A collection of distinct subsets of ``[P]``."""

    P: int
    sets: tuple[int, ...]

    def __post_init__(self) -> None:
        full = (1 << self.P) - 1
        sets = tuple(int(s) for s in self.sets)
        if len(set(sets)) != len(sets):
            raise ValueError("subsets in a structure must be distinct")
        for s in sets:
            if s < 0 or s & ~full:
                raise ValueError(f"subset mask {s} references a coordinate outside [P]")
        object.__setattr__(self, "sets", sets)

    @classmethod
    def from_indices(cls, P: int, sets: Iterable[Sequence[int]]) -> "SetStructure":
        return cls(P, tuple(mask_from_indices(s) for s in sets))

    def union(self) -> int:
        u = 0
        for s in self.sets:
            u |= s
        return u


@dataclass(frozen=True)
class MspResult:
    is_msp: bool
    leap: int
    ordering: tuple[int, ...] | None
    reachable: tuple[int, ...]
    blocked_coords: int
    stuck_risk_lower_bound: float | None

    def describe(self) -> str:
        if self.is_msp:
            chain = "<".join("{" + ",".join(map(str, indices_from_mask(s))) + "}" for s in self.ordering)
            return f"MSP: yes, leap {self.leap}, ordering {chain}"
        blocked = ",".join(map(str, indices_from_mask(self.blocked_coords)))
        return f"MSP: no, leap {self.leap}, blocked coordinates {{{blocked}}}"


def _greedy(sets: Sequence[int], leap: int) -> list[int]:
    """Emit sets whose fresh-coordinate count is at most ``leap``; returns the emitted order."""
    remaining = list(sets)
    union = 0
    out: list[int] = []
    progress = True
    while remaining and progress:
        progress = False
        for k, s in enumerate(remaining):
            if popcount(s & ~union) <= leap:
                out.append(s)
                union |= s
                del remaining[k]
                progress = True
                break
    return out


def reachable_closure(S: SetStructure) -> tuple[tuple[int, ...], int]:
    """Maximal sub-structure orderable with leap at most one, and its blocked coordinates.

    Blocked coordinates are those covered by ``S`` but by none of the reachable sets.
    """
    reach = tuple(_greedy(S.sets, 1))
    covered = 0
    for s in reach:
        covered |= s
    return reach, S.union() & ~covered


def is_msp(S: SetStructure, coeffs: FourierFunction | None = None) -> MspResult:
    """Greedy merged-staircase test with minimal leap.

    A set's number of fresh coordinates can only drop as the union grows, so at a
    fixed leap the greedy order succeeds whenever any order does.
    """
    leap = 0
    while True:
        order = _greedy(S.sets, leap)
        if len(order) == len(S.sets):
            break
        leap += 1
    reach, blocked = reachable_closure(S)
    stuck = None
    if coeffs is not None:
        reach_set = set(reach)
        stuck = float(sum(a * a for m, a in coeffs.coeffs.items() if m not in reach_set))
    msp = leap <= 1
    return MspResult(
        is_msp=msp,
        leap=leap,
        ordering=tuple(_greedy(S.sets, 1)) if msp else None,
        reachable=reach,
        blocked_coords=blocked,
        stuck_risk_lower_bound=stuck,
    )


def msp_bruteforce(S: SetStructure) -> bool:
    """Exhaustive check over all orderings; only for small structures."""
    if len(S.sets) > 9:
        raise UnsupportedSizeError("brute force is limited to 9 sets")
    for perm in itertools.permutations(S.sets):
        union = 0
        ok = True
        for s in perm:
            if popcount(s & ~union) > 1:
                ok = False
                break
            union |= s
        if ok:
            return True
    return False


def walsh_transform(table: Sequence[float] | np.ndarray) -> FourierFunction:
    """Fourier coefficients of a function tabulated on the hypercube."""
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or t.size & (t.size - 1):
        raise ValueError("table length must be a power of two")
    P = t.size.bit_length() - 1
    _check_p(P)
    alpha = fwht(t[::-1]) / t.size
    return FourierFunction(P, {m: float(a) for m, a in enumerate(alpha) if abs(a) > ZERO_TOL})


def evaluate(h: FourierFunction, z: Sequence[float] | np.ndarray) -> float | np.ndarray:
    """``h(z)`` for one sign vector or a ``(n, P)`` batch."""
    Z = np.asarray(z, dtype=np.float64)
    if Z.shape[-1] != h.P:
        raise ValueError(f"expected vectors of length {h.P}")
    if not np.all(np.abs(Z) == 1.0):
        raise ValueError("entries of z must be +1 or -1")
    batch = Z.reshape(-1, h.P)
    out = np.zeros(batch.shape[0])
    for m, a in h.coeffs.items():
        cols = [b for b in range(h.P) if (m >> b) & 1]
        out += a * (np.prod(batch[:, cols], axis=1) if cols else 1.0)
    return float(out[0]) if Z.ndim == 1 else out


def apply_perm(mask: int, perm: Sequence[int]) -> int:
    out = 0
    for b, img in enumerate(perm):
        if (mask >> b) & 1:
            out |= 1 << img
    return out


def detect_symmetries(h: FourierFunction, tol: float = ZERO_TOL) -> list[tuple[int, ...]]:
    """Non-identity coordinate permutations leaving every coefficient unchanged.

    Permutations are 0-based image tuples: ``perm[i]`` is where coordinate ``i`` goes.
    """
    if h.P > MAX_SYMMETRY_P:
        raise UnsupportedSizeError(f"symmetry search is limited to P <= {MAX_SYMMETRY_P}")
    ident = tuple(range(h.P))
    found = []
    for perm in itertools.permutations(range(h.P)):
        if perm == ident:
            continue
        if all(abs(h.coefficient(apply_perm(m, perm)) - a) <= tol for m, a in h.coeffs.items()):
            found.append(perm)
    return found


def random_msp_function(
    S: SetStructure, magnitude: tuple[float, float], seed: int | RngSpec
) -> FourierFunction:
    """Coefficients uniform on ``[-hi, -lo] U [lo, hi]`` for every set of ``S``."""
    lo, hi = magnitude
    if not 0 < lo <= hi:
        raise ValueError("magnitude range must satisfy 0 < lo <= hi")
    spec = seed if isinstance(seed, RngSpec) else RngSpec(int(seed))
    gen = spec.generator()
    mags = gen.uniform(lo, hi, size=len(S.sets))
    signs = np.where(gen.integers(0, 2, size=len(S.sets)) == 1, 1.0, -1.0)
    return FourierFunction(S.P, {s: float(v) for s, v in zip(S.sets, mags * signs)})


def random_structure(P: int, m: int, gen: np.random.Generator) -> SetStructure:
    """``m`` distinct nonempty subsets of ``[P]`` drawn uniformly."""
    full = 1 << P
    if m > full - 1:
        raise ValueError("not enough distinct nonempty subsets")
    picks = gen.choice(np.arange(1, full), size=m, replace=False)
    return SetStructure(P, tuple(int(p) for p in picks))


def dumps(h: FourierFunction) -> str:
    lines = [f"P={h.P}"]
    for m, a in h.coeffs.items():
        lines.append(f"S={','.join(map(str, indices_from_mask(m)))} alpha={a!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> FourierFunction:
    P = None
    terms: list[tuple[tuple[int, ...], float]] = []
    for raw in text.replace(";", "\n").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("P="):
            P = int(line[2:])
            continue
        fields = dict(part.split("=", 1) for part in line.split())
        if "S" not in fields or "alpha" not in fields:
            raise ValueError(f"cannot parse coefficient line {raw!r}")
        idx = tuple(int(i) for i in fields["S"].split(",") if i)
        terms.append((idx, float(fields["alpha"])))
    if P is None:
        raise ValueError("missing P=<int> header")
    if P > MAX_TABULATED_P:
        raise UnsupportedSizeError(f"P={P} exceeds the cap of {MAX_TABULATED_P}")
    return FourierFunction.from_sets(P, terms)


_TERM = re.compile(r"([+-])?\s*((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*((?:z\d+\s*\*?\s*)*)")


def from_string(spec: str, P: int | None = None) -> FourierFunction:
    """Parse a compact sum such as ``"z1 + z1z2 + 0.99 z2"``."""
    terms = []
    top = 0
    text = spec.strip()
    pos = 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos:
            raise ValueError(f"cannot parse {spec!r} at position {pos}")
        sign, num, mono = m.groups()
        coef = (-1.0 if sign == "-" else 1.0) * (float(num) if num else 1.0)
        idx = tuple(int(i) for i in re.findall(r"z(\d+)", mono or ""))
        if not num and not idx:
            raise ValueError(f"empty term in {spec!r}")
        top = max([top, *idx])
        terms.append((idx, coef))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return FourierFunction.from_sets(P if P is not None else top, terms)
