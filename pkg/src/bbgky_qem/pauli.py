"""Sparse Pauli strings and their exact algebra.

A string is stored as two parallel tuples, ascending 1-based ``sites`` and
``axes`` (1=X, 2=Y, 3=Z).  Coefficients produced by products and brackets
are Gaussian integers and are kept exact as ``(re, im)`` integer pairs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping


class Axis(IntEnum):
    X = 1
    Y = 2
    Z = 3


class Kind(IntEnum):
    """Bracket kind; the value is the ``delta`` offset (1 for commutators)."""

    ANTICOMMUTATOR = 0
    COMMUTATOR = 1


_LETTERS = {"X": 1, "Y": 2, "Z": 3}
_NAMES = {1: "X", 2: "Y", 3: "Z"}
_TOKEN = re.compile(r"([XYZxyz])\s*(\d+)")

# i**k for k mod 4 as Gaussian integers
_I_POW = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _levi_civita(a: int, b: int) -> int:
    """epsilon_{abc} for a != b with c the remaining axis."""
    return 1 if b == a % 3 + 1 else -1


def _third(a: int, b: int) -> int:
    return 6 - a - b


@dataclass(frozen=True, order=True)
class PauliString:
    """Canonical sparse Pauli string; the empty string is the identity."""

    sites: tuple[int, ...]
    axes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.sites) != len(self.axes):
            raise ValueError("sites and axes differ in length")
        for i, (s, a) in enumerate(zip(self.sites, self.axes)):
            if s < 1:
                raise ValueError(f"site {s} is not 1-based")
            if a not in (1, 2, 3):
                raise ValueError(f"axis {a} not in {{1, 2, 3}}")
            if i and self.sites[i - 1] >= s:
                raise ValueError("sites must be strictly ascending")

    @classmethod
    def from_map(cls, mapping: Mapping[int, int]) -> "PauliString":
        items = sorted((int(s), int(a)) for s, a in mapping.items())
        return cls(tuple(s for s, _ in items), tuple(a for _, a in items))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "PauliString":
        mapping: dict[int, int] = {}
        for s, a in pairs:
            if s in mapping:
                raise ValueError(f"site {s} appears twice")
            mapping[s] = a
        return cls.from_map(mapping)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Parse ``"X1 Y2 Z5"`` notation (tokens in any order)."""
        body = text.strip()
        pos = 0
        pairs = []
        while pos < len(body):
            if body[pos].isspace():
                pos += 1
                continue
            m = _TOKEN.match(body, pos)
            if m is None:
                raise ValueError(f"bad Pauli token at column {pos + 1}: {body[pos:]!r}")
            pairs.append((int(m.group(2)), _LETTERS[m.group(1).upper()]))
            pos = m.end()
        if not pairs:
            raise ValueError("empty Pauli string")
        return cls.from_pairs(pairs)

    @classmethod
    def identity(cls) -> "PauliString":
        return cls((), ())

    @property
    def length(self) -> int:
        return len(self.sites)

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def is_identity(self) -> bool:
        return not self.sites

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.sites, self.axes))

    def max_site(self) -> int:
        return self.sites[-1] if self.sites else 0

    def masks(self, nqubits: int) -> tuple[int, int]:
        """Symplectic ``(x, z)`` bit masks; site k lives on bit ``nqubits - k``."""
        x = z = 0
        for s, a in zip(self.sites, self.axes):
            bit = 1 << (nqubits - s)
            if a != 3:
                x |= bit
            if a != 1:
                z |= bit
        return x, z

    def __str__(self) -> str:
        if not self.sites:
            return "I"
        return " ".join(f"{_NAMES[a]}{s}" for s, a in zip(self.sites, self.axes))

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"


@dataclass(frozen=True)
class ScaledPauli:
    """``(re + i*im) * string`` with exact integer coefficient parts."""

    re: int
    im: int
    string: PauliString

    @classmethod
    def zero(cls) -> "ScaledPauli":
        return cls(0, 0, PauliString.identity())

    @property
    def coefficient(self) -> complex:
        return complex(self.re, self.im)

    @property
    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __neg__(self) -> "ScaledPauli":
        return ScaledPauli(-self.re, -self.im, self.string)


def _scaled(power_of_i: int, factor: int, string: PauliString) -> ScaledPauli:
    if factor == 0:
        return ScaledPauli.zero()
    re_, im_ = _I_POW[power_of_i % 4]
    return ScaledPauli(factor * re_, factor * im_, string)


def _merge(p: PauliString, q: PauliString):
    """Yield ``(site, a, b)`` over the union of supports; 0 marks absence."""
    i = j = 0
    ps, pa, qs, qa = p.sites, p.axes, q.sites, q.axes
    while i < len(ps) or j < len(qs):
        if j >= len(qs) or (i < len(ps) and ps[i] < qs[j]):
            yield ps[i], pa[i], 0
            i += 1
        elif i >= len(ps) or qs[j] < ps[i]:
            yield qs[j], 0, qa[j]
            j += 1
        else:
            yield ps[i], pa[i], qa[j]
            i += 1
            j += 1


def multiply(p: PauliString, q: PauliString) -> ScaledPauli:
    """Site-by-site product ``p q`` using XY = iZ and cyclic relations."""
    power = 0
    sites: list[int] = []
    axes: list[int] = []
    for site, a, b in _merge(p, q):
        if a == 0 or b == 0:
            sites.append(site)
            axes.append(a or b)
        elif a != b:
            sites.append(site)
            axes.append(_third(a, b))
            power += 1 if _levi_civita(a, b) == 1 else 3
    return _scaled(power, 1, PauliString(tuple(sites), tuple(axes)))


def difference_count(p: PauliString, q: PauliString) -> int:
    """Number of shared sites on which the two strings point along different axes."""
    return sum(1 for _, a, b in _merge(p, q) if a and b and a != b)


def f_factor(d: int, kind: Kind = Kind.COMMUTATOR) -> int:
    if d < 0:
        raise ValueError("difference count must be non-negative")
    e = d - int(kind)
    if e < 0 or e % 2:
        return 0
    return 2 if (e // 2) % 2 == 0 else -2


def bracket(p: PauliString, q: PauliString, kind: Kind = Kind.COMMUTATOR) -> ScaledPauli:
    """``[p, q]`` (commutator) or ``{p, q}`` from the closed-form factor.

    The result string keeps the unshared sites of both operands and, on the
    shared sites with differing axes, the third axis; shared sites with equal
    axes drop out.  The coefficient is ``i**kind * f * prod(epsilon)``.
    """
    d = 0
    sign = 1
    sites: list[int] = []
    axes: list[int] = []
    for site, a, b in _merge(p, q):
        if a == 0 or b == 0:
            sites.append(site)
            axes.append(a or b)
        elif a != b:
            d += 1
            sign *= _levi_civita(a, b)
            sites.append(site)
            axes.append(_third(a, b))
    f = f_factor(d, kind)
    if f == 0:
        return ScaledPauli.zero()
    return _scaled(int(kind), f * sign, PauliString(tuple(sites), tuple(axes)))


def commutator(p: PauliString, q: PauliString) -> ScaledPauli:
    return bracket(p, q, Kind.COMMUTATOR)


def anticommutator(p: PauliString, q: PauliString) -> ScaledPauli:
    return bracket(p, q, Kind.ANTICOMMUTATOR)


def length_bounds(len_a: int, len_b: int, kind: Kind = Kind.COMMUTATOR) -> tuple[int, int]:
    """Tightest bounds on the length of a nonzero bracket result."""
    if len_a < 1 or len_b < 1:
        raise ValueError("lengths must be >= 1")
    delta = int(kind)
    return abs(len_a - len_b) + delta, len_a + len_b - delta


def all_strings(nqubits: int, max_length: int | None = None):
    """Every non-identity string on ``nqubits`` sites (optionally length-capped)."""
    from itertools import combinations, product

    top = nqubits if max_length is None else min(max_length, nqubits)
    for n in range(1, top + 1):
        for sites in combinations(range(1, nqubits + 1), n):
            for axes in product((1, 2, 3), repeat=n):
                yield PauliString(sites, axes)
