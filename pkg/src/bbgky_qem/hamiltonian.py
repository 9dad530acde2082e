"""Time-dependent Pauli-sum Hamiltonians, the lattice Schwinger chain and its current."""
from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .pauli import PauliString

log = logging.getLogger(__name__)


class InactiveTermWarning(UserWarning):
    pass


class HamiltonianParseError(ValueError):
    def __init__(self, message: str, line: int, column: int, path: str = "<string>"):
        super().__init__(f"{path}:{line}:{column}: {message}")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# couplings


def _theta(mu5: float, t: float) -> float:
    return -2.0 * mu5 * t if t > 0 else 0.0


def _theta_dot(mu5: float, t: float) -> float:
    return -2.0 * mu5 if t > 0 else 0.0


@dataclass(frozen=True)
class TimeCoupling:
    """A real coupling h(t) described by a kind tag and parameters.

    Kinds: ``constant`` (value), ``polynomial`` (ascending coefficients),
    ``sin``/``cos`` (amp, freq, phase), ``tabulated`` (times, values; linear
    interpolation), ``schwinger-a_k`` (omega, m, mu5, stagger, scale),
    ``schwinger-thetadot`` (mu5, scale), ``schwinger-mass`` (m, mu5, scale)
    and ``sum`` (parts).
    """

    kind: str
    params: tuple = ()

    # -- constructors
    @classmethod
    def constant(cls, value: float) -> "TimeCoupling":
        return cls("constant", (float(value),))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "TimeCoupling":
        return cls("polynomial", tuple(float(c) for c in coeffs))

    @classmethod
    def trig(cls, fn: str, amp: float, freq: float, phase: float = 0.0) -> "TimeCoupling":
        if fn not in ("sin", "cos"):
            raise ValueError(fn)
        return cls(fn, (float(amp), float(freq), float(phase)))

    @classmethod
    def tabulated(cls, times: Sequence[float], values: Sequence[float]) -> "TimeCoupling":
        if len(times) != len(values) or len(times) < 1:
            raise ValueError("tabulated coupling needs matching non-empty grids")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("tabulated times must increase")
        return cls("tabulated", (tuple(map(float, times)), tuple(map(float, values))))

    def __call__(self, t: float) -> float:
        k, p = self.kind, self.params
        if k == "constant":
            return p[0]
        if k == "polynomial":
            acc = 0.0
            for c in reversed(p):
                acc = acc * t + c
            return acc
        if k == "sin":
            return p[0] * math.sin(p[1] * t + p[2])
        if k == "cos":
            return p[0] * math.cos(p[1] * t + p[2])
        if k == "tabulated":
            return float(np.interp(t, p[0], p[1]))
        if k == "schwinger-a_k":
            omega, m, mu5, stagger, scale = p
            return scale * 0.5 * (omega - stagger * 0.5 * m * math.sin(_theta(mu5, t)))
        if k == "schwinger-thetadot":
            mu5, scale = p
            return scale * (-_theta_dot(mu5, t) / 8.0)
        if k == "schwinger-mass":
            m, mu5, scale = p
            return scale * (-0.5 * m * math.cos(_theta(mu5, t)))
        if k == "sum":
            return sum(c(t) for c in p)
        raise ValueError(f"unknown coupling kind {k!r}")

    def is_active(self) -> bool:
        """Whether h(t) is nonzero somewhere on (0, T] for any T > 0.

        Decided from the closed form per kind rather than by sampling, except
        for ``sum`` couplings whose parts may cancel.
        """
        k, p = self.kind, self.params
        if k == "constant":
            return p[0] != 0.0
        if k == "polynomial":
            return any(c != 0.0 for c in p)
        if k in ("sin", "cos"):
            amp, freq, phase = p
            if amp == 0.0:
                return False
            if freq != 0.0:
                return True
            return (math.sin(phase) if k == "sin" else math.cos(phase)) != 0.0
        if k == "tabulated":
            return any(v != 0.0 for v in p[1])
        if k == "schwinger-a_k":
            omega, m, mu5, stagger, scale = p
            return scale != 0.0 and (omega != 0.0 or (m != 0.0 and mu5 != 0.0 and stagger != 0.0))
        if k == "schwinger-thetadot":
            return p[0] != 0.0 and p[1] != 0.0
        if k == "schwinger-mass":
            return p[0] != 0.0 and p[2] != 0.0
        if k == "sum":
            if not any(c.is_active() for c in p):
                return False
            grid = np.linspace(0.0, 10.0, 1025)
            return any(abs(self(t)) > 1e-14 for t in grid)
        raise ValueError(f"unknown coupling kind {k!r}")

    def is_constant(self) -> bool:
        k, p = self.kind, self.params
        if k == "constant":
            return True
        if k == "polynomial":
            return all(c == 0.0 for c in p[1:])
        if k in ("sin", "cos"):
            return p[0] == 0.0 or p[1] == 0.0
        if k == "schwinger-a_k":
            return p[1] == 0.0 or p[2] == 0.0 or p[3] == 0.0
        if k == "schwinger-thetadot":
            return p[0] == 0.0
        if k == "schwinger-mass":
            return p[0] == 0.0 or p[1] == 0.0
        if k == "sum":
            return all(c.is_constant() for c in p)
        return False

    def __add__(self, other: "TimeCoupling") -> "TimeCoupling":
        if self.kind == other.kind == "constant":
            return TimeCoupling.constant(self.params[0] + other.params[0])
        if self.kind == other.kind == "polynomial" or {self.kind, other.kind} == {"polynomial", "constant"}:
            a = list(self.params)
            b = list(other.params)
            n = max(len(a), len(b))
            a += [0.0] * (n - len(a))
            b += [0.0] * (n - len(b))
            return TimeCoupling.polynomial([x + y for x, y in zip(a, b)])
        parts = []
        for c in (self, other):
            parts.extend(c.params if c.kind == "sum" else (c,))
        return TimeCoupling("sum", tuple(parts))

    def spec(self) -> str:
        """Render in the line-oriented file syntax (only for file-expressible kinds)."""
        k, p = self.kind, self.params
        if k == "constant":
            return f"const {p[0]!r}"
        if k == "polynomial":
            return "poly " + " ".join(repr(c) for c in p)
        if k in ("sin", "cos"):
            return f"{k} amp={p[0]!r} freq={p[1]!r} phase={p[2]!r}"
        raise ValueError(f"coupling kind {k!r} has no file syntax")


# ---------------------------------------------------------------------------
# Hamiltonian / Observable


@dataclass(frozen=True)
class Hamiltonian:
    terms: tuple[tuple[PauliString, TimeCoupling], ...]
    nqubits: int

    def __post_init__(self) -> None:
        seen = set()
        for s, c in self.terms:
            if s.is_identity:
                raise ValueError("identity term in Hamiltonian")
            if s in seen:
                raise ValueError(f"duplicate term {s}")
            if s.max_site() > self.nqubits:
                raise ValueError(f"term {s} exceeds {self.nqubits} qubits")
            if not c.is_active():
                raise ValueError(f"inactive term {s}")
            seen.add(s)

    @classmethod
    def from_terms(cls, terms, nqubits: int | None = None, warn: bool = True) -> "Hamiltonian":
        """Merge duplicate strings, drop inactive ones, keep first-seen order."""
        merged: dict[PauliString, TimeCoupling] = {}
        for s, c in terms:
            if s in merged:
                log.info("merging duplicate term %s", s)
                merged[s] = merged[s] + c
            else:
                merged[s] = c
        kept = []
        for s, c in merged.items():
            if c.is_active():
                kept.append((s, c))
            elif warn:
                warnings.warn(f"dropping inactive term {s}", InactiveTermWarning, stacklevel=2)
        n = nqubits if nqubits is not None else max((s.max_site() for s, _ in kept), default=0)
        return cls(tuple(kept), n)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def strings(self) -> list[PauliString]:
        return [s for s, _ in self.terms]

    @property
    def maxlen(self) -> int:
        return max((len(s) for s, _ in self.terms), default=0)

    def coupling_at(self, index: int, t: float) -> float:
        if not 0 <= index < len(self.terms):
            raise IndexError(f"term index {index} out of range")
        return float(self.terms[index][1](t))

    def couplings_at(self, t: float) -> np.ndarray:
        return np.array([c(t) for _, c in self.terms])

    def coupling_table(self, times: Sequence[float]) -> np.ndarray:
        """``(n_terms, n_times)`` array of h_B(t)."""
        return np.array([[c(t) for t in times] for _, c in self.terms], dtype=float).reshape(
            len(self.terms), len(times)
        )

    def is_time_independent(self) -> bool:
        return all(c.is_constant() for _, c in self.terms)


@dataclass(frozen=True)
class Observable:
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self) -> None:
        strings = [s for _, s in self.terms]
        if len(set(strings)) != len(strings):
            raise ValueError("observable strings must be distinct")

    @property
    def strings(self) -> list[PauliString]:
        return [s for _, s in self.terms]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    def __len__(self) -> int:
        return len(self.terms)


# ---------------------------------------------------------------------------
# Schwinger model


def _check_even(nqubits: int, minimum: int = 2) -> None:
    if nqubits % 2 or nqubits < minimum:
        raise ValueError(f"nqubits must be even and >= {minimum}, got {nqubits}")


def _pair(i: int, a: int, j: int, b: int) -> PauliString:
    return PauliString((i, j), (a, b))


def _boundary(nqubits: int, a: int, b: int) -> PauliString:
    sites = tuple(range(1, nqubits + 1))
    axes = (a,) + (3,) * (nqubits - 2) + (b,)
    return PauliString(sites, axes)


def _bonds(nqubits: int):
    """Nearest-neighbour bonds in builder order: odd pairs, then even pairs.

    Each bond carries the index of its left site counted from zero, which
    fixes the staggering sign of the sin(theta) hopping correction.
    """
    half = nqubits // 2
    for k in range(half):
        yield 2 * k + 1, 2 * k + 2, 2 * k
    for k in range(1, half):
        yield 2 * k, 2 * k + 1, 2 * k - 1


def build_schwinger(nqubits: int, omega: float, m: float, mu5: float) -> Hamiltonian:
    """Spin-chain Schwinger Hamiltonian after the chiral quench theta = -2 mu5 t.

    Hopping strength a_n = (omega - (-1)^n (m/2) sin theta)/2 with n the
    zero-based left site of the bond (n = nqubits - 1 on the boundary bond).
    """
    _check_even(nqubits, 4)
    if omega <= 0:
        raise ValueError("omega must be positive")
    if m < 0:
        raise ValueError("mass must be non-negative")
    X, Y, Z = 1, 2, 3
    terms: list[tuple[PauliString, TimeCoupling]] = []

    def hop(n: int, scale: float = 1.0) -> TimeCoupling:
        return TimeCoupling("schwinger-a_k", (float(omega), float(m), float(mu5), float((-1) ** n), scale))

    def tdot(scale: float) -> TimeCoupling:
        return TimeCoupling("schwinger-thetadot", (float(mu5), scale))

    for i, j, n in _bonds(nqubits):
        terms.append((_pair(i, X, j, X), hop(n)))
        terms.append((_pair(i, Y, j, Y), hop(n)))
        terms.append((_pair(i, X, j, Y), tdot(1.0)))
        terms.append((_pair(i, Y, j, X), tdot(-1.0)))
    parity = float((-1) ** (nqubits // 2))
    terms.append((_boundary(nqubits, X, X), hop(nqubits - 1, parity)))
    terms.append((_boundary(nqubits, Y, Y), hop(nqubits - 1, parity)))
    terms.append((_boundary(nqubits, Y, X), tdot(-parity)))
    terms.append((_boundary(nqubits, X, Y), tdot(parity)))
    for k in range(1, nqubits + 1):
        terms.append((PauliString((k,), (Z,)), TimeCoupling("schwinger-mass", (float(m), float(mu5), float((-1) ** k)))))
    return Hamiltonian.from_terms(terms, nqubits, warn=False)


def build_current(nqubits: int, omega: float) -> Observable:
    """Spatially averaged electric current on the periodic chain."""
    _check_even(nqubits, 4)
    X, Y = 1, 2
    c = omega / (2.0 * nqubits)
    terms: list[tuple[float, PauliString]] = []
    for i, j, _ in _bonds(nqubits):
        terms.append((c, _pair(i, X, j, Y)))
        terms.append((-c, _pair(i, Y, j, X)))
    parity = (-1) ** (nqubits // 2)
    terms.append((parity * c, _boundary(nqubits, Y, X)))
    terms.append((-parity * c, _boundary(nqubits, X, Y)))
    return Observable(tuple(terms))


def term_count_bound(maxlen: int, nqubits: int) -> int:
    """Number of Pauli strings of length 1..maxlen on nqubits sites."""
    if not 1 <= maxlen <= nqubits:
        raise ValueError("need 1 <= maxlen <= nqubits")
    return sum(3**l * math.comb(nqubits, l) for l in range(1, maxlen + 1))


def loose_term_count_bound(maxlen: int, nqubits: int) -> int:
    return 3 ** (maxlen + 1) * maxlen * nqubits**maxlen


# ---------------------------------------------------------------------------
# file format

_KV = re.compile(r"(\w+)\s*=\s*(\S+)")


def _parse_float(tok: str, line: int, col: int, path: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise HamiltonianParseError(f"expected a number, got {tok!r}", line, col, path) from None


def _parse_coupling(text: str, line: int, col0: int, path: str) -> TimeCoupling:
    stripped = text.strip()
    if not stripped:
        raise HamiltonianParseError("missing coupling spec", line, col0, path)
    col = col0 + (len(text) - len(text.lstrip()))
    kind, _, rest = stripped.partition(" ")
    rest_col = col + len(kind) + 1
    kind = kind.lower()
    if kind == "const":
        toks = rest.split()
        if len(toks) != 1:
            raise HamiltonianParseError("const takes one value", line, rest_col, path)
        return TimeCoupling.constant(_parse_float(toks[0], line, rest_col, path))
    if kind == "poly":
        toks = rest.split()
        if not toks:
            raise HamiltonianParseError("poly needs coefficients", line, rest_col, path)
        return TimeCoupling.polynomial([_parse_float(t, line, rest_col, path) for t in toks])
    if kind in ("sin", "cos"):
        vals = {"amp": None, "freq": 0.0, "phase": 0.0}
        consumed = _KV.sub("", rest).strip()
        if consumed:
            raise HamiltonianParseError(f"unexpected text {consumed!r}", line, rest_col, path)
        for m in _KV.finditer(rest):
            key = m.group(1).lower()
            if key not in vals:
                raise HamiltonianParseError(f"unknown key {key!r}", line, rest_col + m.start(), path)
            vals[key] = _parse_float(m.group(2), line, rest_col + m.start(2), path)
        if vals["amp"] is None:
            raise HamiltonianParseError("missing amp=", line, rest_col, path)
        return TimeCoupling.trig(kind, vals["amp"], vals["freq"], vals["phase"])
    raise HamiltonianParseError(f"unknown coupling kind {kind!r}", line, col, path)


def _parse_lines(text: str, path: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if ":" not in body:
            raise HamiltonianParseError("expected '<pauli string> : <coupling>'", lineno, 1, path)
        left, right = body.split(":", 1)
        try:
            string = PauliString.parse(left)
        except ValueError as exc:
            raise HamiltonianParseError(str(exc), lineno, 1, path) from None
        yield lineno, string, _parse_coupling(right, lineno, len(left) + 2, path)


def parse_hamiltonian(text: str, nqubits: int | None = None, path: str = "<string>") -> Hamiltonian:
    terms = [(s, c) for _, s, c in _parse_lines(text, path)]
    return Hamiltonian.from_terms(terms, nqubits)


def load_hamiltonian(path: str | Path, nqubits: int | None = None) -> Hamiltonian:
    p = Path(path)
    return parse_hamiltonian(p.read_text(), nqubits, str(p))


def parse_observable(text: str, path: str = "<string>") -> Observable:
    coeffs: dict[PauliString, float] = {}
    for lineno, s, c in _parse_lines(text, path):
        if c.kind != "constant":
            raise HamiltonianParseError("observable coefficients must be const", lineno, 1, path)
        coeffs[s] = coeffs.get(s, 0.0) + c.params[0]
    return Observable(tuple((v, s) for s, v in coeffs.items() if v != 0.0))


def load_observable(path: str | Path) -> Observable:
    p = Path(path)
    return parse_observable(p.read_text(), str(p))


def dump_hamiltonian(h: Hamiltonian) -> str:
    return "".join(f"{s} : {c.spec()}\n" for s, c in h.terms)


def dump_observable(obs: Observable) -> str:
    return "".join(f"{s} : const {c!r}\n" for c, s in obs.terms)
