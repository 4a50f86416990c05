"""Sparse multivariate polynomials over the complex numbers.

A polynomial is a map from exponent tuples to coefficients with no zero
coefficients stored.  Coefficients may be int, float, complex or Fraction:
the moment builders construct everything with exact rational arithmetic and
the coefficients are converted to complex128 only when a system is compiled
for the numeric kernels.  Term order is graded lexicographic everywhere so
evaluation and printing are reproducible run to run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

Exponents = tuple  # tuple[int, ...], one entry per variable


def _grlex_key(exps):
    return (sum(exps), exps)


class SparsePoly:
    """Sparse polynomial keyed by exponent vectors."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms=None):
        self.nvars = int(nvars)
        clean = {}
        if terms:
            for exps, c in terms.items():
                if len(exps) != self.nvars:
                    raise ValueError(
                        f"exponent vector {exps} has length {len(exps)}, expected {self.nvars}"
                    )
                if any(e < 0 for e in exps):
                    raise ValueError(f"negative exponent in {exps}")
                if c != 0:
                    clean[tuple(int(e) for e in exps)] = c
        self.terms = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, nvars: int, c) -> "SparsePoly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, j: int) -> "SparsePoly":
        if not 0 <= j < nvars:
            raise ValueError(f"variable index {j} out of range for {nvars} variables")
        e = [0] * nvars
        e[j] = 1
        return cls(nvars, {tuple(e): 1})

    # -- ring operations ----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, SparsePoly):
            if other.nvars != self.nvars:
                raise ValueError("mixing polynomials with different variable counts")
            return other
        if isinstance(other, (int, float, complex, Fraction)):
            return SparsePoly.constant(self.nvars, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return SparsePoly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return SparsePoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, Fraction)):
            return SparsePoly(self.nvars, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                e = tuple(a + b for a, b in zip(ea, eb))
                terms[e] = terms.get(e, 0) + ca * cb
        return SparsePoly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = SparsePoly.constant(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, (int, float, complex, Fraction)):
            other = SparsePoly.constant(self.nvars, other)
        if not isinstance(other, SparsePoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    __hash__ = None

    # -- queries --------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial reports 0."""
        return max((sum(e) for e in self.terms), default=0)

    def support(self) -> set:
        return set(self.terms)

    def sorted_terms(self):
        """Terms in ascending graded-lex order (the canonical order)."""
        return sorted(self.terms.items(), key=lambda kv: _grlex_key(kv[0]))

    def diff(self, j: int) -> "SparsePoly":
        terms = {}
        for e, c in self.terms.items():
            if e[j] > 0:
                e2 = list(e)
                e2[j] -= 1
                terms[tuple(e2)] = c * e[j]
        return SparsePoly(self.nvars, terms)

    def map_coeffs(self, fn) -> "SparsePoly":
        return SparsePoly(self.nvars, {e: fn(c) for e, c in self.terms.items()})

    def evaluate(self, x) -> complex:
        """Evaluate at a point, summing terms in graded-lex order with
        exactly rounded (compensated) accumulation."""
        if len(x) != self.nvars:
            raise ValueError(f"point has length {len(x)}, polynomial has {self.nvars} variables")
        if not self.terms:
            return 0j
        maxdeg = [0] * self.nvars
        for e in self.terms:
            for j, ej in enumerate(e):
                if ej > maxdeg[j]:
                    maxdeg[j] = ej
        pows = []
        for j in range(self.nvars):
            row = [1 + 0j]
            xj = complex(x[j])
            for _ in range(maxdeg[j]):
                row.append(row[-1] * xj)
            pows.append(row)
        vals = []
        for e, c in self.sorted_terms():
            v = complex(c)
            for j, ej in enumerate(e):
                if ej:
                    v *= pows[j][ej]
            vals.append(v)
        return complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))

    def format(self, var_names=None) -> str:
        if not self.terms:
            return "0"
        if var_names is None:
            var_names = [f"x{j + 1}" for j in range(self.nvars)]
        parts = []
        for e, c in reversed(self.sorted_terms()):
            mono = "*".join(
                f"{var_names[j]}^{ej}" if ej > 1 else var_names[j]
                for j, ej in enumerate(e)
                if ej
            )
            if isinstance(c, complex) and c.imag == 0:
                c = c.real
            cs = str(c) if not isinstance(c, float) else repr(c)
            parts.append(f"({cs})*{mono}" if mono else f"({cs})")
        return " + ".join(parts)

    def __repr__(self):
        return f"SparsePoly({self.nvars}, {self.format()})"


@dataclass
class CompiledSystem:
    """Flat-array form of a square (or rectangular) system plus its Jacobian,
    consumed by the numeric kernels.  jac arrays hold the npolys*nvars
    derivative polynomials in row-major order."""

    nvars: int
    npolys: int
    offsets: np.ndarray
    exps: np.ndarray
    coeffs: np.ndarray
    jac_offsets: np.ndarray
    jac_exps: np.ndarray
    jac_coeffs: np.ndarray
    max_deg: int

    @property
    def args(self):
        return (
            self.nvars,
            self.npolys,
            self.offsets,
            self.exps,
            self.coeffs,
            self.jac_offsets,
            self.jac_exps,
            self.jac_coeffs,
            self.max_deg,
        )


def _pack(polys, nvars):
    offsets = [0]
    exp_rows = []
    coeffs = []
    for p in polys:
        for e, c in p.sorted_terms():
            exp_rows.append(e)
            coeffs.append(complex(c))
        offsets.append(len(coeffs))
    if exp_rows:
        exps = np.array(exp_rows, dtype=np.int32)
    else:
        # keep a dummy row so pointer extraction is valid; never indexed
        exps = np.zeros((1, nvars), dtype=np.int32)
        coeffs = [0j]
    return (
        np.array(offsets, dtype=np.int32),
        np.ascontiguousarray(exps),
        np.array(coeffs, dtype=np.complex128),
    )


class PolySystem:
    """A tuple of sparse polynomials sharing one variable space."""

    def __init__(self, polys, var_names=None):
        polys = list(polys)
        if not polys:
            raise ValueError("empty system")
        nvars = polys[0].nvars
        if any(p.nvars != nvars for p in polys):
            raise ValueError("all polynomials must share the variable count")
        self.polys = polys
        self.nvars = nvars
        self.var_names = list(var_names) if var_names else None
        self._jac_polys = None
        self._compiled = None

    def __len__(self):
        return len(self.polys)

    @property
    def is_square(self) -> bool:
        return len(self.polys) == self.nvars

    def degrees(self):
        return [p.degree() for p in self.polys]

    def evaluate(self, x) -> np.ndarray:
        return np.array([p.evaluate(x) for p in self.polys], dtype=np.complex128)

    def jacobian_polys(self):
        """Symbolic partial derivatives, computed once and cached."""
        if self._jac_polys is None:
            self._jac_polys = [
                [p.diff(j) for j in range(self.nvars)] for p in self.polys
            ]
        return self._jac_polys

    def jacobian(self, x) -> np.ndarray:
        if len(x) != self.nvars:
            raise ValueError(f"point has length {len(x)}, system has {self.nvars} variables")
        jp = self.jacobian_polys()
        out = np.empty((len(self.polys), self.nvars), dtype=np.complex128)
        for i, row in enumerate(jp):
            for j, p in enumerate(row):
                out[i, j] = p.evaluate(x)
        return out

    def compile(self) -> CompiledSystem:
        if self._compiled is None:
            offs, exps, coefs = _pack(self.polys, self.nvars)
            flat_jac = [p for row in self.jacobian_polys() for p in row]
            joffs, jexps, jcoefs = _pack(flat_jac, self.nvars)
            max_deg = int(max(exps.max(initial=0), jexps.max(initial=0)))
            self._compiled = CompiledSystem(
                self.nvars,
                len(self.polys),
                offs,
                exps,
                coefs,
                joffs,
                jexps,
                jcoefs,
                max_deg,
            )
        return self._compiled

    def dump(self) -> str:
        names = self.var_names or [f"x{j + 1}" for j in range(self.nvars)]
        lines = [f"f{i + 1} = {p.format(names)}" for i, p in enumerate(self.polys)]
        return "\n".join(lines)

    def __repr__(self):
        return f"PolySystem({len(self.polys)} eqs, {self.nvars} vars)"


def bezout_bound(system: PolySystem) -> int:
    """Product of the total degrees of the equations."""
    out = 1
    for d in system.degrees():
        out *= d
    return out


@dataclass(frozen=True)
class LineSegmentSupport:
    """Origin-rooted integer line segments, one per variable."""

    vertices: tuple = field(default_factory=tuple)

    def __init__(self, vertices):
        object.__setattr__(self, "vertices", tuple(tuple(int(c) for c in v) for v in vertices))


def _int_det(rows) -> int:
    """Exact integer determinant (fraction-free Gaussian elimination)."""
    n = len(rows)
    m = [list(r) for r in rows]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def segment_mixed_volume(support: LineSegmentSupport) -> int:
    """Mixed volume of origin-rooted segments: |det| of the vertex matrix."""
    verts = support.vertices
    n = len(verts)
    if n == 0:
        raise ValueError("no segments")
    if any(len(v) != n for v in verts):
        raise ValueError(f"need {n} segments in {n} variables, got lengths {[len(v) for v in verts]}")
    cols = [[verts[j][i] for j in range(n)] for i in range(n)]
    return abs(_int_det(cols))
