"""Exact certificates for the two pointwise lemmas on E^2_n.

Conditions of the form ``sum a_ijkl v_i q_j v_k q_l = 0`` for a polynomially
parametrized family of ``(v, q)`` are expanded into polynomials in the
parameters whose coefficients are linear forms in the canonical components
of ``a``.  Requiring every coefficient to vanish gives a finite rational
linear system, which is then reduced exactly.

Everything here uses :class:`fractions.Fraction`; nothing is floating point.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .tensor_core import TensorShape, canonical_index

__all__ = [
    "LinearForm",
    "Poly",
    "ParamPolynomial",
    "RationalConstraintSystem",
    "RREFResult",
    "contraction_polynomial",
    "build_no_pw_kernel_system",
    "build_no_pw_kernel_system_paper3d",
    "build_reduction_system",
    "build_reduction_system_paper3d",
    "rref_and_nullspace",
    "verify_no_pw_kernel",
    "verify_reduction",
]


class LinearForm(dict):
    """Sparse map ``canonical component -> Fraction``; zeros are never stored."""

    def __init__(self, items: Mapping[int, Fraction] | Iterable = ()):
        super().__init__()
        for k, v in dict(items).items():
            if v:
                self[k] = Fraction(v)

    def __add__(self, other: "LinearForm") -> "LinearForm":
        out = LinearForm(self)
        for k, v in other.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return out

    def scaled(self, s) -> "LinearForm":
        return LinearForm({k: v * s for k, v in self.items()}) if s else LinearForm()

    def dense(self, ncols: int) -> list[Fraction]:
        row = [Fraction(0)] * ncols
        for k, v in self.items():
            row[k] = v
        return row


class Poly:
    """Scalar polynomial with rational coefficients, ``{exponent tuple: Fraction}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], Fraction] | None = None):
        self.nvars = nvars
        self.terms = {e: Fraction(c) for e, c in (terms or {}).items() if c}

    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: Fraction(c)})

    @classmethod
    def var(cls, nvars: int, i: int) -> "Poly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    def __add__(self, other):
        other = other if isinstance(other, Poly) else Poly.const(self.nvars, other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -Fraction(other))

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __call__(self, point: Sequence) -> Fraction:
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                term *= Fraction(x) ** k
            total += term
        return total


class ParamPolynomial:
    """Polynomial in the parameters with :class:`LinearForm` coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], LinearForm] | None = None):
        self.nvars = nvars
        self.terms = {e: lf for e, lf in (terms or {}).items() if lf}

    @classmethod
    def from_scalar(cls, poly: Poly, form: LinearForm) -> "ParamPolynomial":
        return cls(poly.nvars, {e: form.scaled(c) for e, c in poly.terms.items()})

    def __add__(self, other: "ParamPolynomial") -> "ParamPolynomial":
        out = dict(self.terms)
        for e, lf in other.terms.items():
            out[e] = out[e] + lf if e in out else lf
        return ParamPolynomial(self.nvars, out)

    def __mul__(self, poly: Poly) -> "ParamPolynomial":
        out: dict = {}
        for e1, lf in self.terms.items():
            for e2, c in poly.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out[e] + lf.scaled(c) if e in out else lf.scaled(c)
        return ParamPolynomial(self.nvars, out)

    def monomials(self) -> list[tuple[int, ...]]:
        """Monomials in canonical order: total degree, then lexicographic."""
        return sorted(self.terms, key=lambda e: (sum(e), e))

    def coefficient_rows(self) -> list[tuple[tuple[int, ...], LinearForm]]:
        return [(e, self.terms[e]) for e in self.monomials()]

    def evaluate(self, point: Sequence) -> LinearForm:
        total = LinearForm()
        for e, lf in self.terms.items():
            s = Fraction(1)
            for x, k in zip(point, e):
                s *= Fraction(x) ** k
            total = total + lf.scaled(s)
        return total


def contraction_polynomial(n: int, v: Sequence[Poly], q: Sequence[Poly]) -> ParamPolynomial:
    """``sum_{ijkl} a_ijkl v_i q_j v_k q_l`` as a polynomial with linear-form coefficients."""
    shape = TensorShape(n, 2)
    nvars = v[0].nvars
    vq = [[v[i] * q[j] for j in range(n)] for i in range(n)]
    cache: dict = {}
    total = ParamPolynomial(nvars)
    for c in range(shape.dim):
        acc = Poly(nvars)
        for i, j, k, l in shape.orbit(c):
            key = tuple(sorted(((i, j), (k, l))))
            if key not in cache:
                (a, b), (cc, d) = key
                cache[key] = vq[a][b] * vq[cc][d]
            acc = acc + cache[key]
        total = total + ParamPolynomial.from_scalar(acc, LinearForm({c: 1}))
    return total


@dataclass
class RationalConstraintSystem:
    """Rows of exact linear constraints over the canonical components of E^2_n."""

    ncols: int
    rows: list[LinearForm] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def add(self, form: LinearForm, tag: str):
        self.rows.append(LinearForm(form))
        self.provenance.append(tag)

    def extend_from(self, poly: ParamPolynomial, tag: str):
        for e, lf in poly.coefficient_rows():
            self.add(lf, f"{tag}:{''.join(map(str, e))}")

    def subsystem(self, prefix: str) -> "RationalConstraintSystem":
        out = RationalConstraintSystem(self.ncols)
        for r, t in zip(self.rows, self.provenance):
            if t.startswith(prefix):
                out.add(r, t)
        return out

    def without(self, tag: str) -> "RationalConstraintSystem":
        out = RationalConstraintSystem(self.ncols)
        for r, t in zip(self.rows, self.provenance):
            if t != tag:
                out.add(r, t)
        return out

    def __add__(self, other: "RationalConstraintSystem") -> "RationalConstraintSystem":
        if other.ncols != self.ncols:
            raise ValueError("column count mismatch")
        return RationalConstraintSystem(self.ncols, self.rows + other.rows,
                                        self.provenance + other.provenance)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def dense(self) -> list[list[Fraction]]:
        return [r.dense(self.ncols) for r in self.rows]


@dataclass
class RREFResult:
    rank: int
    nullity: int
    pivots: list[int]
    rref: list[list[Fraction]]
    nullspace: list[list[Fraction]]

    @property
    def fingerprint(self) -> str:
        text = json.dumps([[str(x) for x in row] for row in self.rref])
        return hashlib.sha256(text.encode()).hexdigest()


def _size(x: Fraction) -> int:
    return abs(x.numerator).bit_length() + x.denominator.bit_length()


def rref_and_nullspace(system: RationalConstraintSystem | Sequence[Sequence], ncols: int | None = None) -> RREFResult:
    """Exact reduced row echelon form, rank and nullspace basis.

    Accepts a :class:`RationalConstraintSystem` or a dense list of rows.
    Elimination works on sparse rows; at each column the pivot is the
    candidate entry with the smallest numerator/denominator bit size.
    """
    if isinstance(system, RationalConstraintSystem):
        ncols = system.ncols
        rows = [dict(r) for r in system.rows]
    else:
        if ncols is None:
            ncols = len(system[0]) if len(system) else 0
        rows = [{j: Fraction(x) for j, x in enumerate(r) if x} for r in system]
    rows = [r for r in rows if r]

    pivot_rows: dict[int, dict] = {}
    for col in range(ncols):
        cand = [k for k, r in enumerate(rows) if col in r]
        if not cand:
            continue
        best = min(cand, key=lambda k: (_size(rows[k][col]), k))
        prow = rows.pop(best)
        inv = 1 / prow[col]
        prow = {j: x * inv for j, x in prow.items()}
        for r in itertools.chain(rows, pivot_rows.values()):
            f = r.get(col)
            if f:
                for j, x in prow.items():
                    y = r.get(j, 0) - f * x
                    if y:
                        r[j] = y
                    else:
                        r.pop(j, None)
        rows = [r for r in rows if r]
        pivot_rows[col] = prow

    pivots = sorted(pivot_rows)
    rref = [[pivot_rows[c].get(j, Fraction(0)) for j in range(ncols)] for c in pivots]
    free = [j for j in range(ncols) if j not in pivot_rows]
    nullspace = []
    for fcol in free:
        x = [Fraction(0)] * ncols
        x[fcol] = Fraction(1)
        for c in pivots:
            x[c] = -pivot_rows[c].get(fcol, Fraction(0))
        nullspace.append(x)
    return RREFResult(len(pivots), ncols - len(pivots), pivots, rref, nullspace)


# --------------------------------------------------------------------------
# parametrizations


def _vars(nvars):
    return [Poly.var(nvars, i) for i in range(nvars)]


def build_no_pw_kernel_system(n: int, branches: Sequence[str] = ("parallel", "orthogonal")) -> RationalConstraintSystem:
    """Constraints of the no-pointwise-kernel lemma in dimension ``1 <= n <= 4``.

    ``v = (x_1, ..., x_{n-1}, 1)``.  The parallel branch uses ``q = v``; the
    orthogonal branch uses ``q = (w, -w.x)`` with ``w`` in R^(n-1) free,
    which parametrizes all of ``v^perp``.
    """
    if not 1 <= n <= 4:
        raise ValueError(f"no-pw-kernel system is built for 1 <= n <= 4, got {n}")
    k = n - 1
    nvars = 2 * k
    z = _vars(nvars)
    x, w = z[:k], z[k:]
    one = Poly.const(nvars, 1)
    v = x + [one]
    system = RationalConstraintSystem(TensorShape(n, 2).dim)
    if "parallel" in branches:
        system.extend_from(contraction_polynomial(n, v, v), "parallel")
    if "orthogonal" in branches and k > 0:
        wx = Poly(nvars)
        for a in range(k):
            wx = wx + w[a] * x[a]
        q = w + [-wx]
        system.extend_from(contraction_polynomial(n, v, q), "orthogonal")
    return system


def build_no_pw_kernel_system_paper3d() -> RationalConstraintSystem:
    """n = 3 with ``v = (x, y, 1)`` and ``q = (y, -x + r, -r y)``."""
    x, y, r = _vars(3)
    one = Poly.const(3, 1)
    v = [x, y, one]
    system = RationalConstraintSystem(TensorShape(3, 2).dim)
    system.extend_from(contraction_polynomial(3, v, v), "parallel")
    system.extend_from(contraction_polynomial(3, v, [y, -x + r, -(r * y)]), "orthogonal")
    return system


def _hypothesis_rows(n: int, system: RationalConstraintSystem):
    shape = TensorShape(n, 2)
    for i in range(n):
        for j in range(i, n):
            system.add(LinearForm({canonical_index(shape, (0, 0, i, j)): 1}), f"hyp:a11{i + 1}{j + 1}")


def _reduction_rhs(n: int) -> RationalConstraintSystem:
    shape = TensorShape(n, 2)
    rhs = RationalConstraintSystem(shape.dim)
    _hypothesis_rows(n, rhs)
    rest = range(1, n)
    seen = set()

    def zero(idx, tag):
        c = canonical_index(shape, idx)
        if (tag.split(":")[0], c) not in seen:
            seen.add((tag.split(":")[0], c))
            rhs.add(LinearForm({c: 1}), tag)

    for i, j, k, l in itertools.product(rest, repeat=4):
        zero((i, j, k, l), f"zero:a{i + 1}{j + 1}{k + 1}{l + 1}")
    for i, j in itertools.product(rest, repeat=2):
        zero((0, i, 0, j), f"mixed:a1{i + 1}1{j + 1}")
    for i, j, k in itertools.product(rest, repeat=3):
        if j != k:
            zero((0, i, j, k), f"offdiag:a1{i + 1}{j + 1}{k + 1}")
    for i in rest:
        base = canonical_index(shape, (0, i, 1, 1))
        for k in range(2, n):
            other = canonical_index(shape, (0, i, k, k))
            rhs.add(LinearForm({base: 1}) + LinearForm({other: -1}),
                    f"chain:a1{i + 1}22=a1{i + 1}{k + 1}{k + 1}")
    return rhs


def build_reduction_system(n: int, drop: str | None = None) -> tuple[RationalConstraintSystem, RationalConstraintSystem]:
    """Both sides of the reduction lemma for ``p = e_1`` and ``2 <= n <= 5``.

    LHS: ``a_11ij = 0`` plus the coefficient rows of the ``q = v`` and
    ``q perp v`` conditions with ``v = (0, u, 1)``, ``q = (y, w, -w.u)``.
    RHS: the explicit component conditions plus ``a_11ij = 0``.  ``drop``
    removes the RHS row with that provenance tag.
    """
    if not 2 <= n <= 5:
        raise ValueError(f"reduction system is built for 2 <= n <= 5, got {n}")
    k = n - 2
    nvars = 2 * k + 1
    z = _vars(nvars)
    u, y, w = z[:k], z[k], z[k + 1:]
    zero, one = Poly(nvars), Poly.const(nvars, 1)
    v = [zero] + u + [one]
    wu = Poly(nvars)
    for a in range(k):
        wu = wu + w[a] * u[a]
    q = [y] + w + [-wu]
    lhs = RationalConstraintSystem(TensorShape(n, 2).dim)
    _hypothesis_rows(n, lhs)
    lhs.extend_from(contraction_polynomial(n, v, v), "vv1")
    lhs.extend_from(contraction_polynomial(n, v, q), "vv2")
    rhs = _reduction_rhs(n)
    if drop is not None:
        if drop not in rhs.provenance:
            raise ValueError(f"no RHS row tagged {drop!r}")
        rhs = rhs.without(drop)
    return lhs, rhs


def build_reduction_system_paper3d() -> RationalConstraintSystem:
    """LHS for n = 3 with ``v = (0, 1, x)`` and ``q = (y, x, -1)``."""
    x, y = _vars(2)
    zero, one = Poly(2), Poly.const(2, 1)
    lhs = RationalConstraintSystem(TensorShape(3, 2).dim)
    _hypothesis_rows(3, lhs)
    v = [zero, one, x]
    lhs.extend_from(contraction_polynomial(3, v, v), "vv1")
    lhs.extend_from(contraction_polynomial(3, v, [y, x, -one]), "vv2")
    return lhs


# --------------------------------------------------------------------------
# certificates


def verify_no_pw_kernel(n: int, branches: Sequence[str] = ("parallel", "orthogonal")) -> dict:
    system = build_no_pw_kernel_system(n, branches)
    res = rref_and_nullspace(system)
    return {
        "lemma": "no-pw-kernel",
        "n": n,
        "rank": res.rank,
        "nullity": res.nullity,
        "row_count": system.row_count,
        "pass": res.nullity == 0,
        "rref_hash": res.fingerprint,
        "provenance": system.provenance,
    }


def verify_reduction(n: int, drop: str | None = None) -> dict:
    """Pass iff both sides have the same row space (identical RREF and
    ``rank(L) = rank(R) = rank(L + R)``)."""
    lhs, rhs = build_reduction_system(n, drop)
    rl, rr = rref_and_nullspace(lhs), rref_and_nullspace(rhs)
    rboth = rref_and_nullspace(lhs + rhs)
    ok = rl.rref == rr.rref and rl.rank == rr.rank == rboth.rank
    hyp = rref_and_nullspace(rhs.subsystem("hyp"))
    return {
        "lemma": "reduction",
        "n": n,
        "rank": rl.rank,
        "nullity": rl.nullity,
        "row_count": lhs.row_count,
        "pass": bool(ok),
        "rref_hash": rl.fingerprint,
        "dims": {
            "unknowns": lhs.ncols,
            "lhs_solution_dim": rl.nullity,
            "rhs_solution_dim": rr.nullity,
            "combined_rank": rboth.rank,
            "hypothesis_solution_dim": hyp.nullity,
            "rhs_solution_dim_within_hypothesis": rr.nullity,
        },
        "fingerprints": {"lhs": rl.fingerprint, "rhs": rr.fingerprint},
        "rhs_row_count": rhs.row_count,
        "provenance": {"lhs": lhs.provenance, "rhs": rhs.provenance},
    }
