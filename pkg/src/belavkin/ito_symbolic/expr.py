"""Noncommutative expressions with commuting observed factors and Itô increments.

A term is ``coeff * m * w * inc`` where

* ``coeff`` is an exact sympy number,
* ``m`` is a commutative monomial of atoms (scalars such as ``h``, the
  oscillator phase ``e^{i phi}``, observed processes such as ``b`` or
  ``eta``, and filtered values ``E[w]``), each with an integer power,
* ``w`` is an ordered word of system symbols (never reordered),
* ``inc`` is at most one reduced increment (``dA_j``, ``dA*_j``,
  ``dLambda_ij`` or ``dt``).

Increments commute with every adapted factor but not with each other; a
product of increments is reduced with the quantum Itô table as soon as it is
formed, so canonical terms carry at most one increment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import sympy

__all__ = [
    "SysSymbol",
    "Atom",
    "Increment",
    "Expr",
    "sym",
    "scalar",
    "phase",
    "observed",
    "filtered",
    "inc",
    "dt",
    "one",
    "zero",
    "number",
    "SELF_ADJOINT",
]

SELF_ADJOINT = {"H", "L(X)"}


@dataclass(frozen=True, order=True)
class SysSymbol:
    """System operator symbol; ``adj`` marks the adjoint."""

    name: str
    adj: bool = False

    def dagger(self) -> "SysSymbol":
        if self.name in SELF_ADJOINT:
            return self
        return SysSymbol(self.name, not self.adj)

    def __str__(self):
        return self.name + ("*" if self.adj else "")


@dataclass(frozen=True, order=True)
class Atom:
    """Commuting factor.

    ``kind`` is one of ``"scalar"``, ``"phase"``, ``"observed"`` or
    ``"filtered"`` (then ``word`` holds the argument of ``E``).
    """

    kind: str
    name: str = ""
    conj: bool = False
    word: tuple = ()

    def conjugate(self) -> "Atom":
        if self.kind == "phase":
            return self  # handled through the power
        if self.kind == "filtered":
            return Atom("filtered", word=tuple(s.dagger() for s in reversed(self.word)))
        return Atom(self.kind, self.name, not self.conj)


_KIND_ORDER = {"scalar": 0, "phase": 1, "observed": 2, "filtered": 3}


def _atom_key(a: Atom):
    return (_KIND_ORDER[a.kind], a.name, a.conj, tuple((s.name, s.adj) for s in a.word))


@dataclass(frozen=True, order=True)
class Increment:
    """``kind`` in {"dA", "dA*", "dL", "dt"} with channel indices."""

    kind: str
    i: str = ""
    j: str = ""

    def dagger(self) -> "Increment":
        if self.kind == "dA":
            return Increment("dA*", self.i)
        if self.kind == "dA*":
            return Increment("dA", self.i)
        if self.kind == "dL":
            return Increment("dL", self.j, self.i)
        return self

    def __str__(self):
        if self.kind == "dt":
            return "dt"
        if self.kind == "dL":
            return f"dLambda_{self.i}{self.j}"
        return f"{self.kind}_{self.i}"


def ito_reduce(m1, m2):
    """Product of two increments (``None`` stands for the empty monomial).

    Returns ``(increment_or_None, nonzero)``.
    """
    if m1 is None:
        return m2, True
    if m2 is None:
        return m1, True
    if m1.kind == "dA" and m2.kind == "dA*":
        return (Increment("dt"), True) if m1.i == m2.i else (None, False)
    if m1.kind == "dA" and m2.kind == "dL":
        return (Increment("dA", m2.j), True) if m1.i == m2.i else (None, False)
    if m1.kind == "dL" and m2.kind == "dA*":
        return (Increment("dA*", m1.i), True) if m1.j == m2.i else (None, False)
    if m1.kind == "dL" and m2.kind == "dL":
        return (Increment("dL", m1.i, m2.j), True) if m1.j == m2.i else (None, False)
    return None, False


def _mono_mul(m1, m2):
    powers = dict(m1)
    for a, p in m2:
        powers[a] = powers.get(a, 0) + p
    return tuple(sorted(((a, p) for a, p in powers.items() if p != 0), key=lambda ap: _atom_key(ap[0])))


def _mono_conj(m):
    out = {}
    for a, p in m:
        if a.kind == "phase":
            out[a] = out.get(a, 0) - p
        else:
            b = a.conjugate()
            out[b] = out.get(b, 0) + p
    return tuple(sorted(((a, p) for a, p in out.items() if p != 0), key=lambda ap: _atom_key(ap[0])))


def _term_key(key):
    mono, word, incr = key
    rank = 2 if incr is None else (1 if incr.kind == "dt" else 0)
    return (
        rank,
        str(incr) if incr is not None else "",
        len(word),
        tuple((s.name, s.adj) for s in word),
        tuple((_atom_key(a), -p) for a, p in mono),
    )


class Expr:
    """Formal sum of canonical terms; immutable in practice."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        for key, c in (terms or {}).items():
            c = sympy.expand(c)
            if c != 0:
                clean[key] = c
        self.terms = clean

    # construction helpers
    @staticmethod
    def term(coeff=1, mono=(), word=(), incr=None) -> "Expr":
        return Expr({(_mono_mul((), mono), tuple(word), incr): sympy.sympify(coeff)})

    def __add__(self, other):
        other = _as_expr(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0) + c
        return Expr(out)

    __radd__ = __add__

    def __neg__(self):
        return Expr({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_as_expr(other))

    def __rsub__(self, other):
        return _as_expr(other) - self

    def __mul__(self, other):
        other = _as_expr(other)
        out = {}
        for (m1, w1, i1), c1 in self.terms.items():
            for (m2, w2, i2), c2 in other.terms.items():
                incr, nonzero = ito_reduce(i1, i2)
                if not nonzero:
                    continue
                key = (_mono_mul(m1, m2), w1 + w2, incr)
                out[key] = out.get(key, 0) + c1 * c2
        return Expr(out)

    def __rmul__(self, other):
        return _as_expr(other) * self

    def __eq__(self, other):
        other = _as_expr(other)
        return (self - other).is_zero()

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items(), key=lambda kc: _term_key(kc[0]))))

    def is_zero(self) -> bool:
        return not self.terms

    def dagger(self) -> "Expr":
        out = {}
        for (m, w, i), c in self.terms.items():
            key = (_mono_conj(m), tuple(s.dagger() for s in reversed(w)), None if i is None else i.dagger())
            out[key] = out.get(key, 0) + sympy.conjugate(c)
        return Expr(out)

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kc: _term_key(kc[0]))

    def increments(self):
        return {i for (_, _, i) in self.terms}

    def part(self, incr) -> "Expr":
        """Coefficient of the increment ``incr`` (``None``: the increment-free part)."""
        return Expr({(m, w, None): c for (m, w, i), c in self.terms.items() if i == incr})

    def with_increment(self, incr) -> "Expr":
        return self * Expr.term(incr=incr)

    def map_terms(self, fn) -> "Expr":
        """Sum of ``fn(coeff, mono, word, incr)`` over the terms."""
        out = Expr()
        for (m, w, i), c in self.terms.items():
            out = out + fn(c, m, w, i)
        return out

    def __repr__(self):
        from .render import render

        return f"Expr({render(self)!r})"


def _as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Expr.term(coeff=sympy.sympify(x))


def sym(name: str, adj: bool = False) -> Expr:
    return Expr.term(word=(SysSymbol(name, adj),))


def scalar(name: str, conj: bool = False, power: int = 1) -> Expr:
    return Expr.term(mono=((Atom("scalar", name, conj), power),))


def phase(power: int = 1, name: str = "phi") -> Expr:
    """``e^{i power phi}``."""
    return Expr.term(mono=((Atom("phase", name), power),))


def observed(name: str, conj: bool = False, power: int = 1) -> Expr:
    return Expr.term(mono=((Atom("observed", name, conj), power),))


def filtered(word: Iterable[SysSymbol], power: int = 1) -> Expr:
    word = tuple(word)
    if not word:
        return one()
    return Expr.term(mono=((Atom("filtered", word=word), power),))


def inc(kind: str, i: str = "", j: str = "") -> Expr:
    return Expr.term(incr=Increment(kind, i, j))


def dt() -> Expr:
    return inc("dt")


def one() -> Expr:
    return Expr.term()


def zero() -> Expr:
    return Expr()


def number(c) -> Expr:
    return Expr.term(coeff=sympy.sympify(c))
