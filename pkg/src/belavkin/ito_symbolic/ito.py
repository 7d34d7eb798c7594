"""Quantum Itô table and the product rule for differentials."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .expr import Expr, Increment, ito_reduce

__all__ = ["ITO_TABLE", "ito_product", "basic_increments", "Factor", "expand_product_differential", "ProductExpansion"]

# nonzero products of basic increments; everything else (and any product with dt) is 0
ITO_TABLE = (
    ("dA_k", "dA*_i", "delta_ki dt"),
    ("dA_k", "dLambda_ij", "delta_ki dA_j"),
    ("dLambda_kl", "dA*_i", "delta_li dA*_k"),
    ("dLambda_kl", "dLambda_ij", "delta_li dLambda_kj"),
)


def ito_product(m1: Increment, m2: Increment) -> Expr:
    """Product ``m1 * m2`` of two increments as an expression (zero or one increment)."""
    incr, nonzero = ito_reduce(m1, m2)
    if not nonzero:
        return Expr()
    return Expr.term(incr=incr)


def basic_increments(channels=("s",)):
    """All basic increments over ``channels``, including ``dt``."""
    out = [Increment("dt")]
    for i in channels:
        out += [Increment("dA", i), Increment("dA*", i)]
        out += [Increment("dL", i, j) for j in channels]
    return out


@dataclass(frozen=True)
class Factor:
    """Adapted process ``value`` with differential ``differential``."""

    name: str
    value: Expr
    differential: Expr


@dataclass
class ProductExpansion:
    """``d(Z_1 ... Z_p)`` split by the set of differentiated factors.

    ``terms`` maps a sorted tuple of 1-based factor positions to the reduced
    expression of that product; all ``2**p - 1`` subsets are present, zero
    ones included.
    """

    factors: tuple
    terms: dict

    def total(self) -> Expr:
        out = Expr()
        for e in self.terms.values():
            out = out + e
        return out

    def subset_sum(self, pred) -> Expr:
        out = Expr()
        for nu, e in self.terms.items():
            if pred(nu):
                out = out + e
        return out


def expand_product_differential(factors) -> ProductExpansion:
    """Quantum product rule: sum over non-empty subsets of differentiated factors.

    Increments commute with adapted factors and are multiplied in factor
    order, reduced through the Itô table as they meet.
    """
    factors = tuple(factors)
    p = len(factors)
    terms = {}
    for r in range(1, p + 1):
        for nu in combinations(range(1, p + 1), r):
            prod = Expr.term()
            for k, f in enumerate(factors, start=1):
                prod = prod * (f.differential if k in nu else f.value)
                if prod.is_zero():
                    break
            terms[nu] = prod
    return ProductExpansion(factors, terms)
