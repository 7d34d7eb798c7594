"""Numeric evaluation of symbolic expressions on matrix assignments."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from .expr import Expr

__all__ = ["evaluate"]


def _matrix(sym, ops):
    try:
        m = np.asarray(ops[sym.name], dtype=complex)
    except KeyError:
        raise InvalidInputError(f"no value for symbol {sym.name}") from None
    return m.conj().T if sym.adj else m


def _word_value(word, ops, dim):
    out = np.eye(dim, dtype=complex)
    for s in word:
        out = out @ _matrix(s, ops)
    return out


def evaluate(expr: Expr, ops: dict, values=None, rho=None, increment=None):
    """Value of the coefficient of ``increment`` (``None``: increment-free part).

    Parameters
    ----------
    ops : dict name -> square matrix
    values : dict name -> complex
        Scalars and observed atoms (conjugates are taken automatically) and
        phases (``{"phi": angle}``).
    rho : ndarray, optional
        State used for filtered atoms, ``E[w] = Tr(rho w)``.

    Returns
    -------
    ndarray
        ``dim x dim`` matrix (scalar parts multiply the identity).
    """
    values = values or {}
    dim = next(iter(np.asarray(v).shape[0] for v in ops.values()), None) if ops else None
    if dim is None:
        dim = 1 if rho is None else np.asarray(rho).shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for (m, w, i), c in expr.terms.items():
        if i != increment:
            continue
        val = complex(c)
        for a, p in m:
            if a.kind == "phase":
                x = np.exp(1j * float(values[a.name]))
            elif a.kind == "filtered":
                if rho is None:
                    raise InvalidInputError("filtered atom needs a state")
                x = np.trace(np.asarray(rho) @ _word_value(a.word, ops, dim))
            else:
                try:
                    x = complex(values[a.name])
                except KeyError:
                    raise InvalidInputError(f"no value for {a.name}") from None
                x = np.conj(x) if a.conj else x
            val *= x**p
        out += val * _word_value(w, ops, dim)
    return out
