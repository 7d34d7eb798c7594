"""Stable plain-text rendering of expressions and Belavkin equations.

Grammar (EBNF)::

    equation   = "d" filt "[" name "]" " = " drift " dt + (" expr ") (" expr ")" { newline condition } ;
    condition  = "where " factor " != 0" ;
    expr       = "0" | [ "-" ] term { ( " + " | " - " ) term } ;
    term       = [ coeff " " ] factor { " " factor } [ " " increment ] | coeff [ " " increment ] ;
    coeff      = integer | "(" sympy-number ")" ;
    factor     = atom [ "^" integer ] | symbol ;
    atom       = name [ "*" ] | "e^{" [ "-" | integer "*" ] "i*phi}" | filt "[" word "]" ;
    word       = symbol { " " symbol } ;
    symbol     = name [ "*" ] ;
    increment  = "dt" | "dA_" ch | "dA*_" ch | "dLambda_" ch ch ;
    filt       = "E" | "rho_t" ;

Terms are listed in canonical order: terms carrying a quantum increment
first, then ``dt`` terms, then increment-free ones; within a group by
word length, word and commuting factors. The ``rho_t`` spelling is the
state-form reading ``E^t(X) = rho^t(X)``.
"""

from __future__ import annotations

import sympy

from .expr import Expr

__all__ = ["render", "render_equation", "render_atom"]


def _word(word):
    return " ".join(str(s) for s in word)


def render_atom(atom, power=1, filt="E") -> str:
    if atom.kind == "phase":
        if power == 1:
            return f"e^{{i*{atom.name}}}"
        if power == -1:
            return f"e^{{-i*{atom.name}}}"
        return f"e^{{{power}*i*{atom.name}}}"
    if atom.kind == "filtered":
        base = f"{filt}[{_word(atom.word)}]"
    else:
        base = atom.name + ("*" if atom.conj else "")
    return base if power == 1 else f"{base}^{power}"


def _coeff(c):
    """Sign and magnitude string (empty for 1)."""
    neg = c.could_extract_minus_sign()
    if neg:
        c = -c
    if c == 1:
        return neg, ""
    if c.is_Integer:
        return neg, str(c)
    return neg, "(" + sympy.sstr(c) + ")"


def render(expr: Expr, filt="E") -> str:
    if expr.is_zero():
        return "0"
    parts = []
    for (m, w, i), c in expr.sorted_terms():
        neg, cs = _coeff(c)
        factors = [render_atom(a, p, filt) for a, p in sorted(m, key=lambda ap: ap[1] < 0 and ap[0].kind == "filtered")]
        if w:
            factors.append(_word(w))
        body = " ".join(([cs] if cs else []) + factors)
        if not body:
            body = "1"
        if i is not None:
            body = f"{body} {i}" if (factors or cs) else str(i)
        parts.append((neg, body))
    out = ("-" if parts[0][0] else "") + parts[0][1]
    for neg, body in parts[1:]:
        out += (" - " if neg else " + ") + body
    return out


def render_equation(eq, state_form=False) -> str:
    """Text of ``dE(X) = E(L(X)) dt + (eta) (dY~)`` with its side conditions."""
    filt = "rho_t" if state_form else "E"
    drift = render(eq.drift, filt)
    gain = render(eq.gain, filt)
    lines = [f"d{filt}[{eq.X}] = {drift} dt + ({gain}) ({render(eq.innovation, filt)})"]
    for a in eq.side_conditions:
        lines.append(f"where {render_atom(a, 1, filt)} != 0")
    return "\n".join(lines) + "\n"
