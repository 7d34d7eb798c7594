"""Vacuum generators and filter gains derived from the Itô product rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import sympy

from ..errors import DerivationError, InvalidInputError
from .expr import Atom, Expr, SysSymbol, filtered, inc, number, observed, one, phase, scalar, sym
from .ito import Factor, expand_product_differential

__all__ = [
    "Cocycle",
    "cocycle",
    "laser_cocycle",
    "check_cocycle",
    "vacuum_expectation",
    "conditional_expectation",
    "lindblad_form",
    "vacuum_dt_generator",
    "Measurement",
    "COUNTING",
    "QUADRATURE",
    "measurement",
    "innovation",
    "GainDerivation",
    "derive_filter_gain",
    "counting_gain_target",
    "quadrature_gain_target",
    "BelavkinEquation",
    "assemble_belavkin_equation",
    "L_OF_X",
]

U = SysSymbol("U")
IDENTITY = ("1", "I")
L_OF_X = SysSymbol("L(X)")  # opaque placeholder used when rendering the drift


@dataclass(frozen=True)
class Cocycle:
    """Unitary cocycle with ``S_ij = delta_ij``.

    ``dU = {sum_j (V_j dA*_j - V_j* dA_j) - (i H + 1/2 sum_j V_j* V_j) dt} U``.

    Attributes
    ----------
    hamiltonian : Expr
    couplings : dict channel -> Expr
    """

    hamiltonian: Expr
    couplings: dict

    @property
    def channels(self):
        return tuple(self.couplings)

    def left_coefficient(self) -> Expr:
        """``D`` with ``dU = D U``."""
        d = Expr()
        drift = sympy.I * self.hamiltonian
        for j, v in self.couplings.items():
            d = d + v * inc("dA*", j) - v.dagger() * inc("dA", j)
            drift = drift + number(sympy.Rational(1, 2)) * v.dagger() * v
        return d - drift * inc("dt")

    def dU(self) -> Expr:
        return self.left_coefficient() * sym("U")

    def dU_star(self) -> Expr:
        return self.dU().dagger()


def cocycle(H="H", V=("V_f", "V_s"), channels=None) -> Cocycle:
    """Cocycle from symbol names; ``H=None`` means ``H = 0``."""
    V = tuple(V)
    channels = tuple(channels) if channels is not None else tuple(_channel_name(v) for v in V)
    if len(set(channels)) != len(channels):
        raise InvalidInputError("channel labels must be distinct")
    ham = Expr() if H is None else sym(H)
    return Cocycle(ham, {c: sym(v) for c, v in zip(channels, V)})


def _channel_name(v):
    return v.split("_", 1)[1] if "_" in v else v


def laser_cocycle(displaced="f", h="h") -> Cocycle:
    """Two-channel cocycle after the Weyl displacement of channel ``displaced``.

    ``V~ = V + h`` on the displaced channel and
    ``H~ = H + (i/2)(conj(h) V - h V*)``.
    """
    base = cocycle()
    if displaced not in base.couplings:
        raise InvalidInputError(f"unknown channel {displaced!r}")
    v = base.couplings[displaced]
    hh, hb = scalar(h), scalar(h, conj=True)
    couplings = dict(base.couplings)
    couplings[displaced] = v + hh
    ham = base.hamiltonian + number(sympy.I / 2) * (hb * v - hh * v.dagger())
    return Cocycle(ham, couplings)


def check_cocycle(dU: Expr, channels) -> None:
    """Unitarity of a declared cocycle differential: ``d(U* U) = 0``.

    Raises
    ------
    DerivationError
        If ``dU`` is not of the form ``D U`` or the product rule leaves a
        residual.
    """
    for (m, w, i), _ in dU.terms.items():
        if not w or w[-1] != U or U in w[:-1] or SysSymbol("U", True) in w:
            raise DerivationError("differential is not of the form D U", dU)
    exp = expand_product_differential(
        [Factor("U*", sym("U", True), dU.dagger()), Factor("U", sym("U"), dU)]
    )
    res = exp.total()
    if not res.is_zero():
        raise DerivationError("non-cocycle differential: d(U* U) != 0", res)


def vacuum_expectation(expr: Expr) -> Expr:
    """Vacuum rule: keep the ``dt`` part of ``U* W U`` terms and return ``W``.

    The result is read as ``rho^t(W)``; every other increment has zero vacuum
    expectation.
    """
    out = {}
    for (m, w, i), c in expr.terms.items():
        if i is None or i.kind != "dt":
            continue
        if len(w) < 2 or w[0] != SysSymbol("U", True) or w[-1] != U:
            raise DerivationError("dt term is not sandwiched as U* ... U", Expr({(m, w, i): c}))
        key = (m, w[1:-1], None)
        out[key] = out.get(key, 0) + c
    return Expr(out)


def conditional_expectation(expr: Expr) -> Expr:
    """Apply ``E^t`` termwise: linearity, ``E(1) = 1`` and the module property.

    Commuting atoms (scalars, observed and already filtered values) are
    pulled out, so idempotence holds by construction.
    """
    out = Expr()
    for (m, w, i), c in expr.terms.items():
        if i is not None:
            raise InvalidInputError("conditional expectation of an increment term")
        out = out + Expr.term(c, m) * filtered(w)
    return out


def lindblad_form(H: Expr, couplings, X: Expr) -> Expr:
    """``i[H, X] + sum_j (V_j* X V_j - 1/2 {V_j* V_j, X})``."""
    out = sympy.I * (H * X - X * H)
    half = number(sympy.Rational(1, 2))
    for v in couplings:
        vv = v.dagger() * v
        out = out + v.dagger() * X * v - half * (vv * X + X * vv)
    return out


def vacuum_dt_generator(H="H", V=(), X="X", coc: Cocycle | None = None, dU: Expr | None = None) -> Expr:
    """Heisenberg generator from ``d(U* X U)`` under the vacuum rule.

    Parameters
    ----------
    H, V : symbol names (``H=None`` for ``H = 0``), used unless ``coc`` is given.
    X : name of the observable symbol.
    coc : Cocycle, optional
    dU : Expr, optional
        Explicit cocycle differential; it is checked for unitarity.

    Returns
    -------
    Expr
        Canonical ``L(X)``; compare with :func:`lindblad_form`.
    """
    if coc is None:
        coc = cocycle(H, V)
    if dU is None:
        dU = coc.dU()
    check_cocycle(dU, coc.channels)
    x = _observable(X)
    exp = expand_product_differential(
        [Factor("U*", sym("U", True), dU.dagger()), Factor("X", x, Expr()), Factor("U", sym("U"), dU)]
    )
    return vacuum_expectation(exp.total())


def _observable(X) -> Expr:
    if isinstance(X, Expr):
        return X
    return one() if X in IDENTITY else sym(X)


@dataclass(frozen=True)
class Measurement:
    """Observed process ``dY = alpha dA*_s + beta dLambda_ss + conj(alpha) dA_s``."""

    name: str
    channel: str = "s"

    def coefficients(self):
        if self.name == "counting":
            return Expr(), one()
        if self.name == "quadrature":
            return phase(1), Expr()
        raise InvalidInputError(f"unknown measurement {self.name!r}")


COUNTING = Measurement("counting")
QUADRATURE = Measurement("quadrature")
_ALIASES = {"count": "counting", "counting": "counting", "homodyne": "quadrature", "quadrature": "quadrature"}


def measurement(name) -> Measurement:
    if isinstance(name, Measurement):
        return name
    try:
        return Measurement(_ALIASES[name])
    except KeyError:
        raise InvalidInputError(f"unknown measurement {name!r}; use count or homodyne") from None


def innovation(meas: Measurement, coc: Cocycle) -> Expr:
    """``dY~ = dY - E(V~* alpha + V~* beta V~ + conj(alpha) V~) dt``."""
    s = meas.channel
    if s not in coc.couplings:
        raise InvalidInputError(f"channel {s!r} not in the cocycle")
    alpha, beta = meas.coefficients()
    v = coc.couplings[s]
    dy = alpha * inc("dA*", s) + beta * inc("dL", s, s) + alpha.dagger() * inc("dA", s)
    comp = conditional_expectation(v.dagger() * alpha + v.dagger() * beta * v + alpha.dagger() * v)
    return dy - comp * inc("dt")


@dataclass
class GainDerivation:
    """Result of the gain recipe.

    ``subset_terms`` holds the conditional expectation of every subset term
    with ``B`` differentiated (before dividing by ``b``); ``lemma_terms``
    those without, whose sum is verified to vanish.
    """

    measurement: Measurement
    gain: Expr
    innovation: Expr
    subset_terms: dict
    lemma_terms: dict
    bracket: Expr
    side_conditions: tuple = field(default_factory=tuple)


ETA = Atom("observed", "eta")
B_ATOM = Atom("observed", "b")


def _strip_atom(expr: Expr, atom: Atom, power: int) -> Expr:
    out = {}
    for (m, w, i), c in expr.terms.items():
        powers = dict(m)
        if powers.get(atom, 0) != power:
            raise DerivationError(f"term not linear in {atom.name}", Expr({(m, w, i): c}))
        key = (tuple(ap for ap in m if ap[0] != atom), w, i)
        out[key] = out.get(key, 0) + c
    return Expr(out)


def _split_linear(expr: Expr, atom: Atom):
    """``expr = atom * P + Q``; raises for other powers."""
    p, q = {}, {}
    for (m, w, i), c in expr.terms.items():
        k = dict(m).get(atom, 0)
        if k == 0:
            q[(m, w, i)] = c
        elif k == 1:
            mm = tuple(ap for ap in m if ap[0] != atom)
            p[(mm, w, i)] = p.get((mm, w, i), 0) + c
        else:
            raise DerivationError(f"bracket is not linear in {atom.name}", expr)
    return Expr(p), Expr(q)


def _inverse(p: Expr):
    """Formal inverse of a single commuting monomial, plus its side conditions."""
    if len(p.terms) != 1:
        raise DerivationError("gain coefficient is not a single monomial; eta is not uniquely solvable", p)
    ((m, w, i), c), = p.terms.items()
    if w or i is not None:
        raise DerivationError("gain coefficient is operator valued", p)
    conds = tuple(a for a, k in m if k > 0 and a.kind == "filtered")
    return Expr.term(1 / c, tuple((a, -k) for a, k in m)), conds


def derive_filter_gain(meas="count", X="X", coc: Cocycle | None = None) -> GainDerivation:
    """Solve for ``eta`` in ``dM = eta dY~`` through the generic observed process ``B``.

    Expands ``d(U* B (E(X) - X) U)`` with ``dB = b dY~ + c dt`` and
    ``d(E(X) - X) = eta dY~ + E(L(X)) dt``, takes the vacuum ``dt`` part and
    the conditional expectation, verifies that the terms with ``B``
    undifferentiated vanish, and equates the ``b`` bracket of the remaining
    subset terms to zero.

    Raises
    ------
    DerivationError
        If the Lemma terms leave a residual or ``eta`` is not uniquely
        solvable; the residual expression is attached.
    """
    meas = measurement(meas)
    coc = coc or laser_cocycle()
    dY = innovation(meas, coc)
    x = _observable(X)
    gen = vacuum_dt_generator(coc=coc, X=X)
    eta, b, c = observed("eta"), observed("b"), observed("c")
    factors = [
        Factor("U*", sym("U", True), coc.dU_star()),
        Factor("B", observed("B"), b * dY + c * inc("dt")),
        Factor("E(X)-X", conditional_expectation(x) - x, eta * dY + conditional_expectation(gen) * inc("dt")),
        Factor("U", sym("U"), coc.dU()),
    ]
    exp = expand_product_differential(factors)
    lemma, subset = {}, {}
    for nu, e in exp.terms.items():
        val = conditional_expectation(vacuum_expectation(e))
        (subset if 2 in nu and nu != (2,) else lemma)[nu] = val
    residual = sum(lemma.values(), Expr())
    if not residual.is_zero():
        raise DerivationError("terms without dB do not vanish under the conditional expectation", residual)
    total = sum(subset.values(), Expr())
    bracket = _strip_atom(total, B_ATOM, 1)
    p, q = _split_linear(bracket, ETA)
    if p.is_zero():
        raise DerivationError("bracket does not involve eta", bracket)
    inv, conds = _inverse(p)
    gain = -q * inv
    if not (p * gain + q).is_zero():
        raise DerivationError("solution does not satisfy the bracket", p * gain + q)
    return GainDerivation(meas, gain, dY, subset, lemma, bracket, conds)


def counting_gain_target(X="X", s="s") -> Expr:
    v, vs, x = SysSymbol(f"V_{s}"), SysSymbol(f"V_{s}", True), SysSymbol(X)
    return filtered([vs, x, v]) * filtered([vs, v], power=-1) - filtered([x])


def quadrature_gain_target(X="X", s="s") -> Expr:
    v, x = sym(f"V_{s}"), sym(X)
    e, eb = phase(1), phase(-1)
    ce = conditional_expectation
    return ce(e * v.dagger() * x + eb * x * v) - ce(e * v.dagger() + eb * v) * ce(x)


@dataclass
class BelavkinEquation:
    """``dE(X) = E(L(X)) dt + eta dY~``."""

    measurement: Measurement
    X: str
    drift: Expr
    gain: Expr
    innovation: Expr
    side_conditions: tuple

    def differential(self) -> Expr:
        return self.drift * inc("dt") + self.gain * self.innovation


def assemble_belavkin_equation(meas="count", X="X", coc: Cocycle | None = None) -> BelavkinEquation:
    d = derive_filter_gain(meas, X, coc)
    if X in IDENTITY:
        drift = Expr()
    else:
        drift = filtered([L_OF_X]) if X == "X" else filtered([SysSymbol(f"L({X})")])
    return BelavkinEquation(d.measurement, X, drift, d.gain, d.innovation, d.side_conditions)
