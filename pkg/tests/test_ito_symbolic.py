import itertools
from pathlib import Path

import numpy as np
import pytest
import sympy

from belavkin.algebra import unvec, vec
from belavkin.errors import DerivationError, InvalidInputError
from belavkin.homodyne import homodyne_gain
from belavkin.ito_symbolic import (
    Factor,
    Increment,
    assemble_belavkin_equation,
    basic_increments,
    check_cocycle,
    cocycle,
    conditional_expectation,
    counting_gain_target,
    derive_filter_gain,
    evaluate,
    expand_product_differential,
    filtered,
    inc,
    innovation,
    ito_product,
    laser_cocycle,
    lindblad_form,
    measurement,
    number,
    observed,
    one,
    phase,
    quadrature_gain_target,
    render,
    render_equation,
    scalar,
    sym,
    vacuum_dt_generator,
)
from belavkin.ito_symbolic.expr import Expr, SysSymbol
from belavkin.lindblad import HomodyneSpec, build_liouvillian, resonance_fluorescence

GOLDEN = Path(__file__).parent / "golden"

dA, dAs, dL, dT = Increment("dA", "s"), Increment("dA*", "s"), Increment("dL", "s", "s"), Increment("dt")


def as_inc(m):
    return Expr.term(incr=m)


class TestItoTable:
    def test_annihilation_creation(self):
        assert ito_product(dA, dAs) == as_inc(dT)

    def test_creation_annihilation_vanishes(self):
        assert ito_product(dAs, dA).is_zero()

    def test_number_number(self):
        assert ito_product(dL, dL) == as_inc(dL)

    def test_mixed_rows(self):
        assert ito_product(dA, dL) == as_inc(dA)
        assert ito_product(dL, dAs) == as_inc(dAs)

    def test_channel_mismatch(self):
        assert ito_product(Increment("dA", "f"), dAs).is_zero()
        assert ito_product(Increment("dL", "f", "s"), Increment("dL", "s", "f")) == as_inc(Increment("dL", "f", "f"))
        assert ito_product(Increment("dL", "s", "f"), Increment("dL", "s", "f")).is_zero()

    def test_dt_annihilates(self):
        for m in basic_increments(("s",)):
            assert ito_product(dT, m).is_zero()
            assert ito_product(m, dT).is_zero()

    def test_nonzero_cells_two_channels(self):
        incs = [m for m in basic_increments(("f", "s")) if m.kind != "dt"]
        nonzero = sum(not ito_product(a, b).is_zero() for a in incs for b in incs)
        # dA.dA* (2) + dA.dL (4) + dL.dA* (4) + dL.dL (8)
        assert nonzero == 18

    def test_closure(self):
        incs = basic_increments(("f", "s"))
        for a, b in itertools.product(incs, repeat=2):
            assert len(ito_product(a, b).terms) <= 1

    @pytest.mark.parametrize("channels", [("s",), ("f", "s")])
    def test_associativity(self, channels):
        incs = basic_increments(channels)
        for a, b, c in itertools.product(incs, repeat=3):
            assert ito_product(a, b) * as_inc(c) == as_inc(a) * ito_product(b, c)


class TestExpressions:
    def test_adjoint_involution(self):
        e = number(sympy.I / 3) * scalar("h") * phase(1) * sym("V_s") * sym("X") * inc("dA*", "s")
        assert e.dagger().dagger() == e
        assert e.dagger() != e

    def test_words_do_not_commute(self):
        assert sym("V") * sym("X") != sym("X") * sym("V")

    def test_scalars_commute(self):
        assert scalar("h") * sym("V") == sym("V") * scalar("h")
        assert observed("b") * sym("V") * observed("eta") == observed("eta") * sym("V") * observed("b")

    def test_phase_powers_cancel(self):
        assert phase(1) * phase(-1) == one()
        assert phase(1).dagger() == phase(-1)

    def test_formal_inverse_cancels(self):
        w = (SysSymbol("V", True), SysSymbol("V"))
        assert filtered(w) * filtered(w, power=-1) == one()

    def test_canonical_string_deterministic_and_idempotent(self):
        a = sym("X") * scalar("h") + number(2) * sym("V") - number(sympy.Rational(1, 2)) * observed("b")
        b = number(sympy.Rational(-1, 2)) * observed("b") + scalar("h") * sym("X") + sym("V") * number(2)
        assert render(a) == render(b)
        assert render(Expr(dict(a.terms))) == render(a)


class TestConditionalExpectation:
    X, V = sym("X"), sym("V_s")

    def test_linearity(self):
        e = conditional_expectation(number(2) * self.X + self.V)
        assert e == number(2) * filtered([SysSymbol("X")]) + filtered([SysSymbol("V_s")])

    def test_unit(self):
        assert conditional_expectation(one()) == one()

    def test_module_property(self):
        b1, b2 = observed("b"), observed("c")
        assert conditional_expectation(b1 * self.X * b2) == b1 * conditional_expectation(self.X) * b2

    def test_idempotence(self):
        once = conditional_expectation(self.X * self.V)
        assert conditional_expectation(once) == once

    def test_rejects_increments(self):
        with pytest.raises(InvalidInputError):
            conditional_expectation(self.X * inc("dt"))


class TestProductRule:
    def test_single_factor(self):
        z = Factor("Z", sym("Z"), sym("a") * inc("dA*", "s"))
        exp = expand_product_differential([z])
        assert list(exp.terms) == [(1,)]
        assert exp.total() == z.differential

    def test_two_factors(self):
        m1 = Factor("M1", sym("M1"), sym("a") * inc("dA", "s"))
        m2 = Factor("M2", sym("M2"), sym("c") * inc("dA*", "s"))
        total = expand_product_differential([m1, m2]).total()
        expected = m1.differential * m2.value + m1.value * m2.differential + m1.differential * m2.differential
        assert total == expected
        assert total.part(dT) == sym("a") * sym("c")

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_subset_count(self, p):
        fs = [Factor(f"Z{k}", sym(f"Z{k}"), sym(f"a{k}") * inc("dL", "s", "s")) for k in range(p)]
        exp = expand_product_differential(fs)
        assert len(exp.terms) == 2**p - 1

    def test_term_13(self):
        fs = [Factor(f"Z{k}", sym(f"Z{k}"), sym(f"a{k}") * inc("dt")) for k in (1, 2, 3)]
        exp = expand_product_differential(fs)
        assert (1, 3) in exp.terms
        # dt * dt = 0
        assert exp.terms[(1, 3)].is_zero()
        assert exp.terms[(2,)] == sym("Z1") * sym("a2") * sym("Z3") * inc("dt")


class TestGenerator:
    def test_unitary_case(self):
        H, X = sym("H"), sym("X")
        assert vacuum_dt_generator("H", []) == number(sympy.I) * (H * X - X * H)

    def test_single_channel_no_hamiltonian(self):
        V, X = sym("V"), sym("X")
        half = number(sympy.Rational(1, 2))
        expected = V.dagger() * X * V - half * (V.dagger() * V * X + X * V.dagger() * V)
        assert vacuum_dt_generator(None, ["V"]) == expected

    def test_general(self):
        assert vacuum_dt_generator("H", ["V_1", "V_2", "V_3"]) == lindblad_form(
            sym("H"), [sym("V_1"), sym("V_2"), sym("V_3")], sym("X")
        )

    def test_laser_cocycle(self):
        coc = laser_cocycle()
        assert vacuum_dt_generator(coc=coc) == lindblad_form(coc.hamiltonian, coc.couplings.values(), sym("X"))

    def test_identity_is_annihilated(self):
        assert vacuum_dt_generator(coc=laser_cocycle(), X="1").is_zero()

    def test_rejects_non_cocycle(self):
        coc = cocycle("H", ["V"])
        bad = (sym("V") * inc("dA*", "V") - inc("dt") * number(sympy.I) * sym("H")) * sym("U")
        with pytest.raises(DerivationError) as err:
            vacuum_dt_generator(coc=coc, dU=bad)
        assert err.value.residual is not None
        with pytest.raises(DerivationError):
            check_cocycle(sym("V") * inc("dA*", "V"), ("V",))

    @pytest.mark.parametrize("seed", range(5))
    def test_numeric_bridge(self, seed):
        gen = np.random.default_rng(seed)
        m = resonance_fluorescence(
            rabi=gen.uniform(0.2, 2), omega0=gen.uniform(-1, 1), kappa_s=0.6 * np.exp(1j * gen.uniform(0, 6)),
            kappa_f=0.8 * np.exp(1j * gen.uniform(0, 6)),
        )
        h = m.displacements[0].amplitude(0.0)
        X = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        val = evaluate(vacuum_dt_generator(coc=laser_cocycle()), {"H": m.H, "V_f": m.op("f"), "V_s": m.op("s"), "X": X}, {"h": h})
        ref = unvec(build_liouvillian(m).dual().matrix @ vec(X))
        assert np.abs(val - ref).max() <= 1e-10


class TestGain:
    def test_counting_closed_form(self):
        d = derive_filter_gain("count")
        assert d.gain == counting_gain_target()
        assert d.innovation == inc("dL", "s", "s") - filtered([SysSymbol("V_s", True), SysSymbol("V_s")]) * inc("dt")
        assert [render(filtered([a.word[0], a.word[1]])) for a in d.side_conditions] == ["E[V_s* V_s]"]

    def test_quadrature_closed_form(self):
        d = derive_filter_gain("homodyne")
        assert d.gain == quadrature_gain_target()
        v = sym("V_s")
        comp = conditional_expectation(phase(1) * v.dagger() + phase(-1) * v)
        assert d.innovation == phase(1) * inc("dA*", "s") + phase(-1) * inc("dA", "s") - comp * inc("dt")
        assert d.side_conditions == ()

    def test_identity_gain_vanishes(self):
        assert derive_filter_gain("count", X="1").gain.is_zero()
        assert derive_filter_gain("homodyne", X="1").gain.is_zero()

    def test_all_seven_subset_terms_reported(self):
        d = derive_filter_gain("count")
        assert sorted(d.subset_terms) == [(1, 2), (1, 2, 3), (1, 2, 3, 4), (1, 2, 4), (2, 3), (2, 3, 4), (2, 4)]
        assert sum(d.lemma_terms.values(), Expr()).is_zero()
        assert not all(v.is_zero() for v in d.lemma_terms.values())
        nonzero = sorted(k for k, v in d.subset_terms.items() if not v.is_zero())
        assert nonzero == [(1, 2, 3, 4), (1, 2, 4)]
        q = derive_filter_gain("homodyne")
        assert sorted(k for k, v in q.subset_terms.items() if not v.is_zero()) == [(1, 2), (2, 3), (2, 4)]

    def test_plain_cocycle_gives_same_gain(self):
        # the displaced forward channel does not enter the gain
        assert derive_filter_gain("count", coc=cocycle()).gain == counting_gain_target()

    def test_unknown_measurement(self):
        with pytest.raises(InvalidInputError):
            measurement("heterodyne")

    def test_missing_channel(self):
        with pytest.raises(InvalidInputError):
            innovation(measurement("count"), cocycle("H", ["V_f"]))

    def test_unsolvable_reports_residual(self):
        from belavkin.ito_symbolic.derive import _inverse

        two_terms = filtered([SysSymbol("X")]) + one()
        with pytest.raises(DerivationError) as err:
            _inverse(two_terms)
        assert err.value.residual == two_terms

    @pytest.mark.parametrize("seed", range(4))
    def test_counting_numeric_bridge(self, seed):
        gen = np.random.default_rng(100 + seed)
        a = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        vs = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        X = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        eta = evaluate(derive_filter_gain("count").gain, {"V_s": vs, "X": X}, rho=rho)[0, 0]
        j = vs @ rho @ vs.conj().T
        ref = np.trace(X @ (j / np.trace(j) - rho))
        assert abs(eta - ref) <= 1e-10

    @pytest.mark.parametrize("phi", [0.0, 0.7, 2.5])
    def test_quadrature_numeric_bridge(self, phi):
        gen = np.random.default_rng(7)
        m = resonance_fluorescence(rabi=1.3, kappa_s=0.6 * np.exp(0.4j))
        a = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        X = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        eta = evaluate(derive_filter_gain("homodyne").gain, {"V_s": m.op("s"), "X": X}, {"phi": phi}, rho=rho)[0, 0]
        ref = np.trace(X @ homodyne_gain(m, HomodyneSpec(0.0, phi0=phi), rho))
        assert abs(eta - ref) <= 1e-10

    def test_innovation_compensator_numeric(self):
        gen = np.random.default_rng(3)
        vs = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
        rho = np.diag([0.3, 0.7]).astype(complex)
        dy = derive_filter_gain("count").innovation
        rate = evaluate(dy, {"V_s": vs}, rho=rho, increment=Increment("dt"))[0, 0]
        assert abs(rate + np.trace(vs @ rho @ vs.conj().T)) <= 1e-12


class TestEquation:
    @pytest.mark.parametrize("scheme", ["count", "homodyne"])
    def test_golden(self, scheme):
        text = render_equation(assemble_belavkin_equation(scheme))
        assert text == (GOLDEN / f"derive_{scheme}.txt").read_text()

    @pytest.mark.parametrize("scheme", ["count", "homodyne"])
    def test_state_form_golden(self, scheme):
        text = render_equation(assemble_belavkin_equation(scheme), state_form=True)
        assert text == (GOLDEN / f"derive_{scheme}_state.txt").read_text()

    def test_identity_renders_zero_gain(self):
        text = render_equation(assemble_belavkin_equation("count", X="1"))
        assert "+ (0) (" in text
        assert text == (GOLDEN / "derive_count_identity.txt").read_text()

    def test_full_differential(self):
        eq = assemble_belavkin_equation("count")
        d = eq.differential()
        assert d.part(Increment("dL", "s", "s")) == counting_gain_target()
        # dt coefficient: E(L(X)) - eta E(V* V)
        vv = filtered([SysSymbol("V_s", True), SysSymbol("V_s")])
        assert d.part(Increment("dt")) == eq.drift - counting_gain_target() * vv

    def test_homodyne_dual_matches_state_filter(self):
        """``E(X) = Tr(rho X)`` turns the symbolic gain into the diffusive state gain."""
        gen = np.random.default_rng(11)
        m = resonance_fluorescence(rabi=0.8)
        rho = np.array([[0.4, 0.1 + 0.2j], [0.1 - 0.2j, 0.6]])
        eq = assemble_belavkin_equation("homodyne")
        for _ in range(3):
            X = gen.normal(size=(2, 2)) + 1j * gen.normal(size=(2, 2))
            eta = evaluate(eq.gain, {"V_s": m.op("s"), "X": X}, {"phi": 0.3}, rho=rho)[0, 0]
            assert abs(eta - np.trace(X @ homodyne_gain(m, HomodyneSpec(0.0, phi0=0.3), rho))) <= 1e-12
