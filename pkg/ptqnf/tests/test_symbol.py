import math

import numpy as np
import pytest

from ptqnf.enums import Parity
from ptqnf.symbol import (
    EXACT,
    Generator,
    LSymbol,
    PotentialSpec,
    Symbol,
    TruncationPolicy,
    add,
    bracket_with_L,
    build_potential,
    evaluate,
    fourier_coeff,
    imag_residual,
    is_imag_coeffs,
    is_real_coeffs,
    moyal_bracket,
    parity_J,
    parity_residual,
    poisson_bracket,
    q_slice,
    reality_residual,
    rho_norm,
    scale,
    star_product,
    truncate,
)
from ptqnf.tests.test_base import BaseCase


def atom(q, m, c, dim=2, pstep=1.0):
    return Symbol.from_atoms(dim, pstep, [(q, m, c)])


class TestSymbolArithmetic(BaseCase):
    def test_canonical_form(self):
        # -- Set up
        F = Symbol.from_atoms(2, 1.0, [((1, 0), 1, 1.0), ((0, 0), 0, 2.0), ((1, 0), 1, -1.0), ((-1, 2), 0, 3j)])

        # -- Check
        assert F.atoms() == {(-1, 2, 0): 3j, (0, 0, 0): 2.0}
        assert [tuple(k) for k in F.keys] == sorted(tuple(k) for k in F.keys)
        with pytest.raises(ValueError):
            F.keys[0, 0] = 5

    def test_add_scale(self):
        F = self.single_generator
        assert add(F, scale(F, -1)).is_zero
        assert scale(Symbol.zero(2, 1.0), 3 + 1j).is_zero
        assert scale(F, 0).is_zero

        G = atom((0, 1), 2, 0.5)
        union = F + G
        assert len(union) == len(F) + 1
        assert union.coefficient((0, 1), 2) == 0.5

    def test_incompatible(self):
        with pytest.raises(ValueError):
            add(atom((1, 0), 0, 1.0), atom((1, 0), 0, 1.0, pstep=0.5))
        with pytest.raises(ValueError):
            add(atom((1, 0), 0, 1.0), atom((1,), 0, 1.0, dim=1))

    def test_rho_norm(self):
        assert rho_norm(Symbol.zero(2, 1.0), 3.0) == 0.0
        assert rho_norm(atom((1, 0), 1, 0.5), 3.0) == pytest.approx(0.5 * math.exp(6.0))
        assert rho_norm(atom((1, -2), -1, 1j, pstep=0.5), 1.0) == pytest.approx(math.exp(3.5))

        rng = np.random.default_rng(7)
        for _ in range(20):
            F, G = self.random_symbol(rng), self.random_symbol(rng)
            assert rho_norm(F + G, 3.0) <= (rho_norm(F, 3.0) + rho_norm(G, 3.0)) * (1 + 1e-12)

    def test_truncate(self):
        F = Symbol.from_atoms(2, 1.0, [((1, 0), 0, 1.0), ((0, 1), 0, 1e-20), ((5, 0), 0, 1.0), ((0, 0), 9, 1.0)])

        same, dropped = truncate(F, EXACT)
        assert same.atoms() == F.atoms()
        assert dropped == 0.0

        policy = TruncationPolicy(eta=1e-14, relative=True, qmax=4, mmax=8, rho=3.0)
        kept, dropped = truncate(F, policy)
        assert kept.atoms() == {(1, 0, 0): 1.0}
        assert dropped == pytest.approx(rho_norm(F - kept, 3.0))

        everything, dropped = truncate(F, TruncationPolicy(eta=10.0, relative=False))
        assert everything.is_zero
        assert dropped == pytest.approx(rho_norm(F, 3.0))

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            TruncationPolicy(rho=1.5)
        with pytest.raises(ValueError):
            TruncationPolicy(eta=-1.0)
        assert TruncationPolicy().doubled().qmax == 64


class TestPotential(BaseCase):
    def test_single_generator(self):
        V = self.single_generator
        assert V.atoms() == {(1, 0, 1): 0.25, (1, 0, -1): 0.25, (-1, 0, 1): -0.25, (-1, 0, -1): -0.25}
        assert is_real_coeffs(V)
        assert parity_J(V) == Parity.ODD

        # F_(1,0)(xi) = cos(delta <omega,xi>) / 2
        xi = np.array([0.3, -0.7])
        t = self.golden.dot(xi)
        assert fourier_coeff(V, (1, 0), xi, self.golden) == pytest.approx(0.5 * math.cos(t))
        assert fourier_coeff(V, (-1, 0), xi, self.golden) == pytest.approx(-0.5 * math.cos(t))

    def test_empty_and_zero_q(self):
        assert build_potential(PotentialSpec((), pstep=1.0, dim=2)).is_zero
        with pytest.raises(ValueError):
            build_potential(PotentialSpec((Generator((0, 0), 1, 1.0),), pstep=1.0, dim=2))
        with pytest.raises(ValueError):
            Generator((1, 0), 1, 1j)

    def test_pt_at_sample_points(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            V = self.random_potential(rng)
            xi, x = rng.normal(size=2), rng.uniform(0, 2 * math.pi, size=2)
            assert np.conj(evaluate(V, xi, -x, self.golden)) == pytest.approx(evaluate(V, xi, x, self.golden))
            assert is_real_coeffs(V)
            assert is_imag_coeffs(scale(V, 1j))
            assert parity_J(V) == Parity.ODD

    def test_extra_atoms_break_symmetry(self):
        spec = PotentialSpec((Generator((1, 0), 1, 1.0),), pstep=1.0, dim=2, extra_atoms=(((0, 0), 1, 0.5j),))
        V = build_potential(spec)
        assert not is_real_coeffs(V)
        assert parity_J(V) == Parity.NONE


class TestPredicates(BaseCase):
    def test_parity(self):
        even = atom((0, 0), 1, 2.0)
        assert parity_J(even) == Parity.EVEN
        assert parity_J(Symbol.zero(2, 1.0)) == Parity.EVEN
        assert parity_J(self.single_generator + even) == Parity.NONE

        assert parity_residual(Symbol.zero(2, 1.0)) == (0.0, 0.0)
        assert parity_residual(self.single_generator) == pytest.approx((2.0, 0.0))
        assert parity_residual(self.single_generator + even) == pytest.approx((2.0 / 3, 4.0 / 3))

    def test_reality_residuals(self):
        F = atom((1, 0), 1, 1.0)
        # c_(q,1) = 1 with no c_(q,-1): real and imaginary parts carry equal mass
        assert reality_residual(F) == pytest.approx(1.0)
        assert imag_residual(F) == pytest.approx(1.0)
        assert reality_residual(F + atom((1, 0), -1, 1.0)) == 0.0
        assert reality_residual(Symbol.zero(2, 1.0)) == 0.0

    def test_reality_criteria_random(self):
        rng = np.random.default_rng(53)
        for _ in range(100):
            atoms = []
            for _ in range(3):
                q = tuple(int(v) for v in rng.integers(-2, 3, size=2))
                m = int(rng.integers(-2, 3))
                c = complex(rng.normal(), rng.normal())
                atoms += [(q, m, c), (q, -m, c.conjugate())]
            F = Symbol.from_atoms(2, 1.0, atoms)
            assert reality_residual(F) <= 1e-15
            assert imag_residual(F * 1j) <= 1e-15

            xi = rng.uniform(-3.0, 3.0, size=2)
            for q, _, _ in atoms:
                assert abs(fourier_coeff(F, q, xi, self.golden).imag) <= 1e-12
                assert abs(fourier_coeff(F * 1j, q, xi, self.golden).real) <= 1e-12

    def test_evaluate(self):
        F = atom((1, -1), 2, 0.5 - 0.25j, pstep=0.5)
        xi, x = np.array([0.2, 0.1]), np.array([1.0, 2.0])
        phase = 2 * 0.5 * self.golden.dot(xi) + (1.0 - 2.0)
        assert evaluate(F, xi, x, self.golden) == pytest.approx((0.5 - 0.25j) * np.exp(1j * phase))
        assert evaluate(Symbol.zero(2, 1.0), xi, x, self.golden) == 0

        rng = np.random.default_rng(3)
        G = self.random_symbol(rng, n_atoms=6)
        qs = {tuple(int(v) for v in k[:-1]) for k in G.keys}
        total = sum(fourier_coeff(G, q, xi, self.golden) * np.exp(1j * np.dot(q, x)) for q in qs)
        assert evaluate(G, xi, x, self.golden) == pytest.approx(total)

        with pytest.raises(ValueError):
            evaluate(F, [0.1], x, self.golden)

    def test_q_slices(self):
        V = self.single_generator + atom((0, 0), 2, 1.0)
        assert q_slice(V, (1, 0)).atoms() == {(1, 0, 1): 0.25, (1, 0, -1): 0.25}
        assert V.slice_q0().atoms() == {(0, 0, 2): 1.0}
        assert V.without_q0().atoms() == self.single_generator.atoms()
        assert V.q_spread == 1
        assert V.m_spread == 2


class TestBrackets(BaseCase):
    def test_x_independent_commute(self):
        F = Symbol.from_atoms(2, 1.0, [((0, 0), 1, 1.0), ((0, 0), -2, 0.3j)])
        G = Symbol.from_atoms(2, 1.0, [((0, 0), 3, 2.0)])
        assert moyal_bracket(F, G, 1.0, self.golden)[0].is_zero
        assert poisson_bracket(F, G, self.golden)[0].is_zero
        assert bracket_with_L(F, LSymbol(self.golden)).is_zero

        rng = np.random.default_rng(59)
        for _ in range(100):
            F, G = self.random_symbol(rng).slice_q0(), self.random_symbol(rng).slice_q0()
            assert moyal_bracket(F, G, float(rng.uniform(0.1, 1.0)), self.golden)[0].is_zero
            assert poisson_bracket(F, G, self.golden)[0].is_zero

    def test_self_bracket(self):
        assert moyal_bracket(self.single_generator, self.single_generator, 1.0, self.golden)[0].is_zero

    def test_rejects_hbar_zero(self):
        with pytest.raises(ValueError, match="poisson_bracket"):
            moyal_bracket(self.single_generator, self.single_generator, 0.0, self.golden)

    def test_poisson_two_atoms(self):
        F = atom((1, 0), 1, 1.0)
        G = atom((0, 1), 1, 1.0)
        result, dropped = poisson_bracket(F, G, self.golden)
        # delta * (m_G <omega,q_F> - m_F <omega,q_G>) = omega_1 - omega_2
        assert result.atoms() == pytest.approx({(1, 1, 2): 1.0 - self.golden.omega[1]})
        assert dropped == 0.0

    def test_bracket_with_L(self):
        L = LSymbol(self.golden)
        assert bracket_with_L(atom((1, 0), 1, 1.0), L).atoms() == pytest.approx({(1, 0, 1): -1j})
        assert bracket_with_L(atom((1, -1), 0, 2.0), L).atoms() == pytest.approx(
            {(1, -1, 0): -2j * (1 - self.golden.omega[1])}
        )

    def test_antisymmetry_and_bilinearity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            F, G, H = (self.random_symbol(rng) for _ in range(3))
            a, b = complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
            for hbar in (1.0, 0.3):
                fg = moyal_bracket(F, G, hbar, self.golden)[0]
                gf = moyal_bracket(G, F, hbar, self.golden)[0]
                assert rho_norm(fg + gf, 0.0) <= 1e-13 * max(1.0, rho_norm(fg, 0.0))

                lhs = moyal_bracket(F * a + H * b, G, hbar, self.golden)[0]
                rhs = moyal_bracket(F, G, hbar, self.golden)[0] * a + moyal_bracket(H, G, hbar, self.golden)[0] * b
                assert rho_norm(lhs - rhs, 0.0) <= 1e-12 * max(1.0, rho_norm(lhs, 0.0))

            pfg = poisson_bracket(F, G, self.golden)[0]
            pgf = poisson_bracket(G, F, self.golden)[0]
            assert rho_norm(pfg + pgf, 0.0) <= 1e-13 * max(1.0, rho_norm(pfg, 0.0))

    def test_real_inputs_give_imaginary_bracket(self):
        rng = np.random.default_rng(13)
        even = Symbol.from_atoms(
            2, 1.0, [((0, 0), 1, 0.5), ((0, 0), -1, 0.5), ((1, 1), 0, 0.7), ((-1, -1), 0, 0.7)]
        )
        for _ in range(100):
            F, G = self.random_potential(rng, 2), self.random_potential(rng, 2)
            for left, right in ((F, G), (F, even)):
                assert is_imag_coeffs(moyal_bracket(left, right, 1.0, self.golden)[0])
                assert is_imag_coeffs(poisson_bracket(left, right, self.golden)[0])

    def test_parity_product_rule(self):
        rng = np.random.default_rng(17)
        even = Symbol.from_atoms(2, 1.0, [((1, 1), 0, 0.7), ((-1, -1), 0, 0.7), ((0, 0), 1, 0.2)])
        for _ in range(100):
            odd = self.random_potential(rng, 2)
            other = self.random_potential(rng, 2)
            # J{F,G} = -(JF)(JG)
            cases = (
                (moyal_bracket(odd, other, 1.0, self.golden)[0], Parity.ODD),
                (moyal_bracket(odd, even, 0.5, self.golden)[0], Parity.EVEN),
                (poisson_bracket(odd, scale(other, 1j), self.golden)[0], Parity.ODD),
            )
            for result, expected in cases:
                if not result.is_zero:
                    assert parity_J(result) == expected

    def test_poisson_limit(self):
        rng = np.random.default_rng(19)
        for _ in range(5):
            F, G = self.random_symbol(rng), self.random_symbol(rng)
            classical = poisson_bracket(F, G, self.golden)[0]
            errors = [
                rho_norm(moyal_bracket(F, G, hbar, self.golden)[0] - classical, 0.0) for hbar in (0.02, 0.01)
            ]
            if errors[1] > 0:
                assert errors[0] / errors[1] == pytest.approx(4.0, abs=0.5)

    def test_star_product(self):
        F = self.random_symbol(np.random.default_rng(23))
        G = self.random_symbol(np.random.default_rng(29))
        hbar = 0.7
        fg = star_product(F, G, hbar, self.golden)[0]
        gf = star_product(G, F, hbar, self.golden)[0]
        bracket = moyal_bracket(F, G, hbar, self.golden)[0]
        assert rho_norm((gf - fg) * (1 / (1j * hbar)) - bracket, 0.0) <= 1e-12 * rho_norm(bracket, 0.0)

    def test_pruning_ledger(self):
        F = self.single_generator
        G = Symbol.from_atoms(2, 1.0, [((3, 0), 2, 1.0), ((0, 1), 1, 1e-3)])
        policy = TruncationPolicy(eta=1e-2, relative=True, qmax=3, mmax=8, rho=3.0)
        pruned, dropped = moyal_bracket(F, G, 1.0, self.golden, policy)
        full, _ = moyal_bracket(F, G, 1.0, self.golden, EXACT)
        assert dropped == pytest.approx(rho_norm(full - pruned, 3.0))
        assert pruned.q_spread <= 3
