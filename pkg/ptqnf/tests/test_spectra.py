import math

import numpy as np
import pytest

from ptqnf.enums import CheckStatus
from ptqnf.normal_form import cnf, qnf
from ptqnf.spectra import (
    eigen_qnf,
    hbar_sweep,
    match_spectra,
    noise_floor,
    order_scaling_test,
    radius_stability,
    spectral_summary,
)
from ptqnf.symbol import EXACT, Generator, PotentialSpec, build_potential
from ptqnf.tests.test_base import BaseCase
from ptqnf.weyl import BasisWindow


class TestEigenQNF(BaseCase):
    def test_unperturbed(self):
        r = qnf(self.single_generator, self.golden, 0.5, 2, EXACT)
        assert eigen_qnf(r, (2, -1), 0.0, self.golden) == pytest.approx(0.5 * (2 - self.golden.omega[1]))

    def test_second_order(self):
        hbar, eps = 1.0, 0.1
        r = qnf(self.single_generator, self.golden, hbar, 2, EXACT)
        n = (1, 2)
        t = hbar * self.golden.dot(n)
        # B_2(xi) = -(sin(hbar) / (4 hbar)) sin(2 <omega,xi>)
        expected = t - eps**2 * math.sin(hbar) / (4 * hbar) * math.sin(2 * t)
        assert eigen_qnf(r, n, eps, self.golden) == pytest.approx(expected)
        assert eigen_qnf(r, n, -eps, self.golden) == pytest.approx(expected)

    def test_rejects_classical_and_complex(self):
        with pytest.raises(ValueError):
            eigen_qnf(cnf(self.single_generator, self.golden, 2, EXACT), (0, 0), 0.1, self.golden)

        spec = PotentialSpec((Generator((1, 0), 1, 1.0),), pstep=1.0, dim=2, extra_atoms=(((0, 0), 1, 0.5j),))
        r = qnf(build_potential(spec), self.golden, 1.0, 2, EXACT)
        with pytest.raises(ValueError, match="imaginary part"):
            eigen_qnf(r, (1, 0), 0.1, self.golden)
        assert isinstance(eigen_qnf(r, (1, 0), 0.1, self.golden, imag_tol=math.inf), float)


class TestMatchSpectra(BaseCase):
    def setUp(self) -> None:
        super().setUp()
        self.window = BasisWindow(2, 8, margin=4)

    def test_unperturbed_pairs_exactly(self):
        # -- Run
        r = qnf(self.single_generator, self.golden, 1.0, 4, self.policy)
        table = match_spectra(r, self.single_generator, 0.0, 1.0, self.window, self.golden)

        # -- Check
        assert len(table.rows) == 81
        assert table.max_interior_residual <= 1e-14
        assert table.ambiguous_count == 0

    def test_small_eps(self):
        # -- Run
        r = qnf(self.single_generator, self.golden, 1.0, 4, self.policy)
        table = match_spectra(r, self.single_generator, 0.01, 1.0, self.window, self.golden)

        # -- Check
        assert table.ambiguous_count == 0
        assert table.max_interior_residual <= 1e-6
        assert table.max_interior_imag <= 1e-8

        frame = table.to_frame()
        assert list(frame.columns) == [
            "n1",
            "n2",
            "lambda_qnf",
            "re_lambda_oracle",
            "im_lambda_oracle",
            "residual",
            "interior",
            "ambiguous",
        ]
        assert len(frame) == 81
        assert frame["interior"].all()

        summary = spectral_summary(table)
        assert summary["rows"] == 81
        assert summary["max_interior_residual"] == table.max_interior_residual

    def test_sign_of_eps(self):
        r = qnf(self.single_generator, self.golden, 1.0, 4, self.policy)
        plus = match_spectra(r, self.single_generator, 0.02, 1.0, self.window, self.golden)
        minus = match_spectra(r, self.single_generator, -0.02, 1.0, self.window, self.golden)
        for a, b in zip(plus.rows, minus.rows):
            assert a.n == b.n
            assert a.lambda_qnf == pytest.approx(b.lambda_qnf, abs=1e-14)
            assert a.lambda_oracle == pytest.approx(b.lambda_oracle, abs=1e-10)

    def test_interior_stable_under_wider_window(self):
        r = qnf(self.single_generator, self.golden, 1.0, 4, self.policy)
        narrow = match_spectra(r, self.single_generator, 0.05, 1.0, self.window, self.golden)
        wide = match_spectra(r, self.single_generator, 0.05, 1.0, BasisWindow(2, 10, margin=6), self.golden)
        wide_values = {row.n: row.lambda_oracle for row in wide.rows}
        assert set(wide_values) == {row.n for row in narrow.rows}
        for row in narrow.rows:
            assert abs(row.lambda_oracle - wide_values[row.n]) < 1e-8

    def test_invalid_arguments(self):
        r = qnf(self.single_generator, self.golden, 1.0, 2, self.policy)
        with pytest.raises(ValueError):
            match_spectra(r, self.single_generator, 0.01, 0.5, self.window, self.golden)
        with pytest.raises(ValueError):
            match_spectra(r, self.single_generator, 0.01, 1.0, self.window, self.golden, steps=0)


class TestOrderScaling(BaseCase):
    def test_scaling_passes(self):
        # -- Set up
        r = qnf(self.single_generator, self.golden, 1.0, 3, self.policy)

        # -- Run
        record = order_scaling_test(r, self.single_generator, 0.1, 1.0, BasisWindow(2, 8, margin=4), self.golden)

        # -- Check
        assert record.target == 16.0
        assert record.lower == pytest.approx(16.0 / 3)
        assert record.status == CheckStatus.PASS
        assert record.as_dict()["status"] == "PASS"

    def test_vacuous_at_zero_potential(self):
        zero = build_potential(PotentialSpec((), pstep=1.0, dim=2))
        r = qnf(zero, self.golden, 1.0, 2, self.policy)
        record = order_scaling_test(r, zero, 0.1, 1.0, BasisWindow(2, 3, margin=1), self.golden)
        assert record.status == CheckStatus.VACUOUS
        assert math.isnan(record.ratio)

    def test_vacuous_at_eigensolve_noise(self):
        # -- Set up
        r = qnf(self.single_generator, self.golden, 1.0, 6, self.policy)
        window = BasisWindow(2, 10, margin=4)

        # -- Run
        record = order_scaling_test(r, self.single_generator, 0.05, 1.0, window, self.golden)

        # -- Check
        assert record.threshold == pytest.approx(noise_floor(self.single_generator, 0.025, 1.0, window, self.golden))
        assert 2e-13 < record.threshold < 1e-12
        assert record.status == CheckStatus.VACUOUS


class TestSweep(BaseCase):
    def test_second_order_exponent(self):
        # -- Run
        record = hbar_sweep(self.single_generator, self.golden, 2, (0.4, 0.2, 0.1), EXACT)

        # -- Check
        assert math.isnan(record.exponents[0])
        assert record.exponents[1] == pytest.approx(2.0, abs=0.05)
        # deviation of B_2 is 1 - sin(hbar) / hbar
        assert record.deviations[0.1][1] == pytest.approx(1 - math.sin(0.1) / 0.1, rel=1e-8)

        frame = record.to_frame()
        assert list(frame.columns) == ["hbar", "k", "norm_B", "deviation"]
        assert len(frame) == 6
        assert record.as_dict()["hbars"] == [0.4, 0.2, 0.1]

    def test_invalid_sweeps(self):
        for hbars in ((), (0.1, 0.2), (1.5, 0.5), (0.5, 0.5)):
            with pytest.raises(ValueError):
                hbar_sweep(self.single_generator, self.golden, 2, hbars, EXACT)


class TestRadiusStability(BaseCase):
    def test_stable_when_caps_do_not_bind(self):
        stability = radius_stability(self.single_generator, self.golden, 1.0, 4, self.policy)
        assert stability.relative_change == pytest.approx(0.0)
        assert stability.stable
        assert np.isfinite(stability.radius)

    def test_zero_potential(self):
        zero = build_potential(PotentialSpec((), pstep=1.0, dim=2))
        stability = radius_stability(zero, self.golden, 0.0, 2, self.policy)
        assert math.isinf(stability.radius)
        assert stability.stable
