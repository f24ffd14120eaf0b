import math
from dataclasses import replace

from ptqnf import checks
from ptqnf.enums import CheckName, CheckStatus
from ptqnf.normal_form import cnf, qnf
from ptqnf.spectra import ScalingRecord, SweepRecord
from ptqnf.symbol import EXACT, Generator, PotentialSpec, Symbol, build_potential
from ptqnf.tests.test_base import BaseCase
from ptqnf.weyl import BasisWindow


class TestStructuralChecks(BaseCase):
    def setUp(self) -> None:
        super().setUp()
        self.quantum = qnf(self.single_generator, self.golden, 1.0, 4, self.policy)
        self.classical = cnf(self.single_generator, self.golden, 4, self.policy)
        self.results = [self.quantum, self.classical]
        spec = PotentialSpec((Generator((1, 0), 1, 1.0),), pstep=1.0, dim=2, extra_atoms=(((0, 0), 1, 0.5j),))
        self.broken = build_potential(spec)

    def test_pt_input_passes(self):
        window = BasisWindow(2, 6, margin=4)
        outcomes = [
            checks.check_potential_symmetry(self.single_generator, 1e-12),
            checks.check_pt_matrix(self.single_generator, [1.0, 0.5], window, self.golden, 1e-12),
            checks.check_reality(self.results, 1e-12),
            checks.check_imag_w(self.results, 1e-12),
            checks.check_odd_vanishing(self.results, 1e-12),
            checks.check_parity_ladder(self.results, 1e-12),
            checks.check_homological(self.results, 1e-12),
            checks.check_graded_vs_literal(self.single_generator, self.results, 1e-12),
            checks.check_commutator_oracle(self.single_generator, self.results, window, 1e-10),
            checks.check_linear_rule(self.results, window, 1e-12),
            checks.check_bracket_properties(self.single_generator, self.results, 1e-12),
            checks.check_classical_lie_transform(self.single_generator, self.classical, self.policy, 1e-12),
        ]
        for outcome in outcomes:
            assert outcome.status == CheckStatus.PASS, outcome.name

        oracle = outcomes[8]
        assert set(oracle.detail) == {"V,W_1@1.0", "W_1,W_2@1.0", "V,B_2@1.0"}

    def test_broken_input_fails(self):
        r = qnf(self.broken, self.golden, 1.0, 2, EXACT)
        assert checks.check_potential_symmetry(self.broken, 1e-12).failed
        with self.assertLogs("ptqnf.checks", level="ERROR"):
            reality = checks.check_reality([r], 1e-12)
        assert reality.failed
        assert reality.as_dict()["name"] == "reality"
        assert checks.check_pt_matrix(self.broken, [1.0], BasisWindow(2, 4, margin=2), self.golden, 1e-12).failed

    def test_classical_lie_transform_detects_wrong_generator(self):
        # -- Set up
        W = list(self.classical.W)
        W[1] = W[1] + Symbol.from_atoms(2, 1.0, [((1, 1), 0, 1e-3j), ((-1, -1), 0, 1e-3j)])
        perturbed = replace(self.classical, W=W)

        # -- Run
        outcome = checks.check_classical_lie_transform(self.single_generator, perturbed, self.policy, 1e-12)

        # -- Check
        assert outcome.failed
        assert outcome.detail["b_1"] <= 1e-12
        assert outcome.detail["b_2"] > 1e-4

        exact = checks.check_classical_lie_transform(self.single_generator, self.classical, self.policy, 1e-12)
        assert list(exact.detail) == ["b_1", "b_2", "b_3", "b_4"]
        assert exact.residual <= 1e-12

    def test_oracle_skipped_without_room(self):
        window = BasisWindow(2, 3, margin=0)
        outcome = checks.check_commutator_oracle(self.single_generator, self.results, window, 1e-10)
        assert outcome.status == CheckStatus.SKIPPED
        assert math.isnan(outcome.residual)

    def test_literal_skipped_at_first_order(self):
        r = qnf(self.single_generator, self.golden, 1.0, 1, EXACT)
        assert checks.check_graded_vs_literal(self.single_generator, [r], 1e-12).status == CheckStatus.SKIPPED


class TestSpectralChecks(BaseCase):
    def scaling(self, ratio, status) -> ScalingRecord:
        return ScalingRecord(0.05, 2, 1e-6, 1e-6 / ratio, ratio, 8.0, 8.0 / 3, 24.0, status)

    def test_order_scaling(self):
        assert checks.check_order_scaling([]).status == CheckStatus.SKIPPED
        assert checks.check_order_scaling([self.scaling(8.5, CheckStatus.PASS)]).status == CheckStatus.PASS
        failing = checks.check_order_scaling(
            [self.scaling(8.5, CheckStatus.PASS), self.scaling(90.0, CheckStatus.FAIL)]
        )
        assert failing.failed

        vacuous = ScalingRecord(1e-9, 2, 0.0, 0.0, math.nan, 8.0, 8.0 / 3, 24.0, CheckStatus.VACUOUS)
        assert checks.check_order_scaling([vacuous]).status == CheckStatus.VACUOUS

    def test_classical_limit(self):
        record = SweepRecord(hbars=(0.1, 0.05), order=2, exponents=(math.nan, 2.01))
        assert checks.check_classical_limit(record, (1.7, 2.3)).status == CheckStatus.PASS

        record = SweepRecord(hbars=(0.1, 0.05), order=2, exponents=(math.nan, 3.9))
        assert checks.check_classical_limit(record, (1.7, 2.3)).failed

        record = SweepRecord(hbars=(0.1, 0.05), order=1, exponents=(math.nan,))
        assert checks.check_classical_limit(record, (1.7, 2.3)).status == CheckStatus.VACUOUS

    def test_skipped_result(self):
        outcome = checks.skipped(CheckName.SPECTRAL_REALITY, "disabled")
        assert outcome.as_dict()["status"] == "SKIPPED"
        assert outcome.as_dict()["detail"] == {"reason": "disabled"}
        assert not outcome.failed
