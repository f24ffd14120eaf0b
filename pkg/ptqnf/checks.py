"""
Named structural and oracle checks. Each returns a CheckResult with a numeric residual and the tolerance it was
held to; a run fails iff some enabled check has status FAIL.
"""

import logging
import math
from dataclasses import dataclass, field

from ptqnf.enums import CheckName, CheckStatus, Mode, Parity
from ptqnf.frequency import Frequency
from ptqnf.normal_form import NormalFormResult, vk_literal
from ptqnf.spectra import RadiusStability, ScalingRecord, SpectralTable, SweepRecord
from ptqnf.symbol import (
    EXACT,
    LSymbol,
    Symbol,
    TruncationPolicy,
    bracket_with_L,
    imag_residual,
    moyal_bracket,
    parity_J,
    parity_residual,
    poisson_bracket,
    reality_residual,
    rho_norm,
)
from ptqnf.weyl import BasisWindow, commutator_symbol_check, pt_symmetry_check

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: CheckName
    status: CheckStatus
    residual: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == CheckStatus.FAIL

    def as_dict(self) -> dict:
        return {
            "name": self.name.name.lower(),
            "status": self.status.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _result(
    name: CheckName, residual: float, tolerance: float, detail: dict = None, passed: bool = None
) -> CheckResult:
    if passed is None:
        passed = residual <= tolerance
    status = CheckStatus.PASS if passed else CheckStatus.FAIL
    if status == CheckStatus.FAIL:
        logger.error(f"Check {name.name.lower()} failed: residual {residual:.3e} > tolerance {tolerance:.1e}")
    else:
        logger.debug(f"Check {name.name.lower()} passed: residual {residual:.3e}")
    return CheckResult(name, status, residual, tolerance, detail or {})


def skipped(name: CheckName, reason: str) -> CheckResult:
    return CheckResult(name, CheckStatus.SKIPPED, math.nan, math.nan, {"reason": reason})


def _relative(D: Symbol, reference: Symbol, rho: float) -> float:
    return rho_norm(D, rho) / max(1.0, rho_norm(reference, rho))


def check_potential_symmetry(V: Symbol, tol: float) -> CheckResult:
    """Real Fourier coefficients and x-oddness of the potential."""
    reality = reality_residual(V)
    _, odd = parity_residual(V)
    return _result(CheckName.POTENTIAL_SYMMETRY, max(reality, odd), tol, {"reality": reality, "oddness": odd})


def check_pt_matrix(V: Symbol, hbars, w: BasisWindow, f: Frequency, tol: float) -> CheckResult:
    residuals = {str(hbar): pt_symmetry_check(V, hbar, w, f) for hbar in hbars}
    return _result(CheckName.PT_MATRIX, max(residuals.values()), tol, residuals)


def _mass(F: Symbol) -> float:
    return rho_norm(F, 0.0)


def check_reality(results, tol: float) -> CheckResult:
    detail = {}
    for r in results:
        detail[f"{r.mode.name.lower()}_{r.hbar}"] = [reality_residual(b, _mass(v)) for b, v in zip(r.B, r.V_terms)]
    return _result(CheckName.REALITY, max((max(v, default=0.0) for v in detail.values()), default=0.0), tol, detail)


def check_imag_w(results, tol: float) -> CheckResult:
    detail = {}
    for r in results:
        detail[f"{r.mode.name.lower()}_{r.hbar}"] = [imag_residual(w, _mass(v)) for w, v in zip(r.W, r.V_terms)]
    return _result(CheckName.IMAG_W, max((max(v, default=0.0) for v in detail.values()), default=0.0), tol, detail)


def check_odd_vanishing(results, tol: float) -> CheckResult:
    """|B_k|_rho for odd k, relative to max(1, |V_k|_rho), allowed up to the cumulative truncation ledger."""
    worst = 0.0
    passed = True
    detail = {}
    for r in results:
        rho = r.policy.rho
        ledger = r.ledger
        rows = []
        for k in range(1, r.order + 1, 2):
            norm_b = rho_norm(r.B[k - 1], rho)
            relative = norm_b / max(1.0, rho_norm(r.V_terms[k - 1], rho))
            passed &= relative <= tol or norm_b <= ledger[k - 1]
            worst = max(worst, relative)
            rows.append({"k": k, "norm_B": norm_b, "ledger": ledger[k - 1]})
        detail[f"{r.mode.name.lower()}_{r.hbar}"] = rows
    return _result(CheckName.ODD_VANISHING, worst, tol, detail, passed)


def check_parity_ladder(results, tol: float) -> CheckResult:
    """V_k has parity (-1)^k and W_k parity (-1)^(k+1)."""
    worst = 0.0
    detail = {}
    for r in results:
        labels = []
        for k, (vk, wk) in enumerate(zip(r.V_terms, r.W), start=1):
            v_even, v_odd = parity_residual(vk)
            w_even, w_odd = parity_residual(wk)
            worst = max(worst, v_even if k % 2 == 0 else v_odd, w_odd if k % 2 == 0 else w_even)
            labels.append([parity_J(vk, tol).name, parity_J(wk, tol).name])
        detail[f"{r.mode.name.lower()}_{r.hbar}"] = labels
    return _result(CheckName.PARITY_LADDER, worst, tol, detail)


def check_homological(results, tol: float) -> CheckResult:
    worst = 0.0
    for r in results:
        L = LSymbol(r.frequency)
        for vk, bk, wk in zip(r.V_terms, r.B, r.W):
            worst = max(worst, _relative(bracket_with_L(wk, L) + vk - bk, vk, r.policy.rho))
    return _result(CheckName.HOMOLOGICAL_RESIDUAL, worst, tol)


def check_graded_vs_literal(V: Symbol, results, tol: float, kmax: int = 4) -> CheckResult:
    worst = 0.0
    compared = 0
    for r in results:
        for k in range(2, min(kmax, r.order) + 1):
            literal = vk_literal(r.W, V, r.frequency, k, r.hbar, r.policy)
            worst = max(worst, _relative(literal - r.V_terms[k - 1], r.V_terms[k - 1], r.policy.rho))
            compared += 1
    if compared == 0:
        return skipped(CheckName.GRADED_VS_LITERAL, "order below 2")
    return _result(CheckName.GRADED_VS_LITERAL, worst, tol, {"orders_compared": compared})


def _fitting_pairs(V: Symbol, r: NormalFormResult, margin: int):
    candidates = [("V", V, "W_1", r.W[0])]
    if r.order >= 2:
        candidates.append(("W_1", r.W[0], "W_2", r.W[1]))
        candidates.append(("V", V, "B_2", r.B[1]))
    return [c for c in candidates if c[1].q_spread + c[3].q_spread <= margin]


def check_commutator_oracle(V: Symbol, results, w: BasisWindow, tol: float) -> CheckResult:
    """Mat({F,G}_M) against (Mat G Mat F - Mat F Mat G)/(i hbar) for pairs drawn from the normal form."""
    detail = {}
    for r in results:
        if r.mode != Mode.QUANTUM:
            continue
        for name_f, F, name_g, G in _fitting_pairs(V, r, w.margin):
            detail[f"{name_f},{name_g}@{r.hbar}"] = commutator_symbol_check(F, G, r.hbar, w, r.frequency)
    if not detail:
        return skipped(CheckName.COMMUTATOR_ORACLE, "no quantum pair fits inside the interior margin")
    return _result(CheckName.COMMUTATOR_ORACLE, max(detail.values()), tol, detail)


def check_linear_rule(results, w: BasisWindow, tol: float) -> CheckResult:
    detail = {}
    for r in results:
        if r.mode != Mode.QUANTUM:
            continue
        L = LSymbol(r.frequency)
        for k, wk in enumerate(r.W, start=1):
            if wk.q_spread <= w.margin:
                detail[f"W_{k}@{r.hbar}"] = commutator_symbol_check(wk, L, r.hbar, w, r.frequency)
    if not detail:
        return skipped(CheckName.LINEAR_RULE_ORACLE, "no generator fits inside the interior margin")
    return _result(CheckName.LINEAR_RULE_ORACLE, max(detail.values()), tol, detail)


def check_bracket_properties(V: Symbol, results, tol: float) -> CheckResult:
    """
    Bracket identities on the run's own symbols: x-independent pairs commute, real inputs give an imaginary
    bracket, and J{F,G} = -(JF)(JG).
    """

    detail = {}
    for r in results:
        if r.order < 2:
            continue
        if r.mode == Mode.QUANTUM:
            def bracket(F, G):
                return moyal_bracket(F, G, r.hbar, r.frequency, EXACT)[0]
        else:
            def bracket(F, G):
                return poisson_bracket(F, G, r.frequency, EXACT)[0]

        b2 = r.B[1]
        w1 = r.W[0]
        entry = {"zero_bracket": rho_norm(bracket(b2, b2 * 1j + b2), 0.0)}
        if reality_residual(V) <= tol and reality_residual(b2) <= tol:
            entry["imaginary_closure"] = imag_residual(bracket(V, b2 + V))
        j_w, j_v = parity_J(w1, tol), parity_J(V, tol)
        if Parity.NONE not in (j_w, j_v):
            even, odd = parity_residual(bracket(w1, V))
            entry["parity_rule"] = odd if -(j_w.value * j_v.value) == Parity.ODD.value else even
        detail[f"{r.mode.name.lower()}_{r.hbar}"] = entry
    if not detail:
        return skipped(CheckName.BRACKET_PROPERTIES, "order below 2")
    worst = max(max(d.values()) for d in detail.values())
    return _result(CheckName.BRACKET_PROPERTIES, worst, tol, detail)


def check_classical_limit(sweep: SweepRecord, band) -> CheckResult:
    """Fitted exponent of |B_k(hbar) - b_k| in hbar, per order with nonvanishing deviation."""
    low, high = band
    exponents = {k: e for k, e in enumerate(sweep.exponents, start=1) if math.isfinite(e)}
    if not exponents:
        return CheckResult(CheckName.CLASSICAL_LIMIT, CheckStatus.VACUOUS, math.nan, math.nan, {"exponents": {}})
    off_band = {k: e for k, e in exponents.items() if not low <= e <= high}
    worst = max(abs(e - 2.0) for e in exponents.values())
    return _result(
        CheckName.CLASSICAL_LIMIT,
        worst,
        (high - low) / 2,
        {"exponents": {str(k): e for k, e in exponents.items()}, "band": [low, high]},
        passed=not off_band,
    )


def check_classical_lie_transform(
    V: Symbol, classical: NormalFormResult, policy: TruncationPolicy, tol: float
) -> CheckResult:
    """
    The classical generators fed through exp(ad_w) reproduce the classical b_k.

    Each order is expanded over all compositions of the generators, without the graded table cnf builds b_k from.
    """

    f = classical.frequency
    L = LSymbol(f)
    detail = {}
    for k, (wk, bk) in enumerate(zip(classical.W, classical.B), start=1):
        vk = V if k == 1 else vk_literal(classical.W, V, f, k, 0.0, policy)
        detail[f"b_{k}"] = _relative(bracket_with_L(wk, L) + vk - bk, bk, policy.rho)
    return _result(CheckName.CLASSICAL_LIE_TRANSFORM, max(detail.values(), default=0.0), tol, detail)


def check_spectral_reality(tables, tol: float) -> CheckResult:
    detail = {f"{t.eps}_{t.hbar}": t.max_interior_imag for t in tables}
    if not detail:
        return skipped(CheckName.SPECTRAL_REALITY, "no spectra computed")
    return _result(CheckName.SPECTRAL_REALITY, max(detail.values()), tol, detail)


def check_spectra_residual(tables: list[SpectralTable]) -> CheckResult:
    """Every comparison produced a finite max interior residual with at least one unambiguous row."""
    detail = {f"{t.eps}_{t.hbar}": t.max_interior_residual for t in tables}
    if not detail:
        return skipped(CheckName.SPECTRA_RESIDUAL, "no spectra computed")
    worst = max(detail.values())
    paired = all(t.ambiguous_count < len(t.rows) for t in tables)
    return _result(CheckName.SPECTRA_RESIDUAL, worst, math.inf, detail, passed=math.isfinite(worst) and paired)


def check_order_scaling(records: list[ScalingRecord]) -> CheckResult:
    if not records:
        return skipped(CheckName.ORDER_SCALING, "no nonzero eps")
    detail = {f"{rec.eps}": rec.as_dict() for rec in records}
    statuses = {rec.status for rec in records}
    offsets = [abs(math.log2(rec.ratio / rec.target)) for rec in records if math.isfinite(rec.ratio) and rec.ratio > 0]
    worst = max(offsets, default=math.nan)
    band = math.log2(records[0].upper / records[0].target)
    if statuses == {CheckStatus.VACUOUS}:
        return CheckResult(CheckName.ORDER_SCALING, CheckStatus.VACUOUS, worst, band, detail)
    return _result(
        CheckName.ORDER_SCALING,
        worst,
        band,
        detail,
        passed=CheckStatus.FAIL not in statuses,
    )


def check_radius_stability(record: RadiusStability, tol: float) -> CheckResult:
    return _result(CheckName.RADIUS_STABILITY, record.relative_change, tol, record.as_dict(), passed=record.stable)
