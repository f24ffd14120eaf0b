"""
Eigenvalues from the exact quantization formula and their comparison with the matrix oracle.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ptqnf.enums import CheckStatus, Mode
from ptqnf.frequency import Frequency
from ptqnf.normal_form import NormalFormResult, cnf, convergence_diagnostics, qnf
from ptqnf.symbol import Symbol, TruncationPolicy, fourier_coeff, rho_norm
from ptqnf.weyl import BasisWindow, assemble_H, eigenvalues, operator_norm

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 8
DEFAULT_MAX_HALVINGS = 6
DEFAULT_PAIRING_TOL = 1e-6
DEFAULT_QNF_IMAG_TOL = 1e-10
NOISE_FACTOR = 4.0


@dataclass(frozen=True)
class SpectralRow:
    n: tuple
    lambda_qnf: float
    lambda_oracle: complex
    residual: float
    interior: bool
    ambiguous: bool


@dataclass
class SpectralTable:
    eps: float
    hbar: float
    order: int
    ncut: int
    rows: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        dim = len(self.rows[0].n) if self.rows else 0
        records = []
        for row in self.rows:
            record = {f"n{i + 1}": v for i, v in enumerate(row.n)}
            record.update(
                {
                    "lambda_qnf": row.lambda_qnf,
                    "re_lambda_oracle": row.lambda_oracle.real,
                    "im_lambda_oracle": row.lambda_oracle.imag,
                    "residual": row.residual,
                    "interior": row.interior,
                    "ambiguous": row.ambiguous,
                }
            )
            records.append(record)
        columns = [f"n{i + 1}" for i in range(dim)] + [
            "lambda_qnf",
            "re_lambda_oracle",
            "im_lambda_oracle",
            "residual",
            "interior",
            "ambiguous",
        ]
        return pd.DataFrame.from_records(records, columns=columns)

    def _paired(self) -> list:
        return [row for row in self.rows if row.interior and not row.ambiguous]

    @property
    def max_interior_residual(self) -> float:
        paired = self._paired()
        return max((row.residual for row in paired), default=0.0)

    @property
    def max_interior_imag(self) -> float:
        return max((abs(row.lambda_oracle.imag) for row in self.rows if row.interior), default=0.0)

    @property
    def ambiguous_count(self) -> int:
        return sum(row.ambiguous for row in self.rows)


def spectral_summary(table: SpectralTable) -> dict:
    return {
        "eps": table.eps,
        "hbar": table.hbar,
        "order": table.order,
        "ncut": table.ncut,
        "rows": len(table.rows),
        "max_interior_residual": table.max_interior_residual,
        "max_interior_imag": table.max_interior_imag,
        "ambiguous_rows": table.ambiguous_count,
    }


def eigen_qnf(r: NormalFormResult, n, eps: float, f: Frequency, imag_tol: float = DEFAULT_QNF_IMAG_TOL) -> float:
    """
    lambda_n = hbar <omega,n> + sum_k eps^k B_k(n hbar, hbar).

    :param r: quantum normal form
    :param n: integer multi-index
    :param eps: perturbation strength
    :param f: frequency
    :param imag_tol: largest admissible |Im B_k(n hbar)|
    :raises ValueError: for a classical normal form, or when some B_k(n hbar) is not real
    """

    if r.mode != Mode.QUANTUM:
        raise ValueError("The quantization formula needs a quantum normal form")
    xi = r.hbar * np.asarray(n, dtype=float)
    value = r.hbar * f.dot(n)
    for k, bk in enumerate(r.B, start=1):
        bk_n = fourier_coeff(bk, np.zeros(f.dim, dtype=np.int64), xi, f)
        if abs(bk_n.imag) > imag_tol:
            raise ValueError(f"B_{k} at n={tuple(n)} has imaginary part {bk_n.imag:.3e} above {imag_tol:.1e}")
        value += eps**k * bk_n.real
    return value


def _nearest(current: np.ndarray, values: np.ndarray):
    """Nearest-eigenvalue claims and a mask of rows whose claim is unique and well separated."""
    distance = np.abs(current[:, None] - values[None, :])
    order = np.argsort(distance, axis=1)
    claims = order[:, 0]
    rows = np.arange(len(current))
    d1 = distance[rows, claims]
    d2 = distance[rows, order[:, 1]] if values.size > 1 else np.full(len(current), np.inf)
    _, inverse, counts = np.unique(claims, return_inverse=True, return_counts=True)
    clean = (d1 <= 0.5 * d2) & (counts[inverse.reshape(-1)] == 1)
    return claims, clean


class _Continuation:
    def __init__(self, V: Symbol, hbar: float, w: BasisWindow, f: Frequency, max_halvings: int):
        self.V = V
        self.hbar = hbar
        self.w = w
        self.f = f
        self.max_halvings = max_halvings
        self.halvings = 0

    def spectrum(self, eps: float) -> np.ndarray:
        return eigenvalues(assemble_H(self.V, eps, self.hbar, self.w, self.f))

    def advance(self, current: np.ndarray, e0: float, e1: float, depth: int = 0):
        values = self.spectrum(e1)
        claims, clean = _nearest(current, values)
        if clean.all() or depth >= self.max_halvings:
            return values[claims], values, ~clean
        self.halvings += 1
        logger.debug(f"Pairing step {e0:.4g} -> {e1:.4g} ambiguous for {int((~clean).sum())} rows; halving")
        mid = 0.5 * (e0 + e1)
        current, _, failed_first = self.advance(current, e0, mid, depth + 1)
        tracked, values, failed_second = self.advance(current, mid, e1, depth + 1)
        return tracked, values, failed_first | failed_second


def match_spectra(
    r: NormalFormResult,
    V: Symbol,
    eps: float,
    hbar: float,
    w: BasisWindow,
    f: Frequency,
    steps: int = DEFAULT_STEPS,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    pairing_tol: float = DEFAULT_PAIRING_TOL,
    qnf_imag_tol: float = DEFAULT_QNF_IMAG_TOL,
) -> SpectralTable:
    """
    Pair QNF eigenvalues with oracle eigenvalues on the interior window.

    Oracle eigenvalues are followed from the eps = 0 diagonal in `steps` increments by nearest-neighbour
    assignment; a step is halved, up to max_halvings times, when two tracks claim the same eigenvalue or a claim
    is not well separated from the runner-up. Rows that stay unresolved, and rows whose QNF value has two oracle
    eigenvalues within pairing_tol, are flagged as ambiguous.

    :returns: SpectralTable with one row per interior multi-index
    """

    if r.hbar != hbar:
        raise ValueError(f"Normal form computed at hbar={r.hbar}, comparison requested at hbar={hbar}")
    if steps < 1:
        raise ValueError(f"Continuation needs at least one step, got {steps}")

    interior = np.flatnonzero(w.interior_mask)
    basis = w.indices[interior]
    tracked = (hbar * (basis.astype(float) @ f.vector)).astype(np.complex128)
    unresolved = np.zeros(len(interior), dtype=bool)

    continuation = _Continuation(V, hbar, w, f, max_halvings)
    if eps == 0:
        values = continuation.spectrum(0.0)
        claims, clean = _nearest(tracked, values)
        tracked, unresolved = values[claims], ~clean
    else:
        grid = np.linspace(0.0, eps, steps + 1)
        for e0, e1 in zip(grid[:-1], grid[1:]):
            tracked, values, failed = continuation.advance(tracked, e0, e1)
            unresolved |= failed
    if continuation.halvings:
        logger.debug(f"Pairing at eps={eps}, hbar={hbar} needed {continuation.halvings} step halvings")

    table = SpectralTable(eps=eps, hbar=hbar, order=r.order, ncut=w.ncut)
    for i, n in enumerate(basis):
        lam_qnf = eigen_qnf(r, n, eps, f, qnf_imag_tol)
        crowded = int((np.abs(values - lam_qnf) <= pairing_tol).sum()) >= 2
        table.rows.append(
            SpectralRow(
                n=tuple(int(x) for x in n),
                lambda_qnf=lam_qnf,
                lambda_oracle=complex(tracked[i]),
                residual=float(abs(lam_qnf - tracked[i])),
                interior=True,
                ambiguous=bool(unresolved[i] or crowded),
            )
        )
    if table.ambiguous_count:
        logger.warning(f"{table.ambiguous_count} interior rows at eps={eps}, hbar={hbar} could not be paired")
    return table


@dataclass(frozen=True)
class ScalingRecord:
    eps: float
    order: int
    residual: float
    residual_half: float
    ratio: float
    target: float
    lower: float
    upper: float
    status: CheckStatus
    threshold: float = 0.0

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "order": self.order,
            "residual": self.residual,
            "residual_half": self.residual_half,
            "ratio": self.ratio,
            "target": self.target,
            "band": [self.lower, self.upper],
            "status": self.status.name,
            "threshold": self.threshold,
        }


def noise_floor(V: Symbol, eps: float, hbar: float, w: BasisWindow, f: Frequency, factor: float = NOISE_FACTOR):
    """
    Eigenvalue error a dense double-precision solve of H(eps) can reach on its own.

    Estimated as factor * machine epsilon * |H|_2 * sqrt(size); residuals below it carry no truncation signal.
    """

    H = assemble_H(V, eps, hbar, w, f)
    return factor * float(np.finfo(float).eps) * operator_norm(H) * math.sqrt(w.size)


def order_scaling_test(
    r: NormalFormResult,
    V: Symbol,
    eps: float,
    hbar: float,
    w: BasisWindow,
    f: Frequency,
    factor: float = 3.0,
    floor: float = 1e-13,
    **continuation,
) -> ScalingRecord:
    """
    Compare the max interior residual at eps and eps/2 against the ratio 2^(K+1) of a truncated series.

    Passes when the ratio lies in [2^(K+1)/factor, factor 2^(K+1)]. Vacuous when the eps/2 residual is below
    floor or below the noise floor of the eigensolve.
    """

    residual = match_spectra(r, V, eps, hbar, w, f, **continuation).max_interior_residual
    residual_half = match_spectra(r, V, eps / 2, hbar, w, f, **continuation).max_interior_residual
    target = 2.0 ** (r.order + 1)
    lower, upper = target / factor, target * factor

    threshold = max(floor, noise_floor(V, eps / 2, hbar, w, f))
    if residual_half < threshold:
        ratio, status = math.nan, CheckStatus.VACUOUS
    else:
        ratio = residual / residual_half if residual_half > 0 else math.inf
        status = CheckStatus.PASS if lower <= ratio <= upper else CheckStatus.FAIL
    logger.info(
        f"Order scaling at eps={eps}: R={residual:.3e}, R/2={residual_half:.3e}, ratio={ratio:.4g} ({status.name})"
    )
    return ScalingRecord(eps, r.order, residual, residual_half, ratio, target, lower, upper, status, threshold)


@dataclass
class SweepRecord:
    hbars: tuple
    order: int
    norms: dict = field(default_factory=dict)
    deviations: dict = field(default_factory=dict)
    classical_norms: tuple = ()
    exponents: tuple = ()

    def to_frame(self) -> pd.DataFrame:
        records = [
            {"hbar": hbar, "k": k, "norm_B": self.norms[hbar][k - 1], "deviation": self.deviations[hbar][k - 1]}
            for hbar in self.hbars
            for k in range(1, self.order + 1)
        ]
        return pd.DataFrame.from_records(records, columns=["hbar", "k", "norm_B", "deviation"])

    def as_dict(self) -> dict:
        return {
            "hbars": list(self.hbars),
            "classical_norms": list(self.classical_norms),
            "exponents": list(self.exponents),
        }


def _fit_exponent(hbars, deviations) -> float:
    deviations = np.asarray(deviations, dtype=float)
    if len(hbars) < 2 or not (deviations > 0).all():
        return math.nan
    slope, _ = np.polyfit(np.log(hbars), np.log(deviations), 1)
    return float(slope)


def hbar_sweep(
    V: Symbol, f: Frequency, K: int, hbars, policy: TruncationPolicy, negligible: float = 1e-12
) -> SweepRecord:
    """
    Track B_k(hbar) toward the classical coefficients b_k as hbar decreases.

    The deviation per order is |B_k(hbar) - b_k|_rho / |b_k|_rho (absolute when b_k = 0); its log-log slope
    against hbar is the fitted exponent. The exponent is nan when some deviation vanishes exactly, or when |b_k|_rho
    is below negligible times the largest classical norm.

    :param hbars: strictly descending values in (0, 1]
    :param negligible: relative size below which a classical coefficient counts as vanishing
    """

    hbars = tuple(float(h) for h in hbars)
    if not hbars:
        raise ValueError("hbar sweep needs at least one value")
    if any(not 0 < h <= 1 for h in hbars):
        raise ValueError(f"Sweep values must lie in (0, 1], got {hbars}")
    if any(a <= b for a, b in zip(hbars[:-1], hbars[1:])):
        raise ValueError(f"Sweep values must be strictly descending, got {hbars}")

    classical = cnf(V, f, K, policy)
    classical_norms = tuple(rho_norm(b, policy.rho) for b in classical.B)
    record = SweepRecord(hbars=hbars, order=K, classical_norms=classical_norms)
    for hbar in hbars:
        quantum = qnf(V, f, hbar, K, policy)
        record.norms[hbar] = tuple(rho_norm(b, policy.rho) for b in quantum.B)
        deviations = []
        for bk, ck, ck_norm in zip(quantum.B, classical.B, classical_norms):
            dev = rho_norm(bk - ck, policy.rho)
            deviations.append(dev / ck_norm if ck_norm > 0 else dev)
        record.deviations[hbar] = tuple(deviations)
        logger.debug(f"hbar={hbar}: deviations {record.deviations[hbar]}")

    cutoff = negligible * max(classical_norms, default=0.0)
    record.exponents = tuple(
        _fit_exponent(hbars, [record.deviations[h][k] for h in hbars]) if classical_norms[k] > cutoff else math.nan
        for k in range(K)
    )
    return record


@dataclass(frozen=True)
class RadiusStability:
    radius: float
    radius_doubled: float
    relative_change: float
    stable: bool

    def as_dict(self) -> dict:
        return {
            "radius": self.radius,
            "radius_doubled": self.radius_doubled,
            "relative_change": self.relative_change,
            "stable": self.stable,
        }


def radius_stability(
    V: Symbol, f: Frequency, hbar: float, K: int, policy: TruncationPolicy, tol: float = 0.05
) -> RadiusStability:
    """Convergence radius at the configured truncation caps and at doubled caps; hbar = 0 uses the classical form."""

    def radius(p: TruncationPolicy) -> float:
        r = qnf(V, f, hbar, K, p) if hbar > 0 else cnf(V, f, K, p)
        return convergence_diagnostics(r, p.rho / 2).radius

    base = radius(policy)
    doubled = radius(policy.doubled())
    if math.isinf(base) and math.isinf(doubled):
        change = 0.0
    elif math.isinf(base) or math.isinf(doubled):
        change = math.inf
    else:
        change = abs(doubled - base) / base
    return RadiusStability(base, doubled, change, change <= tol)
