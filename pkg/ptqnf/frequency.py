"""Diophantine frequency vectors, their finite verification and the homological small divisors."""

import itertools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

logger = logging.getLogger(__name__)

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
DEFAULT_QMAX = 50
DEFAULT_RESONANCE_FLOOR = 1e-12


class ResonanceError(ValueError):
    def __init__(self, q: tuple, divisor: float, floor: float):
        self.q = tuple(int(x) for x in q)
        self.divisor = divisor
        self.floor = floor
        super().__init__(f"Resonant wave vector q={self.q}: |<q,omega>| = {divisor:.3e} is below the floor {floor:.1e}")


@dataclass(frozen=True)
class Frequency:
    """
    A frequency vector omega with its declared diophantine constants.

    :param dim: number of angles l
    :param omega: the frequencies (omega_1, ..., omega_l)
    :param gamma: diophantine constant, |<omega,q>|^-1 <= gamma |q|^tau
    :param tau: diophantine exponent, must exceed dim
    :param resonance_floor: smallest |<q,omega>| accepted as a divisor
    """

    dim: int
    omega: tuple
    gamma: float
    tau: float
    resonance_floor: float = DEFAULT_RESONANCE_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.dim < 1:
            raise ValueError(f"Frequency dimension must be at least 1, got {self.dim}")
        if len(self.omega) != self.dim:
            raise ValueError(f"Expected {self.dim} frequencies, got {len(self.omega)}")
        if not all(math.isfinite(w) for w in self.omega) or not any(self.omega):
            raise ValueError(f"Frequencies must be finite and not all zero, got {self.omega}")
        if not self.gamma > 0:
            raise ValueError(f"Diophantine constant gamma must be positive, got {self.gamma}")
        if not self.tau > self.dim:
            raise ValueError(f"Diophantine exponent tau={self.tau} must exceed the dimension {self.dim}")
        if self.resonance_floor < 0:
            raise ValueError(f"Resonance floor must be non-negative, got {self.resonance_floor}")

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.omega, dtype=float)

    def dot(self, q) -> float:
        """<omega, q> for an integer or real vector q."""
        return float(np.dot(self.vector, np.asarray(q, dtype=float)))


@dataclass(frozen=True)
class DiophantineReport:
    qmax: int
    worst_q: tuple
    min_product: float
    implied_gamma: float
    gamma: float
    gamma_valid: bool
    smallness_value: float
    smallness_ok: bool

    def as_dict(self) -> dict:
        return {
            "qmax": self.qmax,
            "worst_q": list(self.worst_q),
            "min_product": self.min_product,
            "implied_gamma": self.implied_gamma,
            "gamma": self.gamma,
            "gamma_valid": self.gamma_valid,
            "smallness_value": self.smallness_value,
            "smallness_ok": self.smallness_ok,
        }


def smallness_constant(gamma: float, tau: float) -> float:
    """Left-hand side of gamma * tau^tau * (tau+2)^(4(tau+2)) < 1/2."""
    return gamma * tau**tau * (tau + 2.0) ** (4.0 * (tau + 2.0))


def _canonical_sign(q: np.ndarray) -> tuple:
    for x in q:
        if x != 0:
            return tuple(int(v) for v in (q if x > 0 else -q))
    return tuple(int(v) for v in q)


def verify_diophantine(f: Frequency, qmax: int) -> DiophantineReport:
    """
    Exhaustive scan of the diophantine condition over 0 < |q|_inf <= qmax.

    The smallness condition on (gamma, tau) is only reported, never enforced.

    :param f: frequency to verify
    :param qmax: largest sup-norm of the scanned wave vectors
    :returns: the worst wave vector and the gamma it implies
    """

    if qmax < 1:
        raise ValueError(f"qmax must be at least 1, got {qmax}")

    grid = np.array(list(itertools.product(range(-qmax, qmax + 1), repeat=f.dim)), dtype=np.int64)
    sup_norm = np.abs(grid).max(axis=1)
    grid = grid[sup_norm > 0]
    sup_norm = sup_norm[sup_norm > 0]

    products = np.abs(grid @ f.vector) * sup_norm.astype(float) ** f.tau
    # ties go to the smallest |q|, then to the first q in scan order
    worst = int(np.lexsort((sup_norm, products))[0])
    min_product = float(products[worst])
    implied_gamma = math.inf if min_product == 0.0 else 1.0 / min_product
    smallness_value = smallness_constant(f.gamma, f.tau)

    report = DiophantineReport(
        qmax=qmax,
        worst_q=_canonical_sign(grid[worst]),
        min_product=min_product,
        implied_gamma=implied_gamma,
        gamma=f.gamma,
        gamma_valid=implied_gamma <= f.gamma,
        smallness_value=smallness_value,
        smallness_ok=smallness_value < 0.5,
    )
    if not report.gamma_valid:
        logger.warning(
            f"Declared gamma={f.gamma:.6g} is invalid up to |q|={qmax}: worst q={report.worst_q} implies "
            f"gamma={implied_gamma:.6g}"
        )
    logger.debug(f"Diophantine scan: {report}")
    return report


def make_frequency(omega, tau: float, gamma=None, qmax: int = DEFAULT_QMAX, resonance_floor=DEFAULT_RESONANCE_FLOOR):
    """
    Build a Frequency, taking gamma from a scan up to qmax when none is declared.

    :param omega: the frequencies
    :param tau: diophantine exponent
    :param gamma: declared constant, or None for the implied one
    :param qmax: scan range used for the implied gamma
    :param resonance_floor: smallest accepted divisor
    :returns: Frequency
    """

    omega = tuple(float(w) for w in omega)
    # placeholder gamma, replaced after the scan
    f = Frequency(len(omega), omega, 1.0 if gamma is None else gamma, tau, resonance_floor)
    if gamma is None:
        report = verify_diophantine(f, qmax)
        if not math.isfinite(report.implied_gamma):
            raise ResonanceError(report.worst_q, 0.0, resonance_floor)
        f = replace(f, gamma=report.implied_gamma)
    return f


def make_golden_frequency(tau: float = 3.0, qmax: int = DEFAULT_QMAX) -> Frequency:
    """omega = (1, golden ratio) with gamma set to its implied value over |q| <= qmax."""
    return make_frequency((1.0, GOLDEN_RATIO), tau, qmax=qmax)


def small_divisor(f: Frequency, q) -> complex:
    """
    Solve the homological division: returns 1 / (i <q, omega>).

    :param f: frequency
    :param q: nonzero integer wave vector
    :raises ResonanceError: when |<q,omega>| is below the resonance floor
    """

    q = tuple(int(x) for x in q)
    if not any(q):
        raise ValueError("homological division undefined at q=0")
    divisor = f.dot(q)
    if abs(divisor) <= f.resonance_floor:
        raise ResonanceError(q, abs(divisor), f.resonance_floor)
    return 1.0 / (1j * divisor)
