"""
Order-by-order construction of the quantum (Moyal) and classical (Poisson) normal forms.

The perturbed symbol L + eps V is conjugated by exp(ad_W), W = sum_k eps^k W_k. Writing
X^(r) = ad_W^r (L + eps V) / r! and grading by powers of eps, the triangle

    X^(r)_k = (1/r) sum_{j=1}^{k-r+1} {W_j, X^(r-1)_{k-j}}

evaluates the transformed symbol with O(k^2) brackets per order. At order k the part that does not involve
W_k is V_k; the homological equation {W_k, L} + V_k = B_k then fixes B_k and W_k.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ptqnf.enums import Mode, Parity
from ptqnf.frequency import Frequency, small_divisor
from ptqnf.symbol import (
    LSymbol,
    Symbol,
    TruncationPolicy,
    bracket_with_L,
    is_real_coeffs,
    moyal_bracket,
    parity_J,
    poisson_bracket,
    rho_norm,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrderNorms:
    k: int
    norm_B: float
    norm_W: float
    norm_V: float
    dropped: float


@dataclass
class NormalFormResult:
    """
    Normal form coefficients B_1..B_K and generators W_1..W_K.

    :param order: K
    :param mode: quantum or classical
    :param hbar: Planck constant, 0 in classical mode
    :param B: x-independent normal form coefficients
    :param W: generators, with empty q=0 slices
    :param V_terms: the V_k entering each homological equation
    :param dropped: truncated rho-norm mass per order
    """

    order: int
    mode: Mode
    hbar: float
    frequency: Frequency
    policy: TruncationPolicy
    B: list = field(default_factory=list)
    W: list = field(default_factory=list)
    V_terms: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    radius_estimate: float = math.nan

    @property
    def norms(self) -> list:
        return [
            OrderNorms(
                k=k,
                norm_B=rho_norm(b, self.policy.rho),
                norm_W=rho_norm(w, self.policy.rho),
                norm_V=rho_norm(v, self.policy.rho),
                dropped=d,
            )
            for k, (b, w, v, d) in enumerate(zip(self.B, self.W, self.V_terms, self.dropped), start=1)
        ]

    @property
    def ledger(self) -> list:
        """Cumulative truncation mass through each order."""
        return [float(x) for x in np.cumsum(self.dropped)] if self.dropped else []


@dataclass(frozen=True)
class ConvergenceDiagnostics:
    rho: float
    norms: tuple
    radius: float
    ratio_radius: float
    ledger_share: tuple
    nonzero_even_orders: int
    low_confidence: bool

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "norms": list(self.norms),
            "radius": self.radius,
            "ratio_radius": self.ratio_radius,
            "ledger_share": list(self.ledger_share),
            "nonzero_even_orders": self.nonzero_even_orders,
            "low_confidence": self.low_confidence,
        }


def _bracket_for(hbar: float, f: Frequency, policy: TruncationPolicy):
    if hbar > 0:
        return lambda F, G: moyal_bracket(F, G, hbar, f, policy)
    return lambda F, G: poisson_bracket(F, G, f, policy)


class LieTriangle:
    """
    Graded evaluation of exp(ad_W)(L + eps V) as the generators W_k become known.

    Call transformed_v(k) for V_k, then push(W_k), for k = 1, 2, ...
    """

    def __init__(self, V: Symbol, f: Frequency, hbar: float, policy: TruncationPolicy):
        self.V = V
        self.L = LSymbol(f)
        self.zero = Symbol.zero(V.dim, V.pstep)
        self._bracket = _bracket_for(hbar, f, policy)
        self.W: list = []
        self._table: dict = {}
        self._w_on_v: dict = {}
        self.order_dropped = 0.0

    def bracket(self, F: Symbol, G: Symbol) -> Symbol:
        result, dropped = self._bracket(F, G)
        self.order_dropped += dropped
        return result

    def transformed_v(self, k: int) -> Symbol:
        if len(self.W) != k - 1:
            raise ValueError(f"Order {k} needs W_1..W_{k - 1}, have {len(self.W)} generators")
        self.order_dropped = 0.0
        if k == 1:
            return self.V

        w_on_v = self.bracket(self.W[k - 2], self.V)
        self._w_on_v[k] = w_on_v
        vk = w_on_v
        for r in range(2, k + 1):
            acc = self.zero
            for j in range(1, k - r + 2):
                acc = acc + self.bracket(self.W[j - 1], self._table[(r - 1, k - j)])
            self._table[(r, k)] = acc * (1.0 / r)
            vk = vk + self._table[(r, k)]
        return vk

    def push(self, wk: Symbol):
        k = len(self.W) + 1
        self.W.append(wk)
        self._table[(1, k)] = bracket_with_L(wk, self.L) + self._w_on_v.get(k, self.zero)


def solve_homological(Vk: Symbol, f: Frequency):
    """
    Solve {W_k, L} + V_k = B_k by Fourier division.

    :param Vk: right-hand side of order k
    :param f: frequency
    :returns: (B_k, W_k): the q=0 slice of V_k, and every q != 0 atom divided by i <q,omega>
    :raises ResonanceError: when a divisor falls below the resonance floor
    """

    bk = Vk.slice_q0()
    rest = Vk.without_q0()
    if rest.is_zero:
        return bk, rest

    dots = rest.q.astype(float) @ f.vector
    resonant = np.abs(dots) <= f.resonance_floor
    if resonant.any():
        small_divisor(f, rest.q[np.argmax(resonant)])
    wk = Symbol(Vk.dim, Vk.pstep, rest.keys, rest.coeffs / (1j * dots), canonical=True)
    return bk, wk


def _normalize(V: Symbol, f: Frequency, hbar: float, K: int, policy: TruncationPolicy, mode: Mode):
    if K < 1:
        raise ValueError(f"Normal form order must be at least 1, got {K}")
    if V.dim != f.dim:
        raise ValueError(f"Potential dimension {V.dim} does not match frequency dimension {f.dim}")
    if not V.is_zero and (not is_real_coeffs(V) or parity_J(V) != Parity.ODD):
        logger.warning("Input potential is not PT-symmetric; reality and odd vanishing are not expected")

    result = NormalFormResult(order=K, mode=mode, hbar=hbar, frequency=f, policy=policy)
    triangle = LieTriangle(V, f, hbar, policy)
    for k in range(1, K + 1):
        vk = triangle.transformed_v(k)
        bk, wk = solve_homological(vk, f)
        triangle.push(wk)
        result.V_terms.append(vk)
        result.B.append(bk)
        result.W.append(wk)
        result.dropped.append(triangle.order_dropped)
        logger.debug(
            f"{mode.name.lower()} order {k}: |V_k|={len(vk)} |B_k|={len(bk)} |W_k|={len(wk)} atoms, "
            f"dropped {triangle.order_dropped:.3e}"
        )

    result.radius_estimate = _root_radius([rho_norm(b, policy.rho / 2) for b in result.B])
    return result


def qnf(V: Symbol, f: Frequency, hbar: float, K: int, policy: TruncationPolicy) -> NormalFormResult:
    """
    Quantum normal form of L + eps V through order K.

    :param V: potential symbol, PT-symmetric for the structural properties to hold
    :param f: frequency
    :param hbar: Planck constant in (0, 1]
    :param K: order
    :param policy: truncation applied after every bracket
    :returns: NormalFormResult
    """

    if not 0 < hbar <= 1:
        raise ValueError(f"hbar must lie in (0, 1], got {hbar}")
    return _normalize(V, f, hbar, K, policy, Mode.QUANTUM)


def cnf(V: Symbol, f: Frequency, K: int, policy: TruncationPolicy) -> NormalFormResult:
    """Classical normal form: the same construction with every Moyal bracket replaced by the Poisson bracket."""
    return _normalize(V, f, 0.0, K, policy, Mode.CLASSICAL)


def _compositions(n: int, r: int):
    """Ordered tuples of r positive integers summing to n."""
    for cuts in itertools.combinations(range(1, n), r - 1):
        bounds = (0, *cuts, n)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(r))


def vk_literal(W, V: Symbol, f: Frequency, k: int, hbar: float, policy: TruncationPolicy) -> Symbol:
    """
    V_k by direct expansion over all compositions of k and k-1.

    V_k = sum_{r=2}^{k} 1/r! sum_{j_1+..+j_r=k} {W_j1, {.., {W_jr, L}..}}
        + sum_{r=1}^{k-1} 1/r! sum_{j_1+..+j_r=k-1} {W_j1, {.., {W_jr, V}..}}

    Exponential in k; meant as an independent check of the graded recursion.

    :param W: generators W_1..W_{k-1} (more are ignored)
    :param hbar: Planck constant; 0 selects the Poisson bracket
    """

    if k < 2:
        raise ValueError(f"vk_literal needs k >= 2, got {k}")
    if len(W) < k - 1:
        raise ValueError(f"vk_literal at k={k} needs W_1..W_{k - 1}, got {len(W)} generators")

    bracket = _bracket_for(hbar, f, policy)
    L = LSymbol(f)
    nested: dict = {}

    def nest(indices: tuple, base: str) -> Symbol:
        key = (indices, base)
        if key not in nested:
            inner_w = W[indices[-1] - 1]
            if len(indices) == 1:
                nested[key] = bracket_with_L(inner_w, L) if base == "L" else bracket(inner_w, V)[0]
            else:
                nested[key] = bracket(W[indices[0] - 1], nest(indices[1:], base))[0]
        return nested[key]

    total = Symbol.zero(V.dim, V.pstep)
    for r in range(2, k + 1):
        for js in _compositions(k, r):
            total = total + nest(js, "L") * (1.0 / math.factorial(r))
    for r in range(1, k):
        for js in _compositions(k - 1, r):
            total = total + nest(js, "V") * (1.0 / math.factorial(r))
    return total


def lie_transform(V: Symbol, W, f: Frequency, K: int, hbar: float, policy: TruncationPolicy) -> list:
    """
    The eps^1..eps^K coefficients of exp(ad_W)(L + eps V) for given generators.

    With the generators of a normal form these reproduce its B_k.

    :param W: generators W_1..W_K
    :param hbar: Planck constant; 0 selects the Poisson bracket
    :returns: list of K symbols
    """

    if len(W) < K:
        raise ValueError(f"lie_transform to order {K} needs {K} generators, got {len(W)}")
    triangle = LieTriangle(V, f, hbar, policy)
    L = LSymbol(f)
    coefficients = []
    for k in range(1, K + 1):
        vk = triangle.transformed_v(k)
        triangle.push(W[k - 1])
        coefficients.append(bracket_with_L(W[k - 1], L) + vk)
    return coefficients


def _root_radius(norms) -> float:
    nonzero = [(k, n) for k, n in enumerate(norms, start=1) if n > 0]
    if not nonzero:
        return math.inf
    half = len(norms) // 2
    tail = [(k, n) for k, n in nonzero if k > half] or nonzero
    return 1.0 / max(n ** (1.0 / k) for k, n in tail)


def convergence_diagnostics(r: NormalFormResult, rho: float) -> ConvergenceDiagnostics:
    """
    Empirical radius of convergence in eps of sum_k B_k eps^k.

    The root test takes 1 / max ||B_k||^(1/k) over the upper half of the computed orders; the ratio test uses the
    last two nonzero orders. Fewer than four nonzero even orders mark the estimate as low-confidence.

    :param r: normal form
    :param rho: norm weight, typically half the policy weight
    """

    norms = [rho_norm(b, rho) for b in r.B]
    radius = _root_radius(norms)

    nonzero = [(k, n) for k, n in enumerate(norms, start=1) if n > 0]
    ratio_radius = math.nan
    if len(nonzero) >= 2:
        (k1, n1), (k2, n2) = nonzero[-2:]
        ratio_radius = (n1 / n2) ** (1.0 / (k2 - k1))

    ledger_share = tuple(d / (n + d) if n + d > 0 else 0.0 for n, d in zip(norms, r.dropped))
    nonzero_even = sum(1 for k, _ in nonzero if k % 2 == 0)
    low_confidence = math.isfinite(radius) and nonzero_even < 4
    if low_confidence:
        logger.warning(f"Radius estimate {radius:.4g} rests on {nonzero_even} nonzero even orders; low confidence")

    return ConvergenceDiagnostics(
        rho=rho,
        norms=tuple(norms),
        radius=radius,
        ratio_radius=ratio_radius,
        ledger_share=ledger_share,
        nonzero_even_orders=nonzero_even,
        low_confidence=low_confidence,
    )
