"""
Sparse algebra of phase-space symbols of the reduced class F(<omega,xi>, x; hbar).

A Symbol is the finite exponential sum

    F(xi, x) = sum_{(q, m)} c_{q,m} exp(i (m * pstep * <omega,xi> + <q,x>))

stored as an integer key array with rows (q_1, ..., q_l, m), sorted lexicographically, and a
matching complex coefficient array. Keys are unique and no coefficient is zero.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ptqnf.enums import Parity
from ptqnf.frequency import Frequency

logger = logging.getLogger(__name__)

# pairs per convolution chunk
_CHUNK_PAIRS = 1 << 22
_MAX_CODE = 1 << 62


@dataclass(frozen=True)
class TruncationPolicy:
    """
    Pruning applied after every bracket.

    :param eta: amplitude threshold; relative to the largest pair contribution when relative is set
    :param relative: interpret eta relative to the bracket scale instead of absolutely
    :param qmax: cap on |q|_inf
    :param mmax: cap on |m|
    :param rho: weight of the rho-norm used for the dropped-mass ledger
    """

    eta: float = 1e-14
    relative: bool = True
    qmax: int = 32
    mmax: int = 64
    rho: float = 3.0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"Truncation threshold eta must be non-negative, got {self.eta}")
        if not self.rho > 2:
            raise ValueError(f"Norm weight rho must exceed 2, got {self.rho}")
        if self.qmax < 0 or self.mmax < 0:
            raise ValueError(f"Truncation caps must be non-negative, got qmax={self.qmax}, mmax={self.mmax}")

    def doubled(self) -> "TruncationPolicy":
        return TruncationPolicy(self.eta, self.relative, 2 * self.qmax, 2 * self.mmax, self.rho)

    def as_dict(self) -> dict:
        return {"eta": self.eta, "relative": self.relative, "qmax": self.qmax, "mmax": self.mmax, "rho": self.rho}


EXACT = TruncationPolicy(eta=0.0, relative=False, qmax=1 << 20, mmax=1 << 20)


@dataclass(frozen=True)
class Generator:
    q: tuple
    m: int
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(x) for x in self.q))
        object.__setattr__(self, "m", int(self.m))
        if isinstance(self.amplitude, complex):
            raise ValueError(f"Generator amplitudes must be real, got {self.amplitude}")
        object.__setattr__(self, "amplitude", float(self.amplitude))


@dataclass(frozen=True)
class PotentialSpec:
    """
    Minimal generator list of a PT-symmetric potential.

    :param generators: (q, m, amplitude) triples completed to full symmetry by build_potential
    :param pstep: grid spacing delta of the conjugate variable p
    :param dim: number of angles
    :param extra_atoms: (q, m, complex amplitude) atoms inserted verbatim, without completion
    """

    generators: tuple
    pstep: float
    dim: int
    extra_atoms: tuple = field(default=())


@dataclass(frozen=True)
class LSymbol:
    """The unperturbed symbol <omega, xi>; it is linear in xi and so outside the atomic class."""

    frequency: Frequency


class Symbol:
    def __init__(self, dim: int, pstep: float, keys=None, coeffs=None, canonical: bool = False):
        """
        A finite sum of Fourier atoms c * exp(i (m * pstep * <omega,xi> + <q,x>)).

        :param dim: number of angles l
        :param pstep: grid spacing delta of p
        :param keys: integer array of rows (q_1, ..., q_l, m)
        :param coeffs: complex amplitudes, one per key row
        :param canonical: keys are already sorted, unique and nonzero; skip aggregation
        """

        if dim < 1:
            raise ValueError(f"Symbol dimension must be at least 1, got {dim}")
        if not pstep > 0:
            raise ValueError(f"Symbol pstep must be positive, got {pstep}")
        self.dim: int = int(dim)
        self.pstep: float = float(pstep)

        if keys is None:
            keys = np.zeros((0, dim + 1), dtype=np.int64)
            coeffs = np.zeros(0, dtype=np.complex128)
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, dim + 1)
        coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if len(keys) != len(coeffs):
            raise ValueError(f"Got {len(keys)} keys for {len(coeffs)} coefficients")
        if not canonical:
            keys, coeffs = _aggregate(keys, coeffs)
        keys.setflags(write=False)
        coeffs.setflags(write=False)
        self.keys: np.ndarray = keys
        self.coeffs: np.ndarray = coeffs

    @classmethod
    def zero(cls, dim: int, pstep: float) -> "Symbol":
        return cls(dim, pstep)

    @classmethod
    def from_atoms(cls, dim: int, pstep: float, atoms) -> "Symbol":
        """
        Build a Symbol from (q, m, c) triples or a {(q..., m): c} mapping; repeated keys add up.
        """

        if isinstance(atoms, dict):
            atoms = [(key[:-1], key[-1], c) for key, c in atoms.items()]
        atoms = list(atoms)
        keys = [(*(int(x) for x in q), int(m)) for q, m, _ in atoms]
        for key in keys:
            if len(key) != dim + 1:
                raise ValueError(f"Atom key {key} does not match dimension {dim}")
        return cls(dim, pstep, np.array(keys, dtype=np.int64), np.array([c for _, _, c in atoms], dtype=complex))

    @property
    def q(self) -> np.ndarray:
        return self.keys[:, :-1]

    @property
    def m(self) -> np.ndarray:
        return self.keys[:, -1]

    @property
    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    @property
    def q_spread(self) -> int:
        """Largest |q|_inf in the support."""
        return int(np.abs(self.q).max()) if len(self) else 0

    @property
    def m_spread(self) -> int:
        return int(np.abs(self.m).max()) if len(self) else 0

    def atoms(self) -> dict:
        return {tuple(int(x) for x in key): complex(c) for key, c in zip(self.keys, self.coeffs)}

    def coefficient(self, q, m) -> complex:
        return self.atoms().get((*(int(x) for x in q), int(m)), 0j)

    def slice_q0(self) -> "Symbol":
        mask = ~self.q.any(axis=1)
        return self._masked(mask)

    def without_q0(self) -> "Symbol":
        mask = self.q.any(axis=1)
        return self._masked(mask)

    def _masked(self, mask) -> "Symbol":
        return Symbol(self.dim, self.pstep, self.keys[mask], self.coeffs[mask], canonical=True)

    def __len__(self):
        return len(self.coeffs)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, a):
        return scale(self, a)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Symbol(dim={self.dim}, pstep={self.pstep}, atoms={len(self)})"


def _encode(keys: np.ndarray):
    """Mixed-radix integer codes preserving the lexicographic order of the key rows."""
    lo = keys.min(axis=0)
    span = keys.max(axis=0) - lo + 1
    radix = np.ones(keys.shape[1], dtype=np.int64)
    total = 1
    for i in range(keys.shape[1] - 1, -1, -1):
        radix[i] = total
        total *= int(span[i])
        if total >= _MAX_CODE:
            return None
    return (keys - lo) @ radix, lo, span, radix


def _aggregate(keys: np.ndarray, coeffs: np.ndarray):
    """Sum coefficients of repeated keys in input order, sort keys, drop exact zeros."""
    if len(keys) == 0:
        return np.zeros((0, keys.shape[1]), dtype=np.int64), np.zeros(0, dtype=np.complex128)

    encoded = _encode(keys)
    if encoded is None:
        unique_keys, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
    else:
        codes, lo, span, radix = encoded
        unique_codes, inverse = np.unique(codes, return_inverse=True)
        unique_keys = (unique_codes[:, None] // radix) % span + lo

    n = len(unique_keys)
    sums = np.bincount(inverse, weights=coeffs.real, minlength=n) + 1j * np.bincount(
        inverse, weights=coeffs.imag, minlength=n
    )
    nonzero = sums != 0
    return np.ascontiguousarray(unique_keys[nonzero], dtype=np.int64), sums[nonzero]


def _check_compatible(F: Symbol, G: Symbol):
    if F.dim != G.dim or F.pstep != G.pstep:
        raise ValueError(
            f"Incompatible symbols: dim {F.dim} vs {G.dim}, pstep {F.pstep} vs {G.pstep}"
        )


def add(F: Symbol, G: Symbol) -> Symbol:
    """Atom-wise sum of two symbols."""
    _check_compatible(F, G)
    return Symbol(F.dim, F.pstep, np.concatenate([F.keys, G.keys]), np.concatenate([F.coeffs, G.coeffs]))


def scale(F: Symbol, a: complex) -> Symbol:
    """Multiply every amplitude by the scalar a."""
    if a == 0:
        return Symbol.zero(F.dim, F.pstep)
    return Symbol(F.dim, F.pstep, F.keys, F.coeffs * a)


def rho_norm(F: Symbol, rho: float) -> float:
    """
    Exponentially weighted atom mass sum_{q,m} e^{rho |q|_1} e^{rho |m| pstep} |c_{q,m}|.

    :param F: symbol
    :param rho: non-negative weight; rho = 0 gives the total atom mass
    """

    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")
    if F.is_zero:
        return 0.0
    exponent = rho * (np.abs(F.q).sum(axis=1) + np.abs(F.m) * F.pstep)
    return float(np.sum(np.exp(exponent) * np.abs(F.coeffs)))


def truncate(F: Symbol, policy: TruncationPolicy, scale=None):
    """
    Remove atoms below the amplitude threshold or outside the (qmax, mmax) caps.

    :param F: symbol to prune
    :param policy: truncation policy
    :param scale: reference amplitude for a relative threshold; defaults to max |c| of F
    :returns: (pruned symbol, rho-norm of the removed atoms)
    """

    if F.is_zero:
        return F, 0.0
    magnitude = np.abs(F.coeffs)
    threshold = policy.eta
    if policy.relative:
        threshold *= float(magnitude.max()) if scale is None else scale
    keep = (magnitude >= threshold) & (np.abs(F.q).max(axis=1) <= policy.qmax) & (np.abs(F.m) <= policy.mmax)
    if keep.all():
        return F, 0.0
    dropped = rho_norm(F._masked(~keep), policy.rho)
    return F._masked(keep), dropped


def _pair_sum(F: Symbol, G: Symbol, weight_fn, policy: TruncationPolicy):
    """
    Convolve the supports of F and G with a per-pair weight, then prune.

    weight_fn(qF_dot, mF, qG_dot, mG) returns the (nF_chunk, nG) weight array, where qX_dot = <omega, q_X>.
    """

    _check_compatible(F, G)
    if F.is_zero or G.is_zero:
        return Symbol.zero(F.dim, F.pstep), 0.0

    policy = policy or EXACT
    chunk = max(1, _CHUNK_PAIRS // len(G))
    partial_keys = []
    partial_coeffs = []
    largest = 0.0
    for start in range(0, len(F), chunk):
        kF = F.keys[start : start + chunk]
        cF = F.coeffs[start : start + chunk]
        weights = weight_fn(kF, G.keys)
        amps = (weights * cF[:, None] * G.coeffs[None, :]).reshape(-1)
        keys = (kF[:, None, :] + G.keys[None, :, :]).reshape(-1, F.dim + 1)
        if len(amps):
            largest = max(largest, float(np.abs(amps).max()))
        keys, amps = _aggregate(keys, amps)
        partial_keys.append(keys)
        partial_coeffs.append(amps)

    result = Symbol(F.dim, F.pstep, np.concatenate(partial_keys), np.concatenate(partial_coeffs))
    return truncate(result, policy, scale=largest)


def _omega_dots(keys: np.ndarray, f: Frequency) -> np.ndarray:
    return keys[:, :-1].astype(float) @ f.vector


def moyal_bracket(F: Symbol, G: Symbol, hbar: float, f: Frequency, policy: TruncationPolicy = None):
    """
    Moyal bracket {F, G}_M of two atomic symbols.

    The pair (q_F, m_F), (q_G, m_G) contributes to the atom (q_F + q_G, m_F + m_G) with weight
    (2/hbar) sin((hbar pstep / 2) (m_G <omega,q_F> - m_F <omega,q_G>)).

    :param F: left symbol
    :param G: right symbol
    :param hbar: Planck constant, strictly positive
    :param f: frequency defining <omega, .>
    :param policy: pruning applied to the result; exact when omitted
    :returns: (bracket symbol, rho-norm of the pruned atoms)
    """

    if not hbar > 0:
        raise ValueError(f"moyal_bracket needs hbar > 0, got {hbar}; use poisson_bracket for the classical limit")
    half = 0.5 * hbar * F.pstep

    def weights(kF, kG):
        theta = half * (kG[None, :, -1] * _omega_dots(kF, f)[:, None] - kF[:, None, -1] * _omega_dots(kG, f)[None, :])
        return (2.0 / hbar) * np.sin(theta)

    return _pair_sum(F, G, weights, policy)


def poisson_bracket(F: Symbol, G: Symbol, f: Frequency, policy: TruncationPolicy = None):
    """
    Poisson bracket {F, G}, the hbar -> 0 limit of moyal_bracket.

    :returns: (bracket symbol, rho-norm of the pruned atoms)
    """

    def weights(kF, kG):
        return F.pstep * (kG[None, :, -1] * _omega_dots(kF, f)[:, None] - kF[:, None, -1] * _omega_dots(kG, f)[None, :])

    return _pair_sum(F, G, weights, policy)


def star_product(F: Symbol, G: Symbol, hbar: float, f: Frequency, policy: TruncationPolicy = None):
    """
    Weyl star product F * G: the symbol of Op(F) Op(G) under the midpoint rule.

    Its antisymmetric part gives the bracket: {F, G}_M = (G * F - F * G) / (i hbar).

    :returns: (product symbol, rho-norm of the pruned atoms)
    """

    half = 0.5 * hbar * F.pstep

    def weights(kF, kG):
        phi = half * (kF[:, None, -1] * _omega_dots(kG, f)[None, :] - kG[None, :, -1] * _omega_dots(kF, f)[:, None])
        return np.exp(1j * phi)

    return _pair_sum(F, G, weights, policy)


def bracket_with_L(F: Symbol, L: LSymbol) -> Symbol:
    """
    Exact bracket {F, <omega,xi>}_M = -<grad_x F, omega>: each atom c becomes -i <q,omega> c.
    """

    factors = -1j * _omega_dots(F.keys, L.frequency)
    coeffs = F.coeffs * factors
    keep = coeffs != 0
    return Symbol(F.dim, F.pstep, F.keys[keep], coeffs[keep], canonical=True)


def _flip_q(F: Symbol) -> Symbol:
    keys = F.keys.copy()
    keys[:, :-1] *= -1
    return Symbol(F.dim, F.pstep, keys, F.coeffs)


def _mirror_m(F: Symbol) -> Symbol:
    keys = F.keys.copy()
    keys[:, -1] *= -1
    return Symbol(F.dim, F.pstep, keys, np.conj(F.coeffs))


def _relative_mass(D: Symbol, F: Symbol, scale: float = 0.0) -> float:
    total = max(rho_norm(F, 0.0), scale)
    return 0.0 if total == 0.0 else rho_norm(D, 0.0) / total


def parity_residual(F: Symbol):
    """
    Relative defects of x-parity: (even defect, odd defect).

    The even defect is |F - F(-x)| / |F| and the odd defect |F + F(-x)| / |F| in total atom mass.
    """

    flipped = _flip_q(F)
    return _relative_mass(F - flipped, F), _relative_mass(F + flipped, F)


def parity_J(F: Symbol, tol: float = 1e-12) -> Parity:
    """
    Classify F as even, odd or of no definite parity in x.

    The zero symbol satisfies both parities and is reported as even; use parity_residual where an odd
    zero must also pass.
    """

    even, odd = parity_residual(F)
    if even <= tol:
        return Parity.EVEN
    if odd <= tol:
        return Parity.ODD
    return Parity.NONE


def reality_residual(F: Symbol, scale: float = 0.0) -> float:
    """
    Relative imaginary mass of the Fourier coefficients F_q, zero iff conj(c_{q,m}) = c_{q,-m}.

    :param scale: lower bound on the reference mass, for symbols that vanish up to rounding
    """
    return 0.5 * _relative_mass(F - _mirror_m(F), F, scale)


def imag_residual(F: Symbol, scale: float = 0.0) -> float:
    """Relative real mass of the Fourier coefficients F_q, zero iff conj(c_{q,m}) = -c_{q,-m}."""
    return 0.5 * _relative_mass(F + _mirror_m(F), F, scale)


def is_real_coeffs(F: Symbol, tol: float = 1e-12) -> bool:
    return reality_residual(F) <= tol


def is_imag_coeffs(F: Symbol, tol: float = 1e-12) -> bool:
    return imag_residual(F) <= tol


def _check_dim(F: Symbol, f: Frequency, *vectors):
    for v in vectors:
        if len(v) != F.dim or f.dim != F.dim:
            raise ValueError(f"Dimension mismatch: symbol dim {F.dim}, frequency dim {f.dim}, vector length {len(v)}")


def evaluate(F: Symbol, xi, x, f: Frequency) -> complex:
    """F(xi, x) as the direct exponential sum."""
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_dim(F, f, xi, x)
    if F.is_zero:
        return 0j
    phase = F.m * F.pstep * f.dot(xi) + F.q @ x
    return complex(np.sum(F.coeffs * np.exp(1j * phase)))


def fourier_coeff(F: Symbol, q, xi, f: Frequency) -> complex:
    """The angular Fourier coefficient F_q(xi) = sum_m c_{q,m} exp(i m pstep <omega,xi>)."""
    q = np.asarray(q, dtype=np.int64)
    xi = np.asarray(xi, dtype=float)
    _check_dim(F, f, xi, q)
    mask = (F.q == q).all(axis=1)
    if not mask.any():
        return 0j
    return complex(np.sum(F.coeffs[mask] * np.exp(1j * F.m[mask] * F.pstep * f.dot(xi))))


def q_slice(F: Symbol, q) -> Symbol:
    mask = (F.q == np.asarray(q, dtype=np.int64)).all(axis=1)
    return F._masked(mask)


def build_potential(spec: PotentialSpec) -> Symbol:
    """
    Complete a generator list to a PT-symmetric potential.

    Each generator (q, m, a) contributes a/4 at (q, m) and (q, -m), and -a/4 at (-q, m) and (-q, -m), so that
    every V_q is real and even in p and V_{-q} = -V_q.

    :raises ValueError: for a generator at q = 0, whose coefficient oddness forces to vanish
    """

    atoms = []
    for gen in spec.generators:
        if not isinstance(gen, Generator):
            gen = Generator(*gen)
        if len(gen.q) != spec.dim:
            raise ValueError(f"Generator q={gen.q} does not match dimension {spec.dim}")
        if not any(gen.q):
            raise ValueError(f"Generator at q={gen.q}: an x-odd potential has a vanishing q=0 coefficient")
        minus_q = tuple(-x for x in gen.q)
        quarter = gen.amplitude / 4.0
        atoms += [
            (gen.q, gen.m, quarter),
            (gen.q, -gen.m, quarter),
            (minus_q, gen.m, -quarter),
            (minus_q, -gen.m, -quarter),
        ]
    for q, m, c in spec.extra_atoms:
        if len(q) != spec.dim:
            raise ValueError(f"Extra atom q={q} does not match dimension {spec.dim}")
        atoms.append((tuple(q), m, complex(c)))
    if spec.extra_atoms:
        logger.warning(f"Potential carries {len(spec.extra_atoms)} unsymmetrized atoms; PT symmetry is not guaranteed")
    return Symbol.from_atoms(spec.dim, spec.pstep, atoms)
