"""
Weyl quantization of symbols as dense matrices on a truncated Fourier basis of the torus.

The basis is e_n = exp(i <n,x>) for |n|_inf <= N, flattened lexicographically in (n_1, ..., n_l): index
sum_i (n_i + N) (2N+1)^(l-1-i). Under this order n -> -n reverses the index.

Matrix elements follow the midpoint rule: <e_{n+q}| Op(F) |e_n> = sum_m c_{q,m} exp(i m pstep hbar <omega, n + q/2>).
"""

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ptqnf.frequency import Frequency
from ptqnf.symbol import EXACT, LSymbol, Symbol, bracket_with_L, moyal_bracket

logger = logging.getLogger(__name__)


class SupportOverflowError(ValueError):
    def __init__(self, q: tuple, ncut: int):
        self.q = tuple(int(x) for x in q)
        self.ncut = ncut
        super().__init__(f"Wave vector q={self.q} couples no pair of basis states with |n|_inf <= {ncut}")


class EigenSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasisWindow:
    """
    Truncated Fourier basis {e_n : |n|_inf <= ncut}.

    :param dim: number of angles l
    :param ncut: cutoff N
    :param margin: rows and columns with |n|_inf <= N - margin form the interior block
    """

    dim: int
    ncut: int
    margin: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"Basis dimension must be at least 1, got {self.dim}")
        if self.ncut < 1:
            raise ValueError(f"Basis cutoff must be at least 1, got {self.ncut}")
        if not 0 <= self.margin < self.ncut:
            raise ValueError(f"Interior margin must satisfy 0 <= margin < ncut={self.ncut}, got {self.margin}")

    @property
    def size(self) -> int:
        return (2 * self.ncut + 1) ** self.dim

    @property
    def indices(self) -> np.ndarray:
        """Multi-indices n in flattening order, shape (size, dim)."""
        return np.array(list(itertools.product(range(-self.ncut, self.ncut + 1), repeat=self.dim)), dtype=np.int64)

    def flat_index(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.int64)
        radix = (2 * self.ncut + 1) ** np.arange(self.dim - 1, -1, -1, dtype=np.int64)
        return (n + self.ncut) @ radix

    @property
    def interior_mask(self) -> np.ndarray:
        return np.abs(self.indices).max(axis=1) <= self.ncut - self.margin


def interior_indices(w: BasisWindow) -> np.ndarray:
    """Flat indices of the interior block."""
    return np.flatnonzero(w.interior_mask)


@dataclass
class OperatorMatrix:
    window: BasisWindow
    entries: np.ndarray
    hbar: float

    def __post_init__(self):
        if self.entries.shape != (self.window.size, self.window.size):
            raise ValueError(f"Matrix shape {self.entries.shape} does not match basis size {self.window.size}")

    def interior_block(self) -> np.ndarray:
        idx = interior_indices(self.window)
        return self.entries[np.ix_(idx, idx)]


def matrix_of_symbol(F: Symbol, hbar: float, w: BasisWindow, f: Frequency) -> OperatorMatrix:
    """
    Weyl matrix of an atomic symbol on the window.

    :param F: symbol
    :param hbar: Planck constant in [0, 1]
    :param w: basis window
    :param f: frequency
    :raises SupportOverflowError: when F has a wave vector with |q|_inf > 2N
    """

    if F.dim != w.dim or f.dim != w.dim:
        raise ValueError(f"Dimension mismatch: symbol {F.dim}, window {w.dim}, frequency {f.dim}")
    if not 0 <= hbar <= 1:
        raise ValueError(f"hbar must lie in [0, 1], got {hbar}")

    size = w.size
    entries = np.zeros((size, size), dtype=np.complex128)
    if F.is_zero:
        return OperatorMatrix(w, entries, hbar)

    spread = np.abs(F.q).max(axis=1)
    if (spread > 2 * w.ncut).any():
        raise SupportOverflowError(F.q[np.argmax(spread)], w.ncut)

    basis = w.indices
    omega = f.vector
    n_dot = basis.astype(float) @ omega
    columns = np.arange(size)
    unique_q, group = np.unique(F.q, axis=0, return_inverse=True)
    group = group.reshape(-1)
    for g, q in enumerate(unique_q):
        targets = basis + q
        inside = (np.abs(targets) <= w.ncut).all(axis=1)
        if not inside.any():
            continue
        atoms = group == g
        t = hbar * (n_dot[inside] + 0.5 * float(q @ omega))
        values = np.exp(1j * F.pstep * np.outer(t, F.m[atoms])) @ F.coeffs[atoms]
        entries[w.flat_index(targets[inside]), columns[inside]] = values
    return OperatorMatrix(w, entries, hbar)


def matrix_of_L(hbar: float, w: BasisWindow, f: Frequency) -> OperatorMatrix:
    """Diagonal matrix with entries hbar <omega, n>."""
    diagonal = hbar * (w.indices.astype(float) @ f.vector)
    return OperatorMatrix(w, np.diag(diagonal.astype(np.complex128)), hbar)


def assemble_H(V: Symbol, eps: float, hbar: float, w: BasisWindow, f: Frequency) -> OperatorMatrix:
    """Matrix of H = L + eps V."""
    entries = matrix_of_L(hbar, w, f).entries + eps * matrix_of_symbol(V, hbar, w, f).entries
    return OperatorMatrix(w, entries, hbar)


def eigenvalues(Mt: OperatorMatrix) -> np.ndarray:
    """
    All eigenvalues of a dense, generally non-Hermitian matrix, unordered.

    :raises EigenSolveError: when the eigensolver fails or returns non-finite values
    """

    try:
        values = np.linalg.eigvals(Mt.entries)
    except np.linalg.LinAlgError as e:
        raise EigenSolveError(f"Dense eigensolve of a {Mt.window.size}x{Mt.window.size} matrix failed: {e}") from e
    if not np.isfinite(values).all():
        raise EigenSolveError("Eigensolver returned non-finite eigenvalues")
    return values


def _relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(a - b) / scale)


def commutator_symbol_check(F: Symbol, G, hbar: float, w: BasisWindow, f: Frequency) -> float:
    """
    Compare the matrix of {F, G}_M with the commutator (Mat G Mat F - Mat F Mat G) / (i hbar) on the interior block.

    G may be an LSymbol, in which case the exact linear rule bracket_with_L is checked against the diagonal Mat L.

    :returns: relative Frobenius-norm difference
    :raises ValueError: when the interior margin is smaller than the combined wave-vector spread
    """

    if not hbar > 0:
        raise ValueError(f"Commutator check needs hbar > 0, got {hbar}")
    is_linear = isinstance(G, LSymbol)
    spread = F.q_spread + (0 if is_linear else G.q_spread)
    if w.margin < spread:
        raise ValueError(f"Interior margin {w.margin} is below the combined wave-vector spread {spread}")

    if is_linear:
        bracket = bracket_with_L(F, G)
        mat_g = matrix_of_L(hbar, w, f).entries
    else:
        bracket, _ = moyal_bracket(F, G, hbar, f, EXACT)
        mat_g = matrix_of_symbol(G, hbar, w, f).entries
    mat_f = matrix_of_symbol(F, hbar, w, f).entries
    commutator = (mat_g @ mat_f - mat_f @ mat_g) / (1j * hbar)

    idx = interior_indices(w)
    block = np.ix_(idx, idx)
    return _relative_frobenius(matrix_of_symbol(bracket, hbar, w, f).entries[block], commutator[block])


def _parity_flip(vectors: np.ndarray) -> np.ndarray:
    """P: coefficient of e_n becomes that of e_{-n}; a reversal of the flattened index."""
    return vectors[::-1]


def _time_reversal(vectors: np.ndarray) -> np.ndarray:
    """T: complex conjugation of the function, which also maps e_n to e_{-n}."""
    return np.conj(vectors[::-1])


def pt_symmetry_check(V: Symbol, hbar: float, w: BasisWindow, f: Frequency) -> float:
    """
    Residual of [V, PT] applied to the basis vectors e_n and i e_n.

    :returns: largest Frobenius residual over both sets of input vectors, relative to max(1, |Mat V|_F)
    """

    mat_v = matrix_of_symbol(V, hbar, w, f).entries
    identity = np.eye(w.size, dtype=np.complex128)

    def pt(vectors):
        return _time_reversal(_parity_flip(vectors))

    residual = 0.0
    for vectors in (identity, 1j * identity):
        residual = max(residual, float(np.linalg.norm(mat_v @ pt(vectors) - pt(mat_v @ vectors))))
    return residual / max(1.0, float(np.linalg.norm(mat_v)))


def hermiticity_residual(Mt: OperatorMatrix) -> float:
    """|M - M^H|_F / |M|_F, zero for the zero matrix."""
    return _relative_frobenius(Mt.entries, Mt.entries.conj().T)


def operator_norm(Mt: OperatorMatrix) -> float:
    """Spectral norm (largest singular value)."""
    return float(np.linalg.norm(Mt.entries, 2))


def dump_matrix(Mt: OperatorMatrix, path: Path, eps: float, f: Frequency):
    """
    Write a matrix as one JSON header line followed by row-major little-endian complex128 entries.
    """

    header = {
        "dim": Mt.window.dim,
        "ncut": Mt.window.ncut,
        "hbar": Mt.hbar,
        "eps": eps,
        "omega": list(f.omega),
        "dtype": "<c16",
        "order": "row-major",
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(Mt.entries, dtype="<c16").tobytes())
    logger.debug(f"Matrix dump written: {path}")


def load_matrix(path: Path):
    """Read a dump written by dump_matrix: returns (header dict, complex matrix)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<c16")
    size = (2 * header["ncut"] + 1) ** header["dim"]
    return header, data.reshape(size, size)
