"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` complex arrays. Subsystem dimensions are
passed as tuples of ints, always in the same order as the tensor factors
of the matrix they annotate (leftmost factor = most significant index).
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg

DEFAULT_ATOL = 1e-10

_ATOL: contextvars.ContextVar[float] = contextvars.ContextVar("scsim_atol", default=DEFAULT_ATOL)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)


def get_atol() -> float:
    """Absolute tolerance used by the structural predicates."""
    return _ATOL.get()


@contextlib.contextmanager
def tolerance(atol: float) -> Iterator[float]:
    """Temporarily override the predicate tolerance.

    >>> with tolerance(1e-6):
    ...     is_unitary(np.eye(2) * (1 + 1e-8))
    True
    """
    token = _ATOL.set(float(atol))
    try:
        yield atol
    finally:
        _ATOL.reset(token)


def _atol(atol: float | None) -> float:
    return get_atol() if atol is None else atol


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def is_square(m: np.ndarray) -> bool:
    return m.ndim == 2 and m.shape[0] == m.shape[1]


def is_hermitian(m: np.ndarray, atol: float | None = None) -> bool:
    m = np.asarray(m)
    return is_square(m) and max_abs(m - dag(m)) <= _atol(atol)


def is_unitary(m: np.ndarray, atol: float | None = None) -> bool:
    m = np.asarray(m)
    if not is_square(m):
        return False
    return max_abs(dag(m) @ m - np.eye(m.shape[0])) <= _atol(atol)


def is_isometry(m: np.ndarray, atol: float | None = None) -> bool:
    m = np.asarray(m)
    return max_abs(dag(m) @ m - np.eye(m.shape[1])) <= _atol(atol)


def is_psd(m: np.ndarray, atol: float | None = None) -> bool:
    if not is_hermitian(m, atol):
        return False
    herm = (m + dag(m)) / 2
    return float(np.linalg.eigvalsh(herm)[0]) >= -_atol(atol)


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    if not ops:
        raise ValueError("tensor() needs at least one operand")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"subsystem dimensions must be positive, got {dims}")
    if not is_square(m):
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if int(np.prod(dims)) != m.shape[0]:
        raise ValueError(f"dims {dims} (total {int(np.prod(dims))}) do not match matrix size {m.shape[0]}")
    return dims


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems appear in the result in ascending index order. Keeping
    nothing returns the 1x1 matrix holding the full trace.
    """
    m = np.asarray(m, dtype=complex)
    dims = _check_dims(m, dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    for k in keep:
        if not 0 <= k < n:
            raise IndexError(f"subsystem index {k} out of range for {n} subsystems")
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * n > len(letters):
        raise ValueError("too many subsystems")
    row = list(letters[:n])
    col = [letters[n + i] if i in keep else row[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep])) if keep else 1
    return res.reshape(d, d)


def permute_subsystems(m: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: factor ``perm[j]`` of the input becomes factor ``j``."""
    m = np.asarray(m, dtype=complex)
    dims = _check_dims(m, dims)
    n = len(dims)
    perm = list(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of {n} subsystems")
    t = m.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    return t.reshape(m.shape)


def trace_distance(rho: np.ndarray, sigma: np.ndarray, atol: float | None = None) -> float:
    """Half the trace norm of ``rho - sigma`` for Hermitian inputs."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    if not (is_hermitian(rho, atol) and is_hermitian(sigma, atol)):
        raise ValueError("trace distance needs Hermitian inputs")
    diff = rho - sigma
    diff = (diff + dag(diff)) / 2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def psd_sqrt(m: np.ndarray, atol: float | None = None) -> np.ndarray:
    """Principal square root of a PSD matrix.

    Eigenvalues in ``[-atol, 0)`` are treated as roundoff and clipped.
    """
    m = as_matrix(m)
    tol = _atol(atol)
    if not is_hermitian(m, tol):
        raise ValueError("psd_sqrt needs a Hermitian matrix")
    w, v = np.linalg.eigh((m + dag(m)) / 2)
    if w[0] < -tol:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {w[0]:.3e}")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dag(v)


def pinv_psd_sqrt(m: np.ndarray, rtol: float = DEFAULT_ATOL) -> np.ndarray:
    """Pseudo-inverse of the PSD square root; eigenvalues below ``rtol`` (relative) are dropped."""
    m = as_matrix(m)
    w, v = np.linalg.eigh((m + dag(m)) / 2)
    cut = rtol * max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    inv = np.zeros_like(w)
    big = w > cut
    inv[big] = 1.0 / np.sqrt(w[big])
    return (v * inv) @ dag(v)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def isometry_to_unitary(iso: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Complete an isometry (n x k, orthonormal columns) to an n x n unitary.

    The first ``k`` columns of the result are exactly ``iso``. The
    completing columns are deterministic unless ``rng`` is given.
    """
    iso = as_matrix(iso)
    n, k = iso.shape
    if not is_isometry(iso, 1e-8):
        raise ValueError("columns are not orthonormal")
    if k == n:
        return iso.copy()
    fill = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) if rng else np.eye(n, dtype=complex)
    proj = fill - iso @ (dag(iso) @ fill)
    q, _, _ = scipy.linalg.qr(proj, pivoting=True, mode="economic")
    tail = q[:, : n - k]
    # reorthogonalise against iso once more; pivoted QR leaves ~1e-16 leakage
    tail, _ = np.linalg.qr(tail - iso @ (dag(iso) @ tail))
    return np.concatenate([iso, tail], axis=1)


@dataclass(frozen=True)
class CsdFactors:
    """Factors of ``U = diag(W1, W2) [[C, -S], [S, C]] diag(V1, V2)``."""

    W1: np.ndarray
    W2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    angles: np.ndarray

    def middle(self) -> np.ndarray:
        c = np.diag(np.cos(self.angles))
        s = np.diag(np.sin(self.angles))
        return np.block([[c, -s], [s, c]]).astype(complex)

    def reconstruct(self) -> np.ndarray:
        left = scipy.linalg.block_diag(self.W1, self.W2)
        right = scipy.linalg.block_diag(self.V1, self.V2)
        return left @ self.middle() @ right


def csd(u: np.ndarray, atol: float | None = None) -> CsdFactors:
    """Balanced cosine-sine decomposition of an even-dimensional unitary.

    Angles are returned in ascending order in ``[0, pi/2]``.
    """
    u = as_matrix(u)
    if not is_square(u) or u.shape[0] % 2:
        raise ValueError(f"csd needs an even-dimensional square matrix, got {u.shape}")
    if not is_unitary(u, max(_atol(atol), 1e-9)):
        raise ValueError("csd needs a unitary input")
    n = u.shape[0] // 2
    (w1, w2), theta, (v1, v2) = scipy.linalg.cossin(u, p=n, q=n, separate=True)
    theta = np.clip(np.asarray(theta, dtype=float), 0.0, np.pi / 2)
    order = np.argsort(theta, kind="stable")
    return CsdFactors(
        W1=w1[:, order], W2=w2[:, order], V1=v1[order, :], V2=v2[order, :], angles=theta[order]
    )


def csd_param_count(dim: int) -> int:
    """Number of angles consumed by :func:`csd_unitary` for a ``dim``-dimensional unitary.

    ``P(2) = 4`` and ``P(2m) = 4 P(m) + m``.
    """
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"dimension must be a power of two >= 2, got {dim}")
    if dim == 2:
        return 4
    half = dim // 2
    return 4 * csd_param_count(half) + half


def u2_from_angles(phi: float, a: float, b: float, c: float) -> np.ndarray:
    """``exp(i phi) Rz(a) Ry(b) Rz(c)``; all zeros give the identity."""
    rz = lambda t: np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])
    ry = np.array([[np.cos(b / 2), -np.sin(b / 2)], [np.sin(b / 2), np.cos(b / 2)]], dtype=complex)
    return np.exp(1j * phi) * (rz(a) @ ry @ rz(c))


def _csd_build(dim: int, angles: np.ndarray) -> np.ndarray:
    if dim == 2:
        return u2_from_angles(*angles)
    m = dim // 2
    p = csd_param_count(m)
    w1 = _csd_build(m, angles[:p])
    w2 = _csd_build(m, angles[p : 2 * p])
    theta = angles[2 * p : 2 * p + m]
    v1 = _csd_build(m, angles[2 * p + m : 3 * p + m])
    v2 = _csd_build(m, angles[3 * p + m :])
    c, s = np.cos(theta), np.sin(theta)
    return np.block([[(w1 * c) @ v1, -(w1 * s) @ v2], [(w2 * s) @ v1, (w2 * c) @ v2]])


def csd_unitary(k: int, angles: Sequence[float]) -> np.ndarray:
    """Unitary on ``k`` qubits built by recursive cosine-sine composition.

    Angle layout for dimension ``2m``: ``W1 | W2 | theta (m) | V1 | V2``,
    each block laid out the same way one level down; the ``U(2)`` leaves
    take ``(phi, a, b, c)`` as in :func:`u2_from_angles`.
    """
    if k < 1:
        raise ValueError("need at least one qubit")
    dim = 2**k
    angles = np.asarray(angles, dtype=float).ravel()
    need = csd_param_count(dim)
    if angles.size != need:
        raise ValueError(f"csd_unitary({k}) needs {need} angles, got {angles.size}")
    return _csd_build(dim, angles)


def operator_set_rank(ops: Sequence[np.ndarray], atol: float | None = None) -> int:
    """Dimension of the linear span of ``ops``.

    Computed as the rank of the Hilbert-Schmidt Gram matrix
    ``G[p, q] = tr(O_p^dag O_q)``.
    """
    ops = [np.asarray(o, dtype=complex) for o in ops]
    if not ops:
        raise ValueError("operator_set_rank needs at least one operator")
    shape = ops[0].shape
    if any(o.shape != shape for o in ops):
        raise ValueError("all operators must have the same shape")
    vecs = np.stack([o.ravel() for o in ops], axis=1)
    gram = dag(vecs) @ vecs
    w = np.linalg.eigvalsh((gram + dag(gram)) / 2)
    scale = max(1.0, float(w[-1]))
    # Gram eigenvalues are squared singular values, so compare against tol**2-ish noise floor
    return int(np.sum(w > _atol(atol) * scale))


def maximally_entangled(d: int) -> np.ndarray:
    """Normalised ket ``sum_i |i, i> / sqrt(d)``."""
    return np.eye(d, dtype=complex).ravel() / np.sqrt(d)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def schmidt_rank(m: np.ndarray, dims: tuple[int, int], atol: float | None = None) -> int:
    """Operator-Schmidt rank of ``m`` across a bipartition ``dims = (dA, dB)``."""
    m = as_matrix(m)
    da, db = dims
    t = m.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    s = np.linalg.svd(t, compute_uv=False)
    return int(np.sum(s > _atol(atol) * max(1.0, float(s[0]))))
