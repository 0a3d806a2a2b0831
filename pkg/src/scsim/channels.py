"""Quantum channels in Kraus and Choi form.

Choi convention: for a channel with Kraus operators ``K_k`` (``d_out x d_in``)

    omega = (1/d_in) sum_k vec(K_k) vec(K_k)^dag,    vec(K)[(a, i)] = K[a, i]

i.e. the output factor comes first and the state has unit trace, so trace
preservation reads ``tr_out(omega) = I / d_in``. With this ordering the
``d_out x d_out`` grid of ``d_in x d_in`` blocks of ``d_in * omega`` is
``D[a, b] = conj(E^dag(|a><b|))``; trace preservation is
``sum_a D[a, a] = I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .linalg import (
    X,
    as_matrix,
    dag,
    get_atol,
    haar_unitary,
    is_psd,
    isometry_to_unitary,
    max_abs,
    operator_set_rank,
    partial_trace,
    pinv_psd_sqrt,
    psd_sqrt,
    trace_distance,
    u2_from_angles,
)


@dataclass(frozen=True)
class KrausChannel:
    """Channel given by Kraus operators of shape ``(d_out, d_in)``.

    Construction only checks shapes; use :meth:`is_cptp` or
    :meth:`completeness_residual` to check trace preservation.
    """

    kraus: tuple[np.ndarray, ...]
    d_in: int
    d_out: int

    def __init__(self, kraus: Sequence[np.ndarray], d_in: int | None = None, d_out: int | None = None):
        ops = tuple(as_matrix(k) for k in kraus)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        d_out = ops[0].shape[0] if d_out is None else int(d_out)
        d_in = ops[0].shape[1] if d_in is None else int(d_in)
        for k in ops:
            if k.shape != (d_out, d_in):
                raise ValueError(f"Kraus operator of shape {k.shape}, expected {(d_out, d_in)}")
        object.__setattr__(self, "kraus", ops)
        object.__setattr__(self, "d_in", d_in)
        object.__setattr__(self, "d_out", d_out)

    def __len__(self) -> int:
        return len(self.kraus)

    def stacked(self) -> np.ndarray:
        return np.stack(self.kraus)

    def completeness_residual(self) -> float:
        k = self.stacked()
        return max_abs(np.einsum("kai,kaj->ij", k.conj(), k) - np.eye(self.d_in))

    def is_cptp(self, atol: float | None = None) -> bool:
        return self.completeness_residual() <= (get_atol() if atol is None else atol)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        rho = as_matrix(rho)
        if rho.shape != (self.d_in, self.d_in):
            raise ValueError(f"input of shape {rho.shape}, channel expects {self.d_in}")
        k = self.stacked()
        return np.einsum("kai,ij,kbj->ab", k, rho, k.conj())

    def then(self, other: "KrausChannel") -> "KrausChannel":
        """Composition ``other o self`` (apply ``self`` first)."""
        if other.d_in != self.d_out:
            raise ValueError("dimension mismatch in composition")
        return KrausChannel([b @ a for b in other.kraus for a in self.kraus], self.d_in, other.d_out)


@dataclass(frozen=True)
class ChoiState:
    """Unit-trace Choi state, output factor first."""

    matrix: np.ndarray
    d_in: int
    d_out: int

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape != (self.d_in * self.d_out,) * 2:
            raise ValueError(f"Choi matrix of shape {m.shape} does not match d_in={self.d_in}, d_out={self.d_out}")
        object.__setattr__(self, "matrix", m)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.d_out, self.d_in)

    def input_marginal(self) -> np.ndarray:
        return partial_trace(self.matrix, self.dims, keep=[1])

    def tp_residual(self) -> float:
        return max_abs(self.input_marginal() - np.eye(self.d_in) / self.d_in)

    def is_valid(self, atol: float | None = None) -> bool:
        tol = get_atol() if atol is None else atol
        return is_psd(self.matrix, tol) and self.tp_residual() <= tol

    def rank(self, atol: float | None = None) -> int:
        tol = get_atol() if atol is None else atol
        w = np.linalg.eigvalsh((self.matrix + dag(self.matrix)) / 2)
        return int(np.sum(w > tol))

    def block(self, a: int, b: int) -> np.ndarray:
        """``D[a, b]``: the ``(a, b)`` output block of ``d_in * omega``."""
        d = self.d_in
        return self.d_in * self.matrix[a * d : (a + 1) * d, b * d : (b + 1) * d]

    def distance(self, other: "ChoiState") -> float:
        return trace_distance(self.matrix, other.matrix)


def choi_from_kraus(ch: KrausChannel) -> ChoiState:
    vecs = ch.stacked().reshape(len(ch), -1)
    return ChoiState(vecs.T @ vecs.conj() / ch.d_in, ch.d_in, ch.d_out)


def kraus_from_choi(w: ChoiState, atol: float | None = None) -> KrausChannel:
    """Minimal Kraus set from the eigendecomposition of the Choi state.

    The returned operators are orthogonal in the Hilbert-Schmidt sense and
    linearly independent.
    """
    tol = get_atol() if atol is None else atol
    if not is_psd(w.matrix, tol):
        raise ValueError("Choi matrix is not PSD")
    if w.tp_residual() > tol:
        raise ValueError(f"Choi state is not trace preserving (residual {w.tp_residual():.3e})")
    evals, evecs = np.linalg.eigh((w.matrix + dag(w.matrix)) / 2)
    keep = evals > tol
    if not np.any(keep):
        raise ValueError("Choi matrix has no eigenvalue above tolerance")
    ops = [np.sqrt(w.d_in * lam) * v.reshape(w.d_out, w.d_in) for lam, v in zip(evals[keep][::-1], evecs[:, keep].T[::-1])]
    return KrausChannel(ops, w.d_in, w.d_out)


def canonical(ch: KrausChannel) -> KrausChannel:
    return kraus_from_choi(choi_from_kraus(ch))


def kraus_rank(ch: KrausChannel, atol: float | None = None) -> int:
    return choi_from_kraus(ch).rank(atol)


def is_extreme(ch: KrausChannel, atol: float | None = None) -> bool:
    """Choi's criterion on the canonical Kraus set: ``{K_i^dag K_j}`` linearly independent."""
    ops = canonical(ch).kraus
    products = [a.conj().T @ b for a in ops for b in ops]
    return operator_set_rank(products, atol) == len(ops) ** 2


def is_gen_extreme(ch: KrausChannel, atol: float | None = None) -> bool:
    return kraus_rank(ch, atol) <= ch.d_in


def is_quasi_extreme(ch: KrausChannel, atol: float | None = None) -> bool:
    return is_gen_extreme(ch, atol) and not is_extreme(ch, atol)


def is_unital(ch: KrausChannel, atol: float | None = None) -> bool:
    if ch.d_in != ch.d_out:
        raise ValueError("unitality needs d_in == d_out")
    k = ch.stacked()
    out = np.einsum("kai,kbi->ab", k, k.conj())
    return max_abs(out - np.eye(ch.d_out)) <= (get_atol() if atol is None else atol)


def complementary_channel(ch: KrausChannel, rho: np.ndarray) -> np.ndarray:
    """Environment output: entry ``(i, j)`` is ``tr(K_j^dag K_i rho)``."""
    rho = as_matrix(rho)
    if rho.shape != (ch.d_in, ch.d_in):
        raise ValueError(f"state of shape {rho.shape}, channel expects {ch.d_in}")
    k = ch.stacked()
    return np.einsum("iab,bc,jac->ij", k, rho, k.conj())


def nonunitality_witnesses(ch: KrausChannel) -> tuple[np.ndarray, np.ndarray]:
    """``(E(I), sigma)`` with ``sigma[i, j] = tr(K_j^dag K_i)``."""
    if ch.d_in != ch.d_out:
        raise ValueError("non-unitality witnesses need d_in == d_out")
    return ch(np.eye(ch.d_in, dtype=complex)), complementary_channel(ch, np.eye(ch.d_in, dtype=complex))


# --- standard channels ---------------------------------------------------


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel([np.eye(d, dtype=complex)])


def unitary_channel(u: np.ndarray) -> KrausChannel:
    return KrausChannel([as_matrix(u)])


def amplitude_damping(gamma: float) -> KrausChannel:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel([k0, k1])


def depolarizing(p: float) -> KrausChannel:
    """``rho -> (1 - p) rho + p I/2``; ``p = 1`` is completely depolarizing."""
    from .linalg import PAULIS

    weights = [1 - 3 * p / 4] + [p / 4] * 3
    return KrausChannel([np.sqrt(w) * s for w, s in zip(weights, PAULIS) if w > 0])


def kraus_from_isometry(t: np.ndarray, d_out: int) -> KrausChannel:
    """Kraus set of the Stinespring isometry ``t`` with rows indexed ``(output, ancilla)``."""
    t = as_matrix(t)
    d_in = t.shape[1]
    r = t.shape[0] // d_out
    k = t.reshape(d_out, r, d_in).transpose(1, 0, 2)
    return KrausChannel(list(k), d_in, d_out)


def random_channel(d: int, rank: int, rng: np.random.Generator, d_out: int | None = None) -> KrausChannel:
    """Channel from the first ``d`` columns of a Haar unitary on output x ancilla(rank)."""
    d_out = d if d_out is None else d_out
    if d_out * rank < d:
        raise ValueError("output x ancilla too small for an isometry")
    u = haar_unitary(d_out * rank, rng)
    return kraus_from_isometry(u[:, :d], d_out)


def random_mixed_unitary(d: int, n: int, rng: np.random.Generator) -> KrausChannel:
    p = rng.dirichlet(np.ones(n))
    return KrausChannel([np.sqrt(pi) * haar_unitary(d, rng) for pi in p])


def stinespring_unitary(ch: KrausChannel) -> np.ndarray:
    """Unitary ``W`` on system x ancilla with ``K_k = (I x <k|) W (I x |0>)``.

    Needs ``d_in == d_out``; the ancilla dimension is the number of Kraus
    operators.
    """
    if ch.d_in != ch.d_out:
        raise ValueError("dilation to a unitary needs d_in == d_out")
    d, r = ch.d_in, len(ch)
    iso = ch.stacked().transpose(1, 0, 2).reshape(d * r, d)
    u = isometry_to_unitary(iso)
    # isometry_to_unitary puts the isometry in the first columns; move them to the |i, 0> slots
    order = [i * r for i in range(d)] + [i * r + j for i in range(d) for j in range(1, r)]
    w = np.empty_like(u)
    w[:, order] = u
    return w


# --- gen-extreme qubit ansatz ----------------------------------------------


@dataclass(frozen=True)
class RswCanonicalPair:
    """``F0 = diag(cos b, cos a)``, ``F1 = [[0, sin a], [sin b, 0]]``."""

    alpha: float
    beta: float

    def kraus(self) -> KrausChannel:
        a, b = self.alpha, self.beta
        f0 = np.array([[np.cos(b), 0], [0, np.cos(a)]], dtype=complex)
        f1 = np.array([[0, np.sin(a)], [np.sin(b), 0]], dtype=complex)
        return KrausChannel([f0, f1])


@dataclass(frozen=True)
class GenExtremeQubitAnsatz:
    """Angles for ``K0 = W1 C V``, ``K1 = W2 S V``.

    Layout: ``V (4) | W1 (4) | W2 (4) | theta1, theta2``; each ``U(2)``
    block is ``(phi, a, b, c)`` for :func:`scsim.linalg.u2_from_angles`.
    """

    angles: np.ndarray = field(default_factory=lambda: np.zeros(GenExtremeQubitAnsatz.N_PARAMS))

    N_PARAMS = 14

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).ravel()
        if a.size != self.N_PARAMS:
            raise ValueError(f"gen-extreme qubit ansatz needs {self.N_PARAMS} angles, got {a.size}")
        object.__setattr__(self, "angles", a)

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        a = self.angles
        return u2_from_angles(*a[0:4]), u2_from_angles(*a[4:8]), u2_from_angles(*a[8:12]), a[12:14]


def gen_extreme_kraus(v: np.ndarray, w1: np.ndarray, w2: np.ndarray, thetas: Sequence[float]) -> KrausChannel:
    c = np.diag(np.cos(thetas))
    s = np.diag(np.sin(thetas))
    return KrausChannel([w1 @ c @ v, w2 @ s @ v])


def gen_extreme_channel(ansatz: GenExtremeQubitAnsatz | Sequence[float]) -> KrausChannel:
    if not isinstance(ansatz, GenExtremeQubitAnsatz):
        ansatz = GenExtremeQubitAnsatz(np.asarray(ansatz, dtype=float))
    return gen_extreme_kraus(*ansatz.blocks())


# --- circuit extraction for gen-extreme channels ----------------------------


def _blocks(w: ChoiState) -> np.ndarray:
    """``D[a, b]`` as an array of shape ``(d_out, d_out, d_in, d_in)``."""
    d, e = w.d_in, w.d_out
    return d * w.matrix.reshape(e, d, e, d).transpose(0, 2, 1, 3)


def _isometry_from_blocks(xs: np.ndarray) -> np.ndarray:
    # xs[a] = X_a (d_in x d_in); V = sum_a |a> (x) X_a
    return xs.reshape(-1, xs.shape[-1])


def choi_to_isometry(w: ChoiState, atol: float | None = None) -> np.ndarray:
    """Isometry ``V = sum_a |a> (x) U_a sqrt(D_aa)`` for a gen-extreme Choi state.

    Returns a ``(d_out * d_in) x d_in`` isometry with rows indexed
    ``(a, k)``. The channel's Kraus operators are
    ``K_k[a, i] = conj(V[(a, k), i])`` (see :func:`kraus_from_choi_isometry`).
    The gauge is ``U_0 = I``. When ``D_00`` is singular the blocks are
    recovered from an eigen-factorisation of the Choi matrix instead of the
    pseudo-inverse square root.
    """
    tol = get_atol() if atol is None else atol
    if not is_psd(w.matrix, max(tol, 1e-9)):
        raise ValueError("Choi matrix is not PSD")
    if w.rank(max(tol, 1e-9)) > w.d_in:
        raise ValueError(f"Choi rank {w.rank()} exceeds d_in={w.d_in}; not gen-extreme")
    d, e = w.d_in, w.d_out
    blocks = _blocks(w)
    d00 = blocks[0, 0]
    evals = np.linalg.eigvalsh((d00 + dag(d00)) / 2)
    if evals[0] > 1e-6:
        root = psd_sqrt(d00)
        inv_root = pinv_psd_sqrt(d00)
        xs = np.stack([root] + [inv_root @ blocks[0, b] for b in range(1, e)])
    else:
        gram = d * w.matrix
        lam, vec = np.linalg.eigh((gram + dag(gram)) / 2)
        lam, vec = lam[::-1][:d], vec[:, ::-1][:, :d]
        x = np.sqrt(np.clip(lam, 0, None))[:, None] * dag(vec)  # d_in x (e d_in), X^dag X = gram
        xs = x.reshape(d, e, d).transpose(1, 0, 2)
        q, _ = scipy.linalg.polar(xs[0])
        xs = np.einsum("ij,ajk->aik", dag(q), xs)
    return _isometry_from_blocks(xs)


def kraus_from_choi_isometry(v: np.ndarray, d_out: int) -> KrausChannel:
    """Kraus operators ``K_k[a, i] = conj(V[(a, k), i])`` of the isometry from :func:`choi_to_isometry`."""
    return kraus_from_isometry(np.conj(as_matrix(v)), d_out)


# --- exact decomposition of qubit-output channels --------------------------


def rsw_decompose(ch: KrausChannel, atol: float | None = None) -> tuple[KrausChannel, KrausChannel]:
    """Split a channel with qubit output into an average of two gen-extreme channels.

    The off-diagonal output block ``D01 = sqrt(D00) A sqrt(D11)`` holds a
    contraction ``A = P diag(cos t) Q^dag``; replacing ``A`` by the unitaries
    ``P exp(+-i t) Q^dag`` gives two rank-``<= d_in`` Choi states with the
    same diagonal blocks whose average is the input.
    """
    if ch.d_out != 2:
        raise ValueError("rsw_decompose needs a qubit output")
    w = choi_from_kraus(ch)
    d = w.d_in
    blocks = _blocks(w)
    r0, r1 = psd_sqrt(blocks[0, 0], 1e-9), psd_sqrt(blocks[1, 1], 1e-9)
    a = pinv_psd_sqrt(blocks[0, 0]) @ blocks[0, 1] @ pinv_psd_sqrt(blocks[1, 1])
    p, sigma, qh = np.linalg.svd(a)
    theta = np.arccos(np.clip(sigma, 0.0, 1.0))
    parts = []
    for sign in (1, -1):
        u = (p * np.exp(sign * 1j * theta)) @ qh
        off = r0 @ u @ r1
        # the output-block grid is already the (a, i), (b, j) Choi ordering
        full = np.block([[blocks[0, 0], off], [dag(off), blocks[1, 1]]])
        parts.append(ChoiState(full / d, d, 2))
    recon = ChoiState((parts[0].matrix + parts[1].matrix) / 2, d, 2)
    err = trace_distance(recon.matrix, w.matrix)
    if err > 1e-8:
        raise RuntimeError(f"RSW reconstruction failed: trace distance {err:.3e}")
    return tuple(kraus_from_choi(p, atol=1e-9) for p in parts)  # type: ignore[return-value]


def canonical_pair_from_ansatz(alpha: float, beta: float) -> KrausChannel:
    """Gen-extreme ansatz with ``V = W1 = I``, ``W2 = X`` and ``thetas = (beta, alpha)``."""
    eye = np.eye(2, dtype=complex)
    return gen_extreme_kraus(eye, eye, X, [beta, alpha])
