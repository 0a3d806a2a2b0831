"""Qubit superchannels realised by a pre unitary ``V`` and a post unitary ``W``.

Wiring (system dimension ``d``, memory ``a1``, fresh post ancilla ``a2``)::

    H0 --[ V ]-- H1 --(E)-- H2 --[ W ]-- H3
    |0>_a1 -[ V ]== memory (a1) ======[ W ]== junk (a1 a2)
                              |0>_a2 -[ W ]

``V`` acts on ``system (x) ancilla(a1)`` and its ancilla output is the
memory; ``W`` acts on ``system (x) memory(a1) (x) fresh(a2)``. The physical
pre Kraus operators are ``A_m = <m|V|0>`` and the post ones
``B_{ma} = <a|W|m, 0>``, so the output channel of an input ``{K_i}`` is

    F_i^a = sum_m B_{ma} K_i A_m.

On Choi states (output factor first, row-major ``vec``) this reads
``vec(F_i^a) = S_a vec(K_i)`` with ``S_a = sum_m B_{ma} (x) A_m^T``.

The superchannel Choi matrix lives on ``H3 (x) H2 (x) H1 (x) H0`` (that
order, see :data:`SPACE_ORDER`) and has unit trace. For every valid
superchannel

    tr_3 R = I_2/d (x) R_10,      tr_1 R_10 = I_0/d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import ChoiState, KrausChannel, choi_from_kraus, stinespring_unitary, unitary_channel
from .linalg import (
    PAULIS,
    as_matrix,
    csd_param_count,
    csd_unitary,
    dag,
    get_atol,
    haar_unitary,
    is_psd,
    is_unitary,
    isometry_to_unitary,
    max_abs,
    operator_set_rank,
    partial_trace,
    permute_subsystems,
)

SPACE_ORDER = ("H3", "H2", "H1", "H0")

CLASSES = ("full", "rank8", "gen_extreme")


@dataclass(frozen=True)
class Superchannel:
    V: np.ndarray
    W: np.ndarray
    anc_dims: tuple[int, int]
    d: int = 2
    label: str = ""

    def __post_init__(self):
        v, w = as_matrix(self.V), as_matrix(self.W)
        a1, a2 = (int(a) for a in self.anc_dims)
        if v.shape != (self.d * a1,) * 2:
            raise ValueError(f"V has shape {v.shape}, expected {(self.d * a1,) * 2} for d={self.d}, a1={a1}")
        if w.shape != (self.d * a1 * a2,) * 2:
            raise ValueError(f"W has shape {w.shape}, expected {(self.d * a1 * a2,) * 2} for a1={a1}, a2={a2}")
        object.__setattr__(self, "V", v)
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "anc_dims", (a1, a2))

    @property
    def memory_dim(self) -> int:
        return self.anc_dims[0]

    def pre_kraus(self) -> np.ndarray:
        """``A[m] = <m|V|0>``, shape ``(a1, d, d)``."""
        d, a1 = self.d, self.anc_dims[0]
        return self.V.reshape(d, a1, d, a1)[:, :, :, 0].transpose(1, 0, 2)

    def post_kraus(self) -> np.ndarray:
        """``B[m, a] = <a|W|m, 0>``, shape ``(a1, a1 * a2, d, d)``."""
        d, (a1, a2) = self.d, self.anc_dims
        return self.W.reshape(d, a1 * a2, d, a1, a2)[:, :, :, :, 0].transpose(3, 1, 0, 2)

    def pre_channel(self) -> KrausChannel:
        return KrausChannel(list(self.pre_kraus()))

    def unitarity_residual(self) -> float:
        return max(max_abs(dag(self.V) @ self.V - np.eye(self.V.shape[0])), max_abs(dag(self.W) @ self.W - np.eye(self.W.shape[0])))


@dataclass(frozen=True)
class SuperChoi:
    """Unit-trace superchannel Choi matrix on ``H3 H2 H1 H0``."""

    matrix: np.ndarray
    d: int = 2

    space_order = SPACE_ORDER

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape != (self.d**4,) * 2:
            raise ValueError(f"super-Choi matrix has shape {m.shape}, expected {(self.d**4,) * 2}")
        object.__setattr__(self, "matrix", m)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.d,) * 4

    def marginal(self, spaces: Sequence[str]) -> np.ndarray:
        """Reduced matrix on the named spaces, in :data:`SPACE_ORDER` order."""
        keep = sorted(SPACE_ORDER.index(s) for s in spaces)
        return partial_trace(self.matrix, self.dims, keep)

    def rank(self, atol: float | None = None) -> int:
        tol = get_atol() if atol is None else atol
        return int(np.sum(np.linalg.eigvalsh((self.matrix + dag(self.matrix)) / 2) > tol))


def super_kraus(sc: Superchannel) -> list[np.ndarray]:
    """Choi-level Kraus operators ``S_a = sum_m B_{ma} (x) A_m^T`` (``d^2 x d^2``)."""
    a = sc.pre_kraus()
    b = sc.post_kraus()
    d = sc.d
    s = np.einsum("maij,mlk->aikjl", b, a).reshape(b.shape[1], d * d, d * d)
    return list(s)


def nonzero_ops(ops: Sequence[np.ndarray], atol: float | None = None) -> list[np.ndarray]:
    tol = get_atol() if atol is None else atol
    return [o for o in ops if max_abs(o) > tol]


def completeness_residual(ops: Sequence[np.ndarray]) -> float:
    """``max |sum_a S_a^dag S_a - I|``."""
    s = np.stack(ops)
    return max_abs(np.einsum("aji,ajk->ik", s.conj(), s) - np.eye(s.shape[-1]))


def choi_trace_residual(ops: Sequence[np.ndarray], d: int = 2) -> float:
    """Deviation from trace preservation on channel Choi states.

    ``sum_a S_a^dag S_a`` must equal ``I_d (x) Y`` with ``tr Y = d`` for the
    superchannel to map every trace-one channel Choi state to a trace-one
    state. Returns the max-norm residual of that structure.
    """
    s = np.stack(ops)
    m = np.einsum("aji,ajk->ik", s.conj(), s)
    y = partial_trace(m, (d, d), keep=[1]) / d
    return max(max_abs(m - np.kron(np.eye(d), y)), abs(np.trace(y) - d))


def apply_superchannel(sc: Superchannel, ch: KrausChannel) -> KrausChannel:
    """Output channel ``F_i^a = sum_m B_{ma} K_i A_m``."""
    if ch.d_in != sc.d or ch.d_out != sc.d:
        raise ValueError(f"superchannel on d={sc.d} cannot take a {ch.d_in}->{ch.d_out} channel")
    a = sc.pre_kraus()
    b = sc.post_kraus()
    k = ch.stacked()
    f = np.einsum("maxy,iyz,mzw->iaxw", b, k, a)
    return KrausChannel(list(f.reshape(-1, sc.d, sc.d)), sc.d, sc.d)


def act_on_choi(ops: Sequence[np.ndarray], w: ChoiState) -> ChoiState:
    """``sum_a S_a omega S_a^dag``."""
    s = np.stack(ops)
    return ChoiState(np.einsum("aij,jk,alk->il", s, w.matrix, s.conj()), w.d_in, w.d_out)


def super_choi_from_kraus(ops: Sequence[np.ndarray], d: int = 2) -> SuperChoi:
    s = np.stack(ops).reshape(len(ops), -1)
    raw = s.T @ s.conj() / d**2  # factors ordered H3, H0, H2, H1
    return SuperChoi(permute_subsystems(raw, (d,) * 4, [0, 2, 3, 1]), d)


def super_choi(sc: Superchannel) -> SuperChoi:
    return super_choi_from_kraus(super_kraus(sc), sc.d)


def _raw_choi(r: SuperChoi) -> np.ndarray:
    # back to H3, H0, H2, H1: the Choi matrix of the map on the doubled space
    return permute_subsystems(r.matrix, r.dims, [0, 3, 1, 2])


def kraus_from_super_choi(r: SuperChoi, atol: float | None = None) -> list[np.ndarray]:
    """Linearly independent Choi-level Kraus set from an eigendecomposition."""
    tol = get_atol() if atol is None else atol
    lam, vec = np.linalg.eigh(_raw_choi(r))
    d2 = r.d**2
    return [np.sqrt(d2 * l) * v.reshape(d2, d2) for l, v in zip(lam[::-1], vec.T[::-1]) if l > tol]


def comb_validity(r: SuperChoi | np.ndarray, atol: float | None = None, d: int = 2) -> bool:
    """PSD, unit trace and the recursive causality marginals.

    ``tr_3 R = I_2/d (x) R_10`` and ``tr_1 R_10 = I_0/d``.
    """
    tol = get_atol() if atol is None else atol
    if not isinstance(r, SuperChoi):
        m = as_matrix(r)
        if m.shape != (d**4, d**4):
            return False
        r = SuperChoi(m, d)
    d = r.d
    m = r.matrix
    if not is_psd(m, tol) or abs(np.trace(m) - 1) > tol:
        return False
    r210 = r.marginal(["H2", "H1", "H0"])
    r10 = r.marginal(["H1", "H0"])
    if max_abs(r210 - np.kron(np.eye(d) / d, r10)) > tol:
        return False
    r0 = partial_trace(r10, (d, d), keep=[1])
    return max_abs(r0 - np.eye(d) / d) <= tol


def parameter_count(n: int, d: int) -> int:
    """Real parameters of an ``n``-superchannel Choi state on qudits (``n = 0``: channels)."""
    if n < 0 or d < 2:
        raise ValueError("need n >= 0 and d >= 2")
    num = d**2 * (d ** (4 * (n + 1)) - 1)
    q, rem = divmod(num, d**2 + 1)
    assert rem == 0
    return q


def parameter_count_recursive(n: int, d: int) -> int:
    y = d**2 * (d**2 - 1)
    for k in range(1, n + 1):
        y += (d**2 - 1) * d ** (4 * k + 2)
    return y


def super_extreme_necessary(ops: Sequence[np.ndarray], d: int = 2, atol: float | None = None) -> bool:
    """Necessary extremality condition: ``{S_a^dag S_b}`` linearly independent.

    The operators are first reduced to a linearly independent set through
    the superchannel Choi matrix.
    """
    canon = kraus_from_super_choi(super_choi_from_kraus(ops, d), atol)
    products = [a.conj().T @ b for a in canon for b in canon]
    return operator_set_rank(products, atol) == len(canon) ** 2


def complementary_superchannel(ops: Sequence[np.ndarray], w: ChoiState) -> np.ndarray:
    """Entry ``(a, b)`` is ``tr(S_b^dag S_a omega)``."""
    s = np.stack(ops)
    if w.matrix.shape != s.shape[1:]:
        raise ValueError(f"Choi state of shape {w.matrix.shape} does not match operators {s.shape[1:]}")
    return np.einsum("aij,jk,bik->ab", s, w.matrix, s.conj())


def unital_class_check(sc: Superchannel | SuperChoi, atol: float | None = None) -> dict[str, bool]:
    """Identity-preserving (IP), doubly-stochastic (DS), unital-preserving (UP) flags.

    With unit-trace marginals:
    (a) ``R_310 = I_3/d (x) R_10``; (b) ``R_31 = I/d^2``;
    (c) ``R_321 = R_32 (x) I_1/d``. IP is (a), DS is (a) and (b), UP is
    (b) and (c).
    """
    tol = get_atol() if atol is None else atol
    r = super_choi(sc) if isinstance(sc, Superchannel) else sc
    d = r.d
    eye = np.eye(d) / d
    cond_a = max_abs(r.marginal(["H3", "H1", "H0"]) - np.kron(eye, r.marginal(["H1", "H0"]))) <= tol
    cond_b = max_abs(r.marginal(["H3", "H1"]) - np.kron(eye, eye)) <= tol
    cond_c = max_abs(r.marginal(["H3", "H2", "H1"]) - np.kron(r.marginal(["H3", "H2"]), eye)) <= tol
    return {"IP": cond_a, "DS": cond_a and cond_b, "UP": cond_b and cond_c}


# --- constructors -----------------------------------------------------------


def identity_superchannel(d: int = 2) -> Superchannel:
    return Superchannel(np.eye(d, dtype=complex), np.eye(d, dtype=complex), (1, 1), d, "identity")


def _embed_memory(w_sf: np.ndarray, d: int, a1: int, a2: int) -> np.ndarray:
    """``W`` on ``system, memory, fresh`` acting as ``w_sf`` on ``system, fresh`` and trivially on memory."""
    w = w_sf.reshape(d, a2, d, a2)
    full = np.einsum("xfyg,mn->xmfyng", w, np.eye(a1))
    return full.reshape(d * a1 * a2, d * a1 * a2)


def product_superchannel(pre: KrausChannel, post: KrausChannel) -> Superchannel:
    """Superchannel ``E -> post o E o pre`` with no memory shared between the two."""
    d = pre.d_in
    if not (pre.d_out == post.d_in == post.d_out == d):
        raise ValueError("pre and post must act on the same system")
    v = stinespring_unitary(pre)
    w_sf = stinespring_unitary(post)
    a1, a2 = len(pre), len(post)
    return Superchannel(v, _embed_memory(w_sf, d, a1, a2), (a1, a2), d, "product")


def unitary_superchannel(u_pre: np.ndarray, u_post: np.ndarray) -> Superchannel:
    return product_superchannel(unitary_channel(u_pre), unitary_channel(u_post))


def pauli_twirl_superchannel() -> Superchannel:
    """``E -> (1/4) sum_k P_k E(P_k . P_k) P_k`` with the Pauli index kept in memory."""
    d, a1 = 2, 4
    iso = np.zeros((d * a1, d), dtype=complex)
    for k, p in enumerate(PAULIS):
        iso.reshape(d, a1, d)[:, k, :] = p / 2
    v = isometry_to_unitary(iso)
    order = [i * a1 for i in range(d)] + [i * a1 + m for i in range(d) for m in range(1, a1)]
    v_full = np.empty_like(v)
    v_full[:, order] = v
    w = sum(np.kron(p, np.diag(np.eye(a1)[k])) for k, p in enumerate(PAULIS)).astype(complex)
    return Superchannel(v_full, w, (a1, 1), d, "pauli_twirl")


def random_superchannel(klass: str, rng: np.random.Generator, d: int = 2) -> Superchannel:
    """Haar-random superchannel.

    ``full``: ``V in U(d^3)``, ``W in U(d^5)``; ``rank8``: ``W in U(d^4)``
    with a qubit-sized fresh ancilla; ``gen_extreme``: type-I wiring with
    ``V, W in U(d^3)``.
    """
    a1 = d * d
    if klass == "full":
        a2 = d * d
    elif klass == "rank8":
        a2 = d
    elif klass == "gen_extreme":
        a2 = 1
    else:
        raise ValueError(f"unknown superchannel class {klass!r}; choose from {CLASSES}")
    v = haar_unitary(d * a1, rng)
    w = haar_unitary(d * a1 * a2, rng)
    return Superchannel(v, w, (a1, a2), d, klass)


CIRCUIT_TYPES = ("I", "II", "III")


@dataclass(frozen=True)
class GenExtremeSuperCircuit:
    """Angles for the gen-extreme qubit superchannel circuits.

    Type I: ``V, W in U(8)``, memory of dimension 4, no fresh post ancilla.
    Type II: ``V in U(4)``, ``W in U(8)``, memory 2, fresh qubit ancilla.
    Type III: ``V, W in U(4)``, no memory (two independent channels).
    Angles are ``V`` first, then ``W``, each in :func:`csd_unitary` layout.
    """

    circuit_type: str
    angles: np.ndarray

    def __post_init__(self):
        if self.circuit_type not in CIRCUIT_TYPES:
            raise ValueError(f"unknown circuit type {self.circuit_type!r}")
        a = np.asarray(self.angles, dtype=float).ravel()
        if a.size != self.param_count(self.circuit_type):
            raise ValueError(f"type {self.circuit_type} needs {self.param_count(self.circuit_type)} angles, got {a.size}")
        object.__setattr__(self, "angles", a)

    @staticmethod
    def unitary_dims(circuit_type: str) -> tuple[int, int]:
        return {"I": (8, 8), "II": (4, 8), "III": (4, 4)}[circuit_type]

    @staticmethod
    def param_count(circuit_type: str) -> int:
        dv, dw = GenExtremeSuperCircuit.unitary_dims(circuit_type)
        return csd_param_count(dv) + csd_param_count(dw)


def _split(angles: np.ndarray, dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    pv = csd_param_count(dims[0])
    return csd_unitary(int(np.log2(dims[0])), angles[:pv]), csd_unitary(int(np.log2(dims[1])), angles[pv:])


def gen_extreme_super(c: GenExtremeSuperCircuit) -> Superchannel:
    v, w = _split(c.angles, GenExtremeSuperCircuit.unitary_dims(c.circuit_type))
    if c.circuit_type == "I":
        return Superchannel(v, w, (4, 1), 2, "type-I")
    if c.circuit_type == "II":
        return Superchannel(v, w, (2, 2), 2, "type-II")
    return Superchannel(v, _embed_memory(w, 2, 2, 2), (2, 2), 2, "type-III")


RANK8_PARAMS = csd_param_count(8) + csd_param_count(16)


def rank8_superchannel(angles: Sequence[float]) -> Superchannel:
    """``V in U(8)`` with memory 4, ``W in U(16)`` on system, memory and a fresh qubit."""
    a = np.asarray(angles, dtype=float).ravel()
    if a.size != RANK8_PARAMS:
        raise ValueError(f"rank-8 superchannel needs {RANK8_PARAMS} angles, got {a.size}")
    v, w = _split(a, (8, 16))
    return Superchannel(v, w, (4, 2), 2, "rank8")


def is_valid_superchannel(sc: Superchannel, atol: float | None = None) -> bool:
    tol = get_atol() if atol is None else atol
    return is_unitary(sc.V, tol) and is_unitary(sc.W, tol) and comb_validity(super_choi(sc), tol)


def induced_channels(sc: Superchannel) -> tuple[KrausChannel, KrausChannel]:
    """Pre and post channels of a memoryless (type-III / product) superchannel.

    The post channel is read off the ``m = 0`` memory slice; this is only
    meaningful when ``W`` acts trivially on the memory.
    """
    b = sc.post_kraus()
    a1, a2 = sc.anc_dims
    post = [b[0, 0 * a2 + f] for f in range(a2)]
    return sc.pre_channel(), KrausChannel(post)


def superchannel_choi_as_channel(r: SuperChoi) -> ChoiState:
    """The super-Choi matrix viewed as a channel Choi state on the doubled space."""
    d = r.d
    return ChoiState(_raw_choi(r), d * d, d * d)


def output_choi(sc: Superchannel, ch: KrausChannel) -> ChoiState:
    return choi_from_kraus(apply_superchannel(sc, ch))
