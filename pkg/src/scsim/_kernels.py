"""JAX versions of the ansatz Choi maps, used for gradients in the local search.

Importing this module switches JAX to 64-bit floats.
"""

from __future__ import annotations

import functools

import jax
import jax.numpy as jnp

jax.config.update("jax_enable_x64", True)

from .linalg import csd_param_count  # noqa: E402


def u2(p):
    """``exp(i phi) Rz(a) Ry(b) Rz(c)`` batched over leading axes of ``p[..., 4]``."""
    phi, a, b, c = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    ea = jnp.exp(-0.5j * a)
    ec = jnp.exp(-0.5j * c)
    cb = jnp.cos(b / 2)
    sb = jnp.sin(b / 2)
    g = jnp.exp(1j * phi)
    row0 = jnp.stack([ea * cb * ec, -ea * sb * jnp.conj(ec)], -1)
    row1 = jnp.stack([jnp.conj(ea) * sb * ec, jnp.conj(ea) * cb * jnp.conj(ec)], -1)
    return g[..., None, None] * jnp.stack([row0, row1], -2)


def csd_unitary(dim: int, a):
    """Batched counterpart of :func:`scsim.linalg.csd_unitary` (same angle layout).

    The four sub-blocks of each level are built in one batched call so the
    traced graph grows with the number of levels only.
    """
    if dim == 2:
        return u2(a)
    m = dim // 2
    p = csd_param_count(m)
    sub = jnp.stack([a[..., :p], a[..., p : 2 * p], a[..., 2 * p + m : 3 * p + m], a[..., 3 * p + m :]], axis=-2)
    blocks = csd_unitary(m, sub)
    w1, w2, v1, v2 = blocks[..., 0, :, :], blocks[..., 1, :, :], blocks[..., 2, :, :], blocks[..., 3, :, :]
    theta = a[..., 2 * p : 2 * p + m]
    c = jnp.cos(theta)[..., None, :]
    s = jnp.sin(theta)[..., None, :]
    top = jnp.concatenate([(w1 * c) @ v1, -(w1 * s) @ v2], -1)
    bottom = jnp.concatenate([(w2 * s) @ v1, (w2 * c) @ v2], -1)
    return jnp.concatenate([top, bottom], -2)


# Each family maps angles (n, P) to vectorised Kraus operators (n, r, D) whose
# outer products, divided by the input dimension, give the Choi matrices.


def _gen_extreme_channel_vecs(a):
    v, w1, w2 = u2(a[:, 0:4]), u2(a[:, 4:8]), u2(a[:, 8:12])
    c = jnp.cos(a[:, 12:14])[:, None, :]
    s = jnp.sin(a[:, 12:14])[:, None, :]
    k0 = (w1 * c) @ v
    k1 = (w2 * s) @ v
    return jnp.stack([k0, k1], 1).reshape(a.shape[0], 2, 4)


def _super_vecs(v, w, a1: int, a2: int):
    n = v.shape[0]
    pre = v.reshape(n, 2, a1, 2, a1)[..., 0]  # (n, h1, m, h0)
    post = w.reshape(n, 2, a1 * a2, 2, a1, a2)[..., 0]  # (n, h3, junk, h2, m)
    x = jnp.einsum("nxaym,nzmw->naxyzw", post, pre)
    return x.reshape(n, a1 * a2, 16)


def _type_i_vecs(a):
    p = csd_param_count(8)
    u = csd_unitary(8, a.reshape(a.shape[0], 2, p))
    return _super_vecs(u[:, 0], u[:, 1], 4, 1)


def _type_ii_vecs(a):
    p4 = csd_param_count(4)
    return _super_vecs(csd_unitary(4, a[:, :p4]), csd_unitary(8, a[:, p4:]), 2, 2)


def _type_iii_vecs(a):
    p4 = csd_param_count(4)
    u = csd_unitary(4, a.reshape(a.shape[0], 2, p4))
    n = a.shape[0]
    pre = u[:, 0].reshape(n, 2, 2, 2, 2)[..., 0]  # (n, h1, m, h0)
    post = u[:, 1].reshape(n, 2, 2, 2, 2)[..., 0]  # (n, h3, f, h2)
    x = jnp.einsum("nxfy,nzmw->nmfxyzw", post, pre)
    return x.reshape(n, 4, 16)


def _rank8_vecs(a):
    p8 = csd_param_count(8)
    return _super_vecs(csd_unitary(8, a[:, :p8]), csd_unitary(16, a[:, p8:]), 4, 2)


# name -> (vec builder, parameter count, input dimension used in the Choi normalisation)
FAMILIES = {
    "gen_extreme_channel": (_gen_extreme_channel_vecs, 14, 2),
    "type_I": (_type_i_vecs, 2 * csd_param_count(8), 4),
    "type_II": (_type_ii_vecs, csd_param_count(4) + csd_param_count(8), 4),
    "type_III": (_type_iii_vecs, 2 * csd_param_count(4), 4),
    "rank8": (_rank8_vecs, csd_param_count(8) + csd_param_count(16), 4),
}


def _mixture(families: tuple[str, ...], free_weights: bool, params):
    """Weighted Choi mixture; families are grouped so equal ones share one batched call."""
    n = len(families)
    offset = 0
    chois = [None] * n
    groups: dict[str, list[int]] = {}
    for i, f in enumerate(families):
        groups.setdefault(f, []).append(i)
    starts = []
    for f in families:
        starts.append(offset)
        offset += FAMILIES[f][1]
    for f, idx in groups.items():
        build, count, d_in = FAMILIES[f]
        block = jnp.stack([params[starts[i] : starts[i] + count] for i in idx])
        vecs = build(block)
        per_term = jnp.einsum("nai,naj->nij", vecs, vecs.conj()) / d_in
        for j, i in enumerate(idx):
            chois[i] = per_term[j]
    stacked = jnp.stack(chois)
    if free_weights:
        weights = jax.nn.softmax(params[offset : offset + n])
    else:
        weights = jnp.full((n,), 1.0 / n)
    return jnp.einsum("n,nij->ij", weights.astype(stacked.dtype), stacked)


@functools.lru_cache(maxsize=None)
def compiled(families: tuple[str, ...], free_weights: bool):
    """``(mixture, loss_and_grad)`` jitted for one ansatz layout.

    The loss is the squared Frobenius distance to the target.
    """

    def mixture(params):
        return _mixture(families, free_weights, params)

    def loss(params, target):
        diff = mixture(params) - target
        return jnp.real(jnp.vdot(diff, diff))

    return jax.jit(mixture), jax.jit(jax.value_and_grad(loss))
