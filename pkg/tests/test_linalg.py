import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scsim import linalg as la
from conftest import random_density


def brute_partial_trace(m, dims, keep):
    """Explicit index sum, independent of the einsum route."""
    keep = sorted(keep)
    kd = [dims[k] for k in keep]
    out = np.zeros((int(np.prod(kd)),) * 2, dtype=complex)
    strides = [int(np.prod(dims[i + 1 :])) for i in range(len(dims))]
    for row in itertools.product(*[range(d) for d in dims]):
        for col in itertools.product(*[range(d) for d in dims]):
            if any(row[i] != col[i] for i in range(len(dims)) if i not in keep):
                continue
            r = sum(row[i] * strides[i] for i in range(len(dims)))
            c = sum(col[i] * strides[i] for i in range(len(dims)))
            kr = np.ravel_multi_index([row[k] for k in keep], kd) if keep else 0
            kc = np.ravel_multi_index([col[k] for k in keep], kd) if keep else 0
            out[kr, kc] += m[r, c]
    return out


@pytest.mark.parametrize(
    "dims,keep",
    [((2, 3), [0]), ((2, 3), [1]), ((2, 2, 2), [0, 2]), ((3, 2, 2), [1]), ((2, 2, 2, 2), [0, 1, 3]), ((2, 2), [])],
)
def test_partial_trace_matches_index_sum(rng, dims, keep):
    m = random_density(int(np.prod(dims)), rng)
    assert la.max_abs(la.partial_trace(m, dims, keep) - brute_partial_trace(m, dims, keep)) < 1e-14


def test_partial_trace_of_product():
    a = np.diag([0.25, 0.75]).astype(complex)
    b = np.full((3, 3), 1 / 3, dtype=complex)
    assert np.allclose(la.partial_trace(np.kron(a, b), (2, 3), [0]), a)
    assert np.allclose(la.partial_trace(np.kron(a, b), (2, 3), [1]), b)


def test_partial_trace_errors():
    with pytest.raises(ValueError):
        la.partial_trace(np.eye(6), (2, 2), [0])
    with pytest.raises(IndexError):
        la.partial_trace(np.eye(4), (2, 2), [2])


def test_permute_subsystems_swaps_kron(rng):
    a, b, c = (random_density(d, rng) for d in (2, 3, 2))
    m = la.tensor(a, b, c)
    assert np.allclose(la.permute_subsystems(m, (2, 3, 2), (2, 0, 1)), la.tensor(c, a, b))


def test_trace_distance_values(rng):
    zero, one = np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)
    assert la.trace_distance(zero, one) == pytest.approx(1.0)
    rho = random_density(4, rng)
    assert la.trace_distance(rho, rho) == pytest.approx(0.0, abs=1e-15)
    sigma = random_density(4, rng)
    d = la.trace_distance(rho, sigma)
    assert d == pytest.approx(la.trace_distance(sigma, rho))
    assert 0 < d <= 1
    with pytest.raises(ValueError):
        la.trace_distance(rho, np.triu(sigma))
    with pytest.raises(ValueError):
        la.trace_distance(rho, np.eye(2))


def test_psd_sqrt(rng):
    rho = random_density(5, rng, rank=3)
    s = la.psd_sqrt(rho)
    assert la.max_abs(s @ s - rho) < 1e-12
    assert la.is_psd(s)
    with pytest.raises(ValueError):
        la.psd_sqrt(np.diag([1.0, -0.1]))


@pytest.mark.parametrize("dim", [1, 2, 5, 8])
def test_haar_unitary_is_unitary(rng, dim):
    assert la.is_unitary(la.haar_unitary(dim, rng))


def test_haar_second_moment():
    # E|U_00|^2 = 1/d; loose check on 4000 samples
    rng = np.random.default_rng(5)
    vals = [abs(la.haar_unitary(4, rng)[0, 0]) ** 2 for _ in range(4000)]
    assert np.mean(vals) == pytest.approx(0.25, abs=0.01)


def test_isometry_to_unitary(rng):
    u = la.haar_unitary(8, rng)
    iso = u[:, :3]
    full = la.isometry_to_unitary(iso)
    assert la.is_unitary(full)
    assert np.allclose(full[:, :3], iso)


@pytest.mark.parametrize("dim", [2, 4, 8, 16])
def test_csd_reconstructs(rng, dim):
    u = la.haar_unitary(dim, rng)
    f = la.csd(u)
    assert la.max_abs(f.reconstruct() - u) < 1e-12
    assert np.all(np.diff(f.angles) >= -1e-15)
    for block in (f.W1, f.W2, f.V1, f.V2):
        assert la.is_unitary(block)


def test_csd_identity_has_zero_angles():
    f = la.csd(np.eye(4, dtype=complex))
    assert np.allclose(f.angles, 0)


def test_csd_rejects_odd_or_non_unitary():
    with pytest.raises(ValueError):
        la.csd(np.eye(3))
    with pytest.raises(ValueError):
        la.csd(2 * np.eye(4))


def test_csd_param_counts():
    assert [la.csd_param_count(2**k) for k in range(1, 6)] == [4, 18, 76, 312, 1264]


@pytest.mark.parametrize("k", [1, 2, 3])
def test_csd_unitary_zero_angles_is_identity(k):
    assert np.allclose(la.csd_unitary(k, np.zeros(la.csd_param_count(2**k))), np.eye(2**k))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_csd_unitary_is_unitary(k, seed):
    a = np.random.default_rng(seed).uniform(0, 2 * np.pi, la.csd_param_count(2**k))
    assert la.is_unitary(la.csd_unitary(k, a))


def test_csd_unitary_reaches_targets(rng):
    # U(2) leaves cover U(2): fit a Haar target by least squares on the angles
    from scipy.optimize import least_squares

    target = la.haar_unitary(2, rng)

    def res(a):
        d = la.u2_from_angles(*a) - target
        return np.concatenate([d.real.ravel(), d.imag.ravel()])

    best = min((least_squares(res, rng.uniform(0, 6, 4)) for _ in range(5)), key=lambda r: r.cost)
    assert best.cost < 1e-20


def test_operator_set_rank():
    assert la.operator_set_rank(la.PAULIS) == 4
    assert la.operator_set_rank([la.X, 2 * la.X, la.Z]) == 2


def test_schmidt_rank():
    assert la.schmidt_rank(np.kron(la.X, la.Z), (2, 2)) == 1
    swap = sum(np.kron(p, p) for p in la.PAULIS) / 2
    assert la.schmidt_rank(swap, (2, 2)) == 4


def test_tolerance_context():
    assert la.get_atol() == la.DEFAULT_ATOL
    with la.tolerance(1e-3):
        assert la.is_unitary(np.eye(2) * (1 + 1e-4))
    assert not la.is_unitary(np.eye(2) * (1 + 1e-4))
