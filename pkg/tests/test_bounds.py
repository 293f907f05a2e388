"""Residual-bound chain: decomposition, Vandermonde minima, cluster
polynomials, first-order estimates.

Oracles: closed forms for k = 1 minima, numpy least squares on the same
Vandermonde systems, direct reconstruction of manufactured right-hand
sides, and measured GMRES residuals for the upper-bound property.
"""

import math

import numpy as np
import pytest

from krybound import dd
from krybound.bounds import (BoundSeries, ClusterAssignment, EigenData,
                             bound_curve, cluster_assign, cluster_poly_bound,
                             decompose_rhs, first_order_estimate,
                             normal_case_bound, perturbation_split,
                             vandermonde_min, weighted_norm)
from krybound.dd import CDD
from krybound.errors import InapplicableError, RangeError
from krybound.gmres import GmresOptions, gmres, matrix_operator
from krybound.linalg import random_orthogonal


def _fl(x):
    return float(dd.approx(x))


def _eigendata_from(vectors, lambdas, weights):
    v = np.asarray(vectors, dtype=complex)
    lam = np.asarray(lambdas, dtype=complex)
    c = np.asarray(weights, dtype=complex)
    return EigenData(v.shape[1], lam, v, c, 0.0, 1.0)


# ------------------------------------------------------------ decompose

def test_decompose_identity_merges_to_single_pair():
    a = np.eye(4)
    r0 = np.zeros(4)
    r0[0] = 1.0
    e = decompose_rhs(a, r0)
    assert e.d == 1
    assert abs(complex(dd.approx(e.lambdas)[0]) - 1.0) < 1e-12
    assert abs(abs(complex(dd.approx(e.weights)[0])) - 1.0) < 1e-12
    v = dd.approx(e.vectors)[:, 0]
    assert abs(abs(v[0]) - 1.0) < 1e-10


def test_decompose_recovers_manufactured_expansion():
    n = 7
    rng = np.random.default_rng(11)
    q = random_orthogonal(n, seed=3)
    lam = np.array([2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0])
    a = q @ np.diag(lam) @ q.T
    w = rng.standard_normal(n)
    r0 = q @ w
    e = decompose_rhs(a, r0)
    assert e.d == n
    got = sorted(np.abs(dd.approx(e.weights)))
    want = sorted(np.abs(w))
    assert np.allclose(got, want, atol=1e-8)
    recon = dd.approx(e.vectors) @ dd.approx(e.weights)
    assert np.linalg.norm(recon - r0) < 1e-8
    # eigenvector frame of a normal matrix is orthonormal
    assert e.vector_condition < 1.0 + 1e-6


def test_decompose_rejects_rhs_outside_span():
    a = np.diag([2.0, 3.0, 0.0])
    r0 = np.array([1.0, 0.0, 1.0])
    with pytest.raises(RangeError):
        decompose_rhs(a, r0)


def test_decompose_drops_zero_weight_directions():
    a = np.diag([2.0, 3.0, 5.0])
    r0 = np.array([1.0, 1.0, 0.0])
    e = decompose_rhs(a, r0)
    assert e.d == 2
    vals = sorted(dd.approx(e.lambdas).real)
    assert np.allclose(vals, [2.0, 3.0], atol=1e-12)


def test_decompose_exact_duplicate_eigenvalues_merge():
    a = np.diag([1.0, 1.0, 3.0])
    r0 = np.array([0.6, 0.8, 0.0])
    e = decompose_rhs(a, r0)
    assert e.d == 1
    assert abs(complex(dd.approx(e.lambdas)[0]) - 1.0) < 1e-12
    recon = dd.approx(e.vectors) @ dd.approx(e.weights)
    assert np.linalg.norm(recon - r0.astype(complex)) < 1e-10


def test_decompose_tolerance_merge_averages_close_pair():
    a = np.diag([1.0, 1.0 + 1e-12, 3.0])
    r0 = np.array([1.0, 1.0, 1.0])
    e = decompose_rhs(a, r0, merge_tol=1e-10)
    assert e.d == 2
    vals = sorted(dd.approx(e.lambdas).real)
    assert abs(vals[0] - (1.0 + 5e-13)) < 1e-13
    recon = dd.approx(e.vectors) @ dd.approx(e.weights)
    assert np.linalg.norm(recon - r0.astype(complex)) < 1e-10


def test_decompose_extended_keeps_tiny_weights():
    a = dd.eye(3)
    for i, s in enumerate([2.0, 3.0, 5.0]):
        a[i, i] = s
    r0 = dd.zeros((3,))
    r0[0] = 1.0
    r0[1] = 1e-20
    # binary64 would truncate the 1e-20 weight; extended keeps it, and an
    # explicit threshold above the solver noise floor prunes the rest
    e = decompose_rhs(a, r0, c_tol=1e-25)
    assert e.d == 2
    mags = sorted(float(x) for x in dd.approx(dd.absval(e.weights)))
    assert abs(mags[0] - 1e-20) < 1e-27
    assert abs(mags[1] - 1.0) < 1e-28


# -------------------------------------------------------- weighted norm

def test_weighted_norm_orthonormal_frame_is_max_weight():
    q = random_orthogonal(6, seed=5)
    c = np.array([0.3, -1.7, 0.4, 0.9, -0.2, 1.1])
    e = _eigendata_from(q, np.arange(1, 7), c)
    assert abs(_fl(weighted_norm(e)) - 1.7) < 1e-10


def test_weighted_norm_single_vector_is_weight_magnitude():
    v = np.zeros((4, 1), dtype=complex)
    v[2, 0] = 1.0
    e = _eigendata_from(v, [1.0], [2.0])
    assert abs(_fl(weighted_norm(e)) - 2.0) < 1e-12


# ---------------------------------------------------------- Vandermonde

def test_vandermonde_identical_points_k1_exact_zero():
    lam = np.ones(5, dtype=complex)
    vmin, y = vandermonde_min(lam, 1)
    assert _fl(vmin) <= 1e-30
    assert abs(complex(dd.approx(y)[0]) - 1.0) < 1e-28


def test_vandermonde_k1_closed_form():
    lam = np.array([1.0, 1.01, 1.001], dtype=complex)
    vmin, y = vandermonde_min(lam, 1)
    ystar = lam.conj().sum() / (np.abs(lam) ** 2).sum()
    res = np.linalg.norm(lam * ystar - 1.0)
    assert abs(_fl(vmin) - res) < 1e-14
    assert abs(complex(dd.approx(y)[0]) - ystar) < 1e-12


def test_vandermonde_interpolation_exact_at_full_degree():
    lam = np.array([1.0, 2.0, 3.0, 4.0], dtype=complex)
    vmin, _ = vandermonde_min(lam, 4)
    assert _fl(vmin) <= 1e-20


def test_vandermonde_matches_numpy_lstsq():
    lam = np.array([1.0, 1.2, 1.4, 1.6, 1.8, 2.0], dtype=complex)
    for k in (1, 2, 3):
        vmin, y = vandermonde_min(lam, k)
        mat = np.column_stack([lam ** (j + 1) for j in range(k)])
        sol, *_ = np.linalg.lstsq(mat, np.ones(6, dtype=complex), rcond=None)
        res = np.linalg.norm(mat @ sol - 1.0)
        assert abs(_fl(vmin) - res) < 1e-12 * max(res, 1e-3)
        assert np.allclose(dd.approx(y), sol, atol=1e-10)


def test_vandermonde_minima_nonincreasing():
    rng = np.random.default_rng(7)
    lam = 1.0 + 0.5 * rng.standard_normal(8) + 0.2j * rng.standard_normal(8)
    prev = math.inf
    for k in range(1, 9):
        vmin, _ = vandermonde_min(lam, k)
        val = _fl(vmin)
        assert val <= prev + 1e-25
        prev = val


def test_bound_curve_scales_minima_by_prefactor():
    q = random_orthogonal(5, seed=9)
    lam = np.array([1.0, 1.5, 2.0, 2.5, 3.0])
    c = np.array([1.0, 0.5, 0.25, 0.125, 0.0625])
    e = _eigendata_from(q, lam, c)
    series = bound_curve(e, 4)
    assert isinstance(series, BoundSeries)
    assert len(series.points) == 4
    pref = _fl(series.prefactor)
    assert abs(pref - 1.0) < 1e-10     # orthonormal frame, max weight 1
    for pt in series.points:
        assert abs(_fl(pt.bound) - pref * _fl(pt.vandermonde_min)) \
            <= 1e-12 * max(_fl(pt.bound), 1e-30)


def test_bound_curve_dominates_measured_residuals():
    # extended-precision solve keeps measured residuals meaningful far
    # below the binary64 stagnation floor
    n = 8
    q = random_orthogonal(n, seed=21)
    lam = np.array([1.0, 1.3, 1.7, 2.2, 2.8, 3.5, 4.3, 5.2])
    a = q @ np.diag(lam) @ q.T
    rng = np.random.default_rng(2)
    b = rng.standard_normal(n)
    a_x = dd.asdd(a)
    b_x = dd.asdd(b)
    e = decompose_rhs(a_x, b_x)
    series = bound_curve(e, n)
    trace = gmres(matrix_operator(a_x), b_x,
                  opts=GmresOptions(rtol=1e-30, max_iterations=n))
    scale = float(np.linalg.norm(b))
    for row in trace.rows:
        if row.k == 0:
            continue
        bound = _fl(series.bound_at(row.k))
        assert row.residual_norm <= bound * (1.0 + 1e-8) + 1e-25 * scale


def test_normal_case_bound_equal_weights():
    q = random_orthogonal(3, seed=13)
    lam = np.array([1.0, 2.0, 3.0])
    e = _eigendata_from(q, lam, np.array([1.0, 1.0, 1.0]))
    got = _fl(normal_case_bound(e, 2))
    vmin, _ = vandermonde_min(lam, 2)
    assert abs(got - _fl(vmin) / math.sqrt(3.0)) < 1e-12


def test_normal_case_bound_refuses_skewed_frame():
    v = np.array([[1.0, 0.9], [0.0, math.sqrt(1 - 0.81)]], dtype=complex)
    e = _eigendata_from(v, [1.0, 2.0], [1.0, 1.0])
    with pytest.raises(InapplicableError):
        normal_case_bound(e, 1)


# -------------------------------------------------------------- clusters

def test_cluster_assign_two_clouds_by_count():
    lam = np.array([1.0 + 1e-6, 1.0 - 1e-6, 1.0 + 2e-6,
                    5.0 + 1e-6, 5.0 - 1e-6], dtype=complex)
    ca = cluster_assign(lam, s=2)
    centers = sorted(dd.approx(ca.centers).real)
    assert abs(centers[0] - (1.0 + 2e-6 / 3)) < 1e-12
    assert abs(centers[1] - 5.0) < 1e-12
    assert ca.epsilon < 3e-6
    # members of one cloud share a center
    groups = {}
    for i, g in enumerate(ca.center_of):
        groups.setdefault(int(g), []).append(i)
    sizes = sorted(len(v) for v in groups.values())
    assert sizes == [2, 3]


def test_cluster_assign_radius_matches_s_mode():
    lam = np.array([1.0, 1.001, 0.999, 3.0, 3.002], dtype=complex)
    by_radius = cluster_assign(lam, radius=0.01)
    by_count = cluster_assign(lam, s=2)
    cr = sorted(dd.approx(by_radius.centers).real)
    cs = sorted(dd.approx(by_count.centers).real)
    assert np.allclose(cr, cs, atol=1e-14)


def test_cluster_assign_explicit_centers_verbatim():
    lam = np.array([1.1, 0.9, 5.3], dtype=complex)
    ca = cluster_assign(lam, centers=[1.0, 5.0])
    cen = dd.approx(ca.centers)
    assert cen[0] == 1.0 and cen[1] == 5.0   # never recentered
    off = dd.approx(ca.offsets)
    assert np.allclose(off, [0.1, -0.1, 0.3], atol=1e-15)
    assert abs(ca.epsilon - 0.3) < 1e-15


def test_cluster_assign_identical_values_single_center():
    lam = np.ones(4, dtype=complex)
    ca = cluster_assign(lam, radius=1e-8)
    assert ca.centers.shape[0] == 1
    assert ca.epsilon == 0.0


def test_cluster_assign_validates_requests():
    lam = np.array([1.0, 1.0, 2.0], dtype=complex)
    with pytest.raises(ValueError):
        cluster_assign(lam, s=3)            # only two distinct values
    with pytest.raises(ValueError):
        cluster_assign(lam)                 # no mode chosen
    with pytest.raises(ValueError):
        cluster_assign(lam, s=2, radius=0.1)
    with pytest.raises(InapplicableError):
        cluster_assign(lam, centers=[0.0, 1.0])


def test_cluster_poly_bound_zero_when_centers_hit_spectrum():
    lam = np.array([1.0, 2.0, 3.0], dtype=complex)
    q = random_orthogonal(3, seed=17)
    e = _eigendata_from(q, lam, np.array([1.0, 1.0, 1.0]))
    ca = cluster_assign(lam, centers=[1.0, 2.0, 3.0])
    val = _fl(cluster_poly_bound(e, ca, 3))
    assert val <= 1e-20


def test_cluster_poly_bound_k1_single_cluster_closed_form():
    lam = np.array([1.0 + 1e-3, 1.0 - 2e-3, 1.0 + 3e-3], dtype=complex)
    v = np.eye(3, dtype=complex)
    c = np.array([1.0, 1.0, 1.0])
    e = _eigendata_from(v, lam, c)
    ca = cluster_assign(lam, centers=[1.0])
    got = _fl(cluster_poly_bound(e, ca, 1))
    want = np.linalg.norm(lam - 1.0)       # f(z) = z - 1, unit prefactor
    assert abs(got - want) < 1e-15


def test_cluster_poly_bound_scales_linearly_in_offsets():
    base = np.array([1e-3, -2e-3, 3e-3, 1e-3j])
    q = random_orthogonal(4, seed=31)
    for t in (0.5, 0.25):
        lam1 = 1.0 + base
        lam2 = 1.0 + t * base
        e1 = _eigendata_from(q, lam1, np.ones(4))
        e2 = _eigendata_from(q, lam2, np.ones(4))
        ca1 = cluster_assign(lam1, centers=[1.0])
        ca2 = cluster_assign(lam2, centers=[1.0])
        r = _fl(cluster_poly_bound(e2, ca2, 1)) / \
            _fl(cluster_poly_bound(e1, ca1, 1))
        assert abs(r - t) < 0.1 * t


# ------------------------------------------------- first-order estimate

def test_first_order_single_center_closed_form():
    lam = (1.0 + 1e-8 * np.arange(1, 6)).astype(complex)
    q = random_orthogonal(5, seed=41)
    e = _eigendata_from(q, lam, np.ones(5))
    ca = cluster_assign(lam, centers=[1.0])
    got = _fl(first_order_estimate(e, ca, 2))
    # offsets lam - 1 are exact in binary64 for values this close to one
    eps = np.sort((lam - 1.0).real)[::-1]
    want = eps[1] * math.sqrt(4.0) * eps[0] / (1.0 + eps[0])
    assert abs(got - want) < 1e-12 * want


def test_first_order_tracks_true_polynomial_norm():
    eps = 1e-8 * np.arange(1, 6)
    lam = (1.0 + eps).astype(complex)
    q = random_orthogonal(5, seed=43)
    e = _eigendata_from(q, lam, np.ones(5))
    ca = cluster_assign(lam, centers=[1.0])
    k = 2
    est = _fl(first_order_estimate(e, ca, k))
    # direct norm of f over the non-root eigenvalues
    roots = [1.0, 1.0 + 5e-8]
    f = np.array([-np.prod([1.0 - z / r for r in roots]) for z in lam])
    true = np.linalg.norm(f)
    # the estimate freezes the slope at the center, so it overstates
    # entries whose offset is comparable to the eigenvalue root's
    assert true <= est * 1.01
    assert est <= 8.0 * true


def test_first_order_multi_center_linear_in_offsets():
    # power-of-two offsets are exactly representable, so halving them
    # halves the estimate bit for bit
    d13, d12 = 2.0 ** -13, 2.0 ** -12
    lam1 = np.array([1.0 + d13, 1.0 - d13, 4.0 + d12, 4.0 - 3 * d13],
                    dtype=complex)
    lam2 = np.array([1.0 + d13 / 2, 1.0 - d13 / 2, 4.0 + d12 / 2,
                     4.0 - 3 * d13 / 2], dtype=complex)
    centers = [1.0, 4.0]
    q = random_orthogonal(4, seed=47)
    e1 = _eigendata_from(q, lam1, np.ones(4))
    e2 = _eigendata_from(q, lam2, np.ones(4))
    ca1 = cluster_assign(lam1, centers=centers)
    ca2 = cluster_assign(lam2, centers=centers)
    v1 = _fl(first_order_estimate(e1, ca1, 2))
    v2 = _fl(first_order_estimate(e2, ca2, 2))
    assert v1 > 0.0
    assert v2 == pytest.approx(0.5 * v1, rel=1e-12)  # k = s: exactly linear


def test_first_order_multi_center_scaling_with_eigen_roots():
    rng = np.random.default_rng(3)
    base = 1e-5 * (rng.standard_normal(6) + 1j * rng.standard_normal(6))
    centers = [1.0, 3.0]
    assign = np.array([0, 0, 0, 1, 1, 1])
    q = random_orthogonal(6, seed=53)
    vals = {}
    for t in (1.0, 0.5, 0.25):
        lam = np.array([centers[g] for g in assign]) + t * base
        e = _eigendata_from(q, lam, np.ones(6))
        ca = cluster_assign(lam, centers=centers)
        vals[t] = _fl(first_order_estimate(e, ca, 3))   # one eigen root
    for t in (0.5, 0.25):
        r = vals[t] / vals[1.0]
        assert abs(r - t) <= 0.1 * t


def test_first_order_exact_cluster_is_zero():
    lam = np.array([1.0, 1.0, 4.0], dtype=complex)
    q = random_orthogonal(3, seed=59)
    e = _eigendata_from(q, lam, np.ones(3))
    ca = cluster_assign(lam, centers=[1.0, 4.0])
    assert _fl(first_order_estimate(e, ca, 2)) == 0.0


def test_first_order_requires_enough_iterations():
    lam = np.array([1.0 + 1e-6, 4.0 - 1e-6], dtype=complex)
    q = random_orthogonal(2, seed=61)
    e = _eigendata_from(q, lam, np.ones(2))
    ca = cluster_assign(lam, centers=[1.0, 4.0])
    with pytest.raises(InapplicableError):
        first_order_estimate(e, ca, 1)


def test_first_order_skips_exact_center_members():
    # second cluster sits exactly on its center: contributes nothing
    lam = np.array([1.0 + 1e-6, 1.0 - 1e-6, 4.0], dtype=complex)
    q = random_orthogonal(3, seed=67)
    e = _eigendata_from(q, lam, np.ones(3))
    ca = cluster_assign(lam, centers=[1.0, 4.0])
    est = _fl(first_order_estimate(e, ca, 2))
    # f' at center 1 of f(z) = -(1 - z)(1 - z/4); two members remain
    fp = abs(1.0 * (1.0 - 1.0 / 4.0))
    eps_eff = float(np.abs(lam[:2] - 1.0).max())
    want = eps_eff * math.sqrt(2.0) * fp
    assert est == pytest.approx(want, rel=1e-10)


# ---------------------------------------------------- perturbation split

def test_perturbation_split_zero_offsets_zero_correction():
    lam = np.array([2.0, 2.0, 3.0], dtype=complex)
    ca = cluster_assign(lam, centers=[2.0, 3.0])
    lam_s, p = perturbation_split(ca, 3)
    assert np.abs(dd.approx(p)).max() == 0.0
    want = np.array([[2.0, 4.0, 8.0], [2.0, 4.0, 8.0], [3.0, 9.0, 27.0]])
    assert np.allclose(dd.approx(lam_s), want, atol=1e-28)


def test_perturbation_split_rows_are_derivative_scaled():
    lam = np.array([1.5 + 1e-4, 1.5 - 2e-4], dtype=complex)
    ca = cluster_assign(lam, centers=[1.5])
    _, p = perturbation_split(ca, 4)
    pm = dd.approx(p)
    g = 1.5
    row = np.array([1.0, 2 * g, 3 * g ** 2, 4 * g ** 3])
    assert np.allclose(pm[0], 1e-4 * row, rtol=1e-12)
    assert np.allclose(pm[1], -2e-4 * row, rtol=1e-12)


def test_perturbation_split_taylor_remainder_second_order():
    eps = np.array([1e-4, -2e-4, 3e-4])
    lam = (1.0 + eps).astype(complex)
    ca = cluster_assign(lam, centers=[1.0])
    k = 4
    lam_s, p = perturbation_split(ca, k)
    true = np.column_stack([lam ** (j + 1) for j in range(k)])
    err = np.abs(true - (dd.approx(lam_s) + dd.approx(p))).max()
    assert err <= 2.0 * k * k * float(np.abs(eps).max()) ** 2


# ---------------------------------------------------------- determinism

def test_bound_chain_is_bit_deterministic():
    n = 6
    q = random_orthogonal(n, seed=71)
    lam = np.array([1.0, 1.0 + 1e-7, 1.0 - 1e-7, 2.0, 2.0 + 1e-7, 3.0])
    a = q @ np.diag(lam) @ q.T
    rng = np.random.default_rng(5)
    b = rng.standard_normal(n)

    def run():
        e = decompose_rhs(a, b)
        series = bound_curve(e, 4)
        ca = cluster_assign(e.lambdas, s=3)
        vals = [dd.to_str(dd.absval(pt.bound), 34) for pt in series.points]
        vals.append(dd.to_str(dd.absval(cluster_poly_bound(e, ca, 3)), 34))
        vals.append(dd.to_str(dd.absval(first_order_estimate(e, ca, 3)), 34))
        return vals

    assert run() == run()
