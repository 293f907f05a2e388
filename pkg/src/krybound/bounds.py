"""Residual upper bounds and first-order estimates for GMRES built from
the eigenvalue decomposition of the initial residual.

The chain: decompose r0 over the eigenvectors belonging to nonzero
eigenvalues, take the spectral norm of the weighted eigenvector frame
as a prefactor, and multiply by a minimized Vandermonde residual (the
sharp route), by a cluster-polynomial evaluation (the structural
route), or by its first-order expansion in the cluster radius (the
cheap route).  Vandermonde solves and polynomial products always run
in extended precision regardless of the solver precision: the systems
are too ill-conditioned for binary64 beyond k of about 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dd
from .dd import CDD, DD
from .errors import InapplicableError, RangeError
from .linalg import (condition_number_2, eig_nonsymmetric, lstsq,
                     spectral_norm)

__all__ = [
    "EigenData", "decompose_rhs", "weighted_norm", "vandermonde_min",
    "BoundSeries", "BoundPoint", "bound_curve", "normal_case_bound",
    "ClusterAssignment", "cluster_assign", "cluster_poly_bound",
    "first_order_estimate", "first_order_residual_estimate",
    "perturbation_split",
]


def _f(x):
    return float(dd.approx(x))


def _cplx(x):
    v = dd.approx(x)
    return complex(v)


def _to_cdd_vector(lam):
    if isinstance(lam, CDD):
        return lam
    if isinstance(lam, DD):
        return CDD(lam, dd.zeros(lam.shape))
    return dd.ascdd(np.asarray(lam, dtype=complex))


# ------------------------------------------------------------ eigen data

@dataclass
class EigenData:
    d: int
    lambdas: object           # complex, pairwise distinct after merging
    vectors: object           # n x d, unit columns
    weights: object           # complex c_i with r0 ~ sum c_i v_i
    residual: object          # ||r0 - V c||, the unexplained part
    _kappa: object = field(default=None, repr=False)

    @property
    def vector_condition(self):
        # kappa_2 of the retained frame; deferred because the SVD dwarfs
        # every other cost at extended precision and the curve bounds
        # never read it
        if self._kappa is None:
            self._kappa = condition_number_2(self.vectors)
        return self._kappa


def decompose_rhs(op_matrix, r0, zero_tol=1e-12, merge_tol=0.0, c_tol=None):
    """Expand r0 over eigenvectors of op_matrix with nonzero eigenvalues.

    Eigenpairs whose |lambda| falls below zero_tol relative to the
    largest are discarded; coefficients come from a least-squares solve
    against the remaining frame, so the expansion is exactly the
    projection onto its span.  Eigenvalues within merge_tol of each
    other (exact equality when zero) are folded into one pair whose
    vector is the weighted combination.  A right-hand side outside the
    span is a contract violation and raises.
    """
    eo = eig_nonsymmetric(op_matrix)
    n = op_matrix.shape[0]
    vals_img = dd.approx(eo.values)
    mods = np.abs(vals_img)
    top = mods.max(initial=0.0)
    if top == 0.0:
        raise RangeError("operator has no nonzero eigenvalues")
    keep = [i for i in range(n) if mods[i] > zero_tol * top]
    if not keep:
        raise RangeError("no eigenvalues survive the zero threshold")
    v = _take_columns(eo.vectors, keep)
    lam = _take_entries(eo.values, keep)
    rhs = dd.complex_like(r0) if not dd.is_complexkind(r0) else r0
    sol = lstsq(v, rhs)
    c = sol.x
    scale = _f(dd.norm2(r0))
    unexplained = _f(sol.residual_norm)
    if unexplained > 1e-6 * scale:
        raise RangeError(
            f"right-hand side has a component of norm {unexplained:.3e} "
            f"outside the nonzero-eigenvalue span (rhs norm {scale:.3e})")
    lam, v, c = _merge_duplicates(lam, v, c, merge_tol)
    if c_tol is None:
        # binary64 eigenvector noise shows up as weights near 1e-14
        c_tol = 1e-30 if dd.is_extended(v) else 1e-12
    cnorm = _f(dd.norm2(c))
    cm = np.abs(dd.approx(c))
    retained = [i for i in range(len(cm)) if cm[i] > c_tol * cnorm]
    if not retained:
        raise RangeError("all expansion weights fall below the threshold")
    lam = _take_entries(lam, retained)
    v = _take_columns(v, retained)
    c = _take_entries(c, retained)
    return EigenData(len(retained), lam, v, c, sol.residual_norm)


def _take_columns(m, idx):
    out = dd.zeros_like(m, (m.shape[0], len(idx)))
    for j, i in enumerate(idx):
        out[:, j] = m[:, i]
    return out


def _take_entries(vv, idx):
    out = dd.zeros_like(vv, (len(idx),))
    for j, i in enumerate(idx):
        out[j] = vv[i]
    return out


def _merge_duplicates(lam, v, c, merge_tol):
    d = v.shape[1]
    img = dd.approx(lam)
    groups: list = []
    assigned = [-1] * d
    for i in range(d):
        if assigned[i] >= 0:
            continue
        members = [i]
        assigned[i] = len(groups)
        for j in range(i + 1, d):
            if assigned[j] >= 0:
                continue
            if merge_tol == 0.0:
                same = _exactly_equal(lam, i, j)
            else:
                same = abs(img[i] - img[j]) <= merge_tol
            if same:
                members.append(j)
                assigned[j] = len(groups)
        groups.append(members)
    if all(len(g) == 1 for g in groups):
        return lam, v, c
    new_lam = dd.zeros_like(lam, (len(groups),))
    new_v = dd.zeros_like(v, (v.shape[0], len(groups)))
    new_c = dd.zeros_like(c, (len(groups),))
    for g, members in enumerate(groups):
        if len(members) == 1:
            i = members[0]
            new_lam[g] = lam[i]
            new_v[:, g] = v[:, i]
            new_c[g] = c[i]
            continue
        w = v[:, members[0]] * c[members[0]]
        acc = lam[members[0]]
        for i in members[1:]:
            w = w + v[:, i] * c[i]
            acc = acc + lam[i]
        nw = dd.norm2(w)
        if _f(nw) == 0.0:
            # components cancelled; keep a zero weight on the first vector
            new_lam[g] = lam[members[0]]
            new_v[:, g] = v[:, members[0]]
            new_c[g] = 0.0
            continue
        new_lam[g] = acc * (1.0 / len(members))
        new_v[:, g] = w * (1.0 / nw)
        new_c[g] = nw
    return new_lam, new_v, new_c


def _exactly_equal(lam, i, j):
    a, b = lam[i], lam[j]
    if isinstance(a, CDD):
        return bool((a.re == b.re) & (a.im == b.im))
    return complex(a) == complex(b)


# --------------------------------------------------------------- norms

def weighted_norm(e):
    """Spectral norm of the frame whose columns are c_i v_i."""
    scaled = e.vectors.copy()
    for j in range(e.d):
        scaled[:, j] = scaled[:, j] * e.weights[j]
    return spectral_norm(scaled)


# --------------------------------------------------------- Vandermonde

def vandermonde_min(lambdas, k):
    """min over y of the k-term power-sum fit to the all-ones vector.

    Always evaluated in extended precision; returns the attained
    minimum and the minimizer.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    lam = _to_cdd_vector(lambdas)
    d = lam.shape[0]
    mat = dd.czeros((d, k))
    col = lam.copy()
    mat[:, 0] = col
    for j in range(1, k):
        col = col * lam
        mat[:, j] = col
    ones = CDD(dd.ones((d,)), dd.zeros((d,)))
    # the power basis is analytic, not noisy data: truncate pivots only
    # below the QR backward-error floor (~n*eps), not at eps^(2/3)
    sol = lstsq(mat, ones, rcond=1e-28)
    return sol.residual_norm, sol.x


@dataclass
class BoundPoint:
    k: int
    vandermonde_min: object
    bound: object


@dataclass
class BoundSeries:
    prefactor: object
    points: list = field(default_factory=list)

    def bound_at(self, k):
        return self.points[k - 1].bound


def bound_curve(e, k_max):
    """Prefactor times the minimized Vandermonde residual for k = 1..k_max.

    A (k-1)-term minimizer zero-pads into a feasible k-term candidate,
    so the best attained value so far is itself attained at k.  Taking
    the running minimum keeps the curve non-increasing and absorbs
    least-squares wobble once the power basis hits its conditioning
    cliff (the attained residual is an upper bound either way).
    """
    pref = weighted_norm(e)
    points = []
    best = None
    for k in range(1, k_max + 1):
        vmin, _ = vandermonde_min(e.lambdas, k)
        if best is not None and _f(vmin) > _f(best):
            vmin = best
        best = vmin
        points.append(BoundPoint(k, vmin, pref * vmin))
    return BoundSeries(pref, points)


def normal_case_bound(e, k):
    """Relative-residual bound for an orthonormal eigenvector frame."""
    g = dd.conj(e.vectors).T @ e.vectors
    gi = dd.approx(g) - np.eye(e.d)
    worst = np.abs(gi).max()
    if worst > 1e-8:
        raise InapplicableError(
            f"eigenvector frame is not orthonormal (off-diagonal {worst:.3e})")
    cm = np.abs(dd.approx(e.weights))
    vmin, _ = vandermonde_min(e.lambdas, k)
    return vmin * (float(cm.max()) / _f(dd.norm2(e.weights)))


# ------------------------------------------------------------- clusters

@dataclass
class ClusterAssignment:
    centers: object          # distinct complex centers, working precision
    offsets: object          # lambda_i - center_of(i), aligned with input
    center_of: np.ndarray    # eigenvalue index -> center index
    epsilon: float           # max |offset|


def cluster_assign(lambdas, radius=None, s=None, centers=None):
    """Group eigenvalues around centers by one of three rules.

    radius: single-linkage components under distance 2*radius, centers
    at member means.  s: greedy farthest-point seeding of s centers,
    then nearest assignment and recentering at means.  centers: taken
    verbatim, nearest assignment, never recentered.
    """
    modes = sum(x is not None for x in (radius, s, centers))
    if modes != 1:
        raise ValueError("specify exactly one of radius, s, centers")
    lam = _to_cdd_vector(lambdas)
    d = lam.shape[0]
    img = dd.approx(lam)
    if np.any(np.abs(img) == 0.0):
        raise InapplicableError("zero eigenvalue cannot join any cluster")
    order = sorted(range(d), key=lambda i: (abs(img[i]),
                                            math.atan2(img[i].imag,
                                                       img[i].real), i))
    if radius is not None:
        groups = _linkage_groups(img, order, 2.0 * float(radius))
        center_of = np.empty(d, dtype=int)
        cen = dd.czeros((len(groups),))
        for g, members in enumerate(groups):
            acc = lam[members[0]]
            for i in members[1:]:
                acc = acc + lam[i]
            cen[g] = acc * (1.0 / len(members))
            for i in members:
                center_of[i] = g
    elif s is not None:
        s = int(s)
        distinct = len(set(img.tolist()))
        if s < 1 or s > distinct:
            raise ValueError(
                f"requested {s} centers but only {distinct} distinct "
                f"eigenvalues are available")
        seeds = _greedy_seeds(img, order, s)
        center_of = _nearest(img, img[seeds])
        cen = dd.czeros((s,))
        for g in range(s):
            members = [i for i in range(d) if center_of[i] == g]
            acc = lam[members[0]]
            for i in members[1:]:
                acc = acc + lam[i]
            cen[g] = acc * (1.0 / len(members))
    else:
        cimg = np.asarray(centers, dtype=complex)
        if len(set(cimg.tolist())) != len(cimg):
            raise ValueError("explicit centers must be pairwise distinct")
        if np.any(np.abs(cimg) == 0.0):
            raise InapplicableError("a cluster center at zero is invalid")
        cen = dd.ascdd(cimg)
        center_of = _nearest(img, cimg)
    cen_img = dd.approx(cen)
    if np.any(np.abs(cen_img) == 0.0):
        raise InapplicableError("a cluster center collapsed to zero")
    offsets = dd.czeros((d,))
    for i in range(d):
        offsets[i] = lam[i] - cen[int(center_of[i])]
    eps = float(np.abs(dd.approx(offsets)).max(initial=0.0))
    return ClusterAssignment(cen, offsets, center_of, eps)


def _linkage_groups(img, order, tol):
    parent = list(range(len(img)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(len(img)):
        for b in range(a + 1, len(img)):
            if abs(img[a] - img[b]) <= tol:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots: dict = {}
    groups = []
    for i in order:
        r = find(i)
        if r not in roots:
            roots[r] = len(groups)
            groups.append([])
        groups[roots[r]].append(i)
    return groups


def _greedy_seeds(img, order, s):
    seeds = [order[0]]
    while len(seeds) < s:
        best = None
        best_dist = -1.0
        for i in order:
            dmin = min(abs(img[i] - img[j]) for j in seeds)
            if dmin > best_dist:
                best = i
                best_dist = dmin
        seeds.append(best)
    return seeds


def _nearest(img, cimg):
    out = np.empty(len(img), dtype=int)
    for i, z in enumerate(img):
        dist = np.abs(cimg - z)
        out[i] = int(np.argmin(dist))
    return out


# -------------------------------------------------- cluster polynomial

def _root_set(e, ca, k):
    """Roots for the degree-k annihilating polynomial at iteration k.

    k <= s: the k centers covering the most eigenvalues; beyond that,
    every center plus the k - s eigenvalues farthest from theirs,
    treated as exact roots.
    """
    img = dd.approx(ca.centers)
    s = len(img)
    counts = np.bincount(ca.center_of, minlength=s)
    lam = _to_cdd_vector(e.lambdas)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k <= s:
        sel = sorted(range(s), key=lambda g: (-counts[g], -abs(img[g]),
                                              math.atan2(img[g].imag,
                                                         img[g].real), g))
        return [ca.centers[g] for g in sel[:k]], []
    extra = k - s
    off = np.abs(dd.approx(ca.offsets))
    if extra > len(off):
        raise ValueError(
            f"k={k} needs {extra} eigenvalue roots but only {len(off)} exist")
    by_offset = _descending_offset_order(ca)
    idx = by_offset[:extra]
    return [ca.centers[g] for g in range(s)], [lam[i] for i in idx]


def _descending_offset_order(ca):
    off = dd.approx(ca.offsets)
    mags = np.abs(off)
    return sorted(range(len(mags)),
                  key=lambda i: (-mags[i], math.atan2(off[i].imag,
                                                      off[i].real), i))


def cluster_poly_bound(e, ca, k):
    """Bound from the polynomial vanishing on centers (and, past s,
    on the worst offenders): prefactor times the norm of f over the
    spectrum, with f kept in product form throughout."""
    center_roots, eigen_roots = _root_set(e, ca, k)
    roots = list(center_roots) + list(eigen_roots)
    for r in roots:
        if abs(_cplx(r)) == 0.0:
            raise InapplicableError("polynomial root at zero is invalid")
    lam = _to_cdd_vector(e.lambdas)
    d = lam.shape[0]
    vals = dd.czeros((d,))
    for i in range(d):
        acc = CDD(dd.ones(()) * -1.0, dd.zeros(()))
        li = lam[i]
        for r in roots:
            acc = acc * (1.0 - li / r)
        vals[i] = acc
    fnorm = dd.norm2(vals)
    return weighted_norm(e) * fnorm


def first_order_estimate(e, ca, k):
    """First-order size of the cluster bound in the offsets.

    Single center at one: the closed form eps_k sqrt(d-k+1) prod
    |1-lambda_i|/|lambda_i| over the k-1 largest offsets.  Several
    centers (k >= s): max remaining offset times the weighted-frame
    norm times the norm of f' at each remaining eigenvalue's center,
    skipping eigenvalues that sit exactly on their center.
    """
    s = ca.centers.shape[0]
    lam = _to_cdd_vector(e.lambdas)
    order = _descending_offset_order(ca)
    off_mags = np.abs(dd.approx(ca.offsets))
    d = lam.shape[0]
    single_at_one = s == 1 and abs(_cplx(ca.centers[0]) - 1.0) <= 1e-8
    if single_at_one:
        if not (1 <= k <= d):
            raise ValueError(f"k must lie in 1..{d}, got {k}")
        eps_k = float(off_mags[order[k - 1]])
        prod = dd.ones(())
        for t in range(k - 1):
            li = lam[order[t]]
            prod = prod * (abs(1.0 - li) / abs(li))
        return prod * (eps_k * math.sqrt(d - k + 1))
    if k < s:
        raise InapplicableError(
            f"multi-center estimate needs k >= {s} centers, got k={k}")
    center_roots, eigen_roots = _root_set(e, ca, k)
    roots = list(center_roots) + list(eigen_roots)
    remaining = order[k - s:]
    keep = [i for i in remaining if off_mags[i] > 0.0]
    if not keep:
        return dd.zeros(())
    eps_eff = float(max(off_mags[i] for i in keep))
    fp = dd.czeros((len(keep),))
    for t, i in enumerate(keep):
        g = ca.centers[int(ca.center_of[i])]
        fp[t] = _poly_derivative_at_root(g, roots)
    return weighted_norm(e) * (dd.norm2(fp) * eps_eff)


def first_order_residual_estimate(e, ca, k):
    """first_order_estimate scaled to residual-norm units.

    The single-center-at-one closed form excludes the weighted-frame
    norm while the multi-center form includes it; this wrapper makes
    both comparable with residual norms and with the other bounds.
    """
    est = first_order_estimate(e, ca, k)
    s = ca.centers.shape[0]
    if s == 1 and abs(_cplx(ca.centers[0]) - 1.0) <= 1e-8:
        return weighted_norm(e) * est
    return est


def _poly_derivative_at_root(g, roots):
    """d/dgamma of -prod(1 - gamma/rho) at gamma = g, g among the roots."""
    acc = CDD(dd.ones(()), dd.zeros(()))
    acc = acc * (1.0 / g)
    seen_self = False
    for r in roots:
        if not seen_self and _cplx(r) == _cplx(g):
            seen_self = True
            continue
        acc = acc * (1.0 - g / r)
    if not seen_self:
        raise InapplicableError("center is not among the polynomial roots")
    return acc


def perturbation_split(ca, k):
    """Center-power matrix and its first-order offset correction.

    Row i of the first matrix holds powers of eigenvalue i's center;
    row i of the second holds the derivative row scaled by offset i.
    Diagnostic for checking that true powers differ from the split by
    a second-order remainder.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    d = ca.offsets.shape[0]
    lam_s = dd.czeros((d, k))
    p = dd.czeros((d, k))
    for i in range(d):
        g = ca.centers[int(ca.center_of[i])]
        eps_i = ca.offsets[i]
        gp = CDD(dd.ones(()), dd.zeros(()))    # gamma^(j-1)
        for j in range(1, k + 1):
            lam_s[i, j - 1] = gp * g
            p[i, j - 1] = gp * eps_i * float(j)
            gp = gp * g
    return lam_s, p
