"""Quadratic forms, Hormander metrics and admissible weights on phase space.

Phase space is W = R^{2n} with coordinates ordered (x_1..x_n, xi_1..xi_n).
A metric is a point-dependent positive quadratic form g_X; its symplectic
dual is g^sigma_X = J^T g_X^{-1} J and the symplectic intermediate g^# is the
geometric mean of g and g^sigma.

Most routines here are vectorized over stacks of points and matrices; the
scalar API (QuadForm and friends) is a thin layer on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DegenerateFormError, DimensionError, DomainError, NumericFailure

C_GRID = tuple(2.0 ** k for k in range(21))
N_GRID = tuple(range(17))
R_GRID = tuple(2.0 ** -k for k in range(9))
N_RANDOM_PROBES = 8
COND_MAX = 1e14


def symplectic_matrix(n: int) -> np.ndarray:
    """Standard J = [[0, I], [-I, 0]] in the (x, xi) basis."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def probe_directions(n: int, seed: int = 0) -> np.ndarray:
    """Canonical basis of R^{2n} followed by 8 seeded random unit vectors."""
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((N_RANDOM_PROBES, 2 * n))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([np.eye(2 * n), rand])


# --------------------------------------------------------------------------
# batched SPD helpers; all take arrays of shape (..., m, m)

def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _check_spd(A, what="form"):
    A = np.asarray(A, dtype=float)
    if A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"{what} is not square: shape {A.shape}")
    w = np.linalg.eigvalsh(_sym(A))
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DegenerateFormError(f"{what} is not positive definite (min eig {w.min():.3e})")
    if np.any(w[..., -1] / w[..., 0] > COND_MAX):
        raise DegenerateFormError(f"{what} has condition number above {COND_MAX:g}")
    return A


def spd_power(A, p):
    """A^p for symmetric positive definite stacks via eigendecomposition."""
    w, V = np.linalg.eigh(_sym(A))
    return _sym((V * w[..., None, :] ** p) @ np.swapaxes(V, -1, -2))


def dual_matrix(A):
    """Matrix of the symplectic dual form, J^T A^{-1} J (batched)."""
    A = np.asarray(A, dtype=float)
    J = symplectic_matrix(A.shape[-1] // 2)
    return _sym(J.T @ np.linalg.inv(A) @ J)


def geometric_mean_matrix(A, B):
    """A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2} (batched)."""
    Ah = spd_power(A, 0.5)
    Aih = spd_power(A, -0.5)
    return _sym(Ah @ spd_power(Aih @ B @ Aih, 0.5) @ Ah)


def harmonic_mean_matrix(A, B):
    """2 (A^{-1} + B^{-1})^{-1} (batched)."""
    return _sym(2.0 * np.linalg.inv(np.linalg.inv(A) + np.linalg.inv(B)))


def relative_eigvals(A, B):
    """Eigenvalues of B^{-1} A, i.e. the extreme values of A(T)/B(T)."""
    L = np.linalg.cholesky(_sym(B))
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(_sym(Li @ A @ np.swapaxes(Li, -1, -2)))


def form_value(A, T):
    """A(T) = T^T A T, batched over leading axes of both arguments."""
    return np.einsum("...i,...ij,...j->...", T, A, T)


# --------------------------------------------------------------------------
# scalar API

@dataclass(frozen=True)
class QuadForm:
    """Positive definite quadratic form on R^{2n}."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise DimensionError(f"quadratic form must be 2n x 2n, got {A.shape}")
        scale = max(np.abs(A).max(), 1e-300)
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise DegenerateFormError("matrix is not symmetric")
        A = _check_spd(A)
        A = _sym(A)
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.dim // 2

    def __call__(self, T) -> float:
        T = np.asarray(T, dtype=float)
        return float(T @ self.matrix @ T)

    def __le__(self, other: "QuadForm") -> bool:
        return bool(relative_eigvals(self.matrix, other.matrix)[-1] <= 1 + 1e-10)


def symplectic_dual(q: QuadForm) -> QuadForm:
    return QuadForm(dual_matrix(q.matrix))


def _same_dim(q1, q2):
    if q1.dim != q2.dim:
        raise DimensionError(f"dimension mismatch: {q1.dim} vs {q2.dim}")


def geometric_mean(q1: QuadForm, q2: QuadForm) -> QuadForm:
    _same_dim(q1, q2)
    return QuadForm(geometric_mean_matrix(q1.matrix, q2.matrix))


def harmonic_mean(q1: QuadForm, q2: QuadForm) -> QuadForm:
    _same_dim(q1, q2)
    return QuadForm(harmonic_mean_matrix(q1.matrix, q2.matrix))


# --------------------------------------------------------------------------
# metric fields and weights

def japanese(P):
    """<X> = (1 + |X|^2)^{1/2} for points stacked on the last axis."""
    P = np.asarray(P, dtype=float)
    return np.sqrt(1.0 + np.sum(P * P, axis=-1))


@dataclass(frozen=True)
class MetricField:
    """Point-dependent quadratic form X -> g_X.

    kind "split" stores evaluators phi, Phi and the matrix is
    diag(phi^-2 I_n, Phi^-2 I_n). kind "general" stores a vectorized
    evaluator mapping points (..., 2n) to matrices (..., 2n, 2n).
    """

    n: int
    kind: str
    label: str
    phi: Callable | None = None
    Phi: Callable | None = None
    evaluator: Callable | None = None
    params: dict = field(default_factory=dict)

    def matrices(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape[-1] != 2 * self.n:
            raise DimensionError(f"points must have {2 * self.n} coordinates")
        if self.kind == "split":
            a = np.asarray(self.phi(P), dtype=float) ** -2
            b = np.asarray(self.Phi(P), dtype=float) ** -2
            diag = np.concatenate(
                [np.repeat(a[..., None], self.n, -1), np.repeat(b[..., None], self.n, -1)], -1)
            out = np.zeros(P.shape[:-1] + (2 * self.n, 2 * self.n))
            idx = np.arange(2 * self.n)
            out[..., idx, idx] = diag
            return out
        return np.asarray(self.evaluator(P), dtype=float)

    def dual_matrices(self, P) -> np.ndarray:
        if self.kind == "split":
            # diag(phi^-2, Phi^-2) has dual diag(Phi^2, phi^2)
            P = np.asarray(P, dtype=float)
            a = np.asarray(self.Phi(P), dtype=float) ** 2
            b = np.asarray(self.phi(P), dtype=float) ** 2
            diag = np.concatenate(
                [np.repeat(a[..., None], self.n, -1), np.repeat(b[..., None], self.n, -1)], -1)
            out = np.zeros(P.shape[:-1] + (2 * self.n, 2 * self.n))
            idx = np.arange(2 * self.n)
            out[..., idx, idx] = diag
            return out
        return dual_matrix(self.matrices(P))

    def sharp_matrices(self, P) -> np.ndarray:
        return geometric_mean_matrix(self.matrices(P), self.dual_matrices(P))

    def form(self, X) -> QuadForm:
        return QuadForm(self.matrices(np.asarray(X, dtype=float)))

    def dual(self, X) -> QuadForm:
        return QuadForm(self.dual_matrices(np.asarray(X, dtype=float)))

    def sharp(self, X) -> QuadForm:
        return QuadForm(self.sharp_matrices(np.asarray(X, dtype=float)))

    def sharp_metric(self) -> "MetricField":
        return MetricField(self.n, "general", self.label + "#", evaluator=self.sharp_matrices)

    def ball_radius(self, P) -> np.ndarray:
        """Largest Euclidean radius contained in the unit g_X ball."""
        w = np.linalg.eigvalsh(self.matrices(P))
        return 1.0 / np.sqrt(w[..., -1])


@dataclass(frozen=True)
class Weight:
    """Positive function on phase space, the order of a symbol class."""

    n: int
    evaluator: Callable
    label: str

    def __call__(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        v = np.asarray(self.evaluator(P), dtype=float)
        return np.broadcast_to(v, P.shape[:-1]).copy() if v.shape != P.shape[:-1] else v

    def __truediv__(self, other: "Weight") -> "Weight":
        return Weight(self.n, lambda P: self(P) / other(P), f"({self.label})/({other.label})")

    def __mul__(self, other: "Weight") -> "Weight":
        return Weight(self.n, lambda P: self(P) * other(P), f"({self.label})*({other.label})")


def euclidean_metric(n: int = 1) -> MetricField:
    one = lambda P: np.ones(np.shape(P)[:-1])
    return MetricField(n, "split", "euclidean", phi=one, Phi=one)


def shubin_metric(n: int = 1) -> MetricField:
    return MetricField(n, "split", "shubin", phi=japanese, Phi=japanese)


def sg_metric(n: int = 1) -> MetricField:
    return MetricField(n, "split", "sg",
                       phi=lambda P: japanese(np.asarray(P)[..., :n]),
                       Phi=lambda P: japanese(np.asarray(P)[..., n:]))


def semiclassical_metric(h: float = 0.5, n: int = 1) -> MetricField:
    if not 0 < h <= 1:
        raise ValueError("semiclassical parameter h must lie in (0, 1]")
    c = lambda P: np.full(np.shape(P)[:-1], h ** -0.5)
    return MetricField(n, "split", f"planck-h({h:g})", phi=c, Phi=c, params={"h": h})


def exp_metric(n: int = 1) -> MetricField:
    """Split metric with phi = Phi = exp(|X|^2); violates temperance."""
    e = lambda P: np.exp(np.sum(np.asarray(P, dtype=float) ** 2, axis=-1))
    return MetricField(n, "split", "exp-growth", phi=e, Phi=e)


METRICS = {
    "euclidean": euclidean_metric,
    "shubin": shubin_metric,
    "sg": sg_metric,
    "planck-h": semiclassical_metric,
    "exp-growth": exp_metric,
}


def get_metric(name: str, **params) -> MetricField:
    try:
        factory = METRICS[name]
    except KeyError:
        raise KeyError(f"unknown metric id {name!r}; known: {sorted(METRICS)}") from None
    return factory(**params)


def japanese_weight(s: float = 1.0, n: int = 1) -> Weight:
    label = "one" if s == 0 else ("<X>" if s == 1 else f"<X>^{s:g}")
    return Weight(n, lambda P: japanese(P) ** s, label)


def constant_weight(n: int = 1) -> Weight:
    return Weight(n, lambda P: np.ones(np.shape(P)[:-1]), "one")


def exp_weight(n: int = 1) -> Weight:
    return Weight(n, lambda P: np.exp(np.sum(np.asarray(P, dtype=float) ** 2, axis=-1)), "exp|X|^2")


WEIGHTS = {
    "one": lambda: constant_weight(),
    "japanese": lambda s=1.0: japanese_weight(s),
    "japanese2": lambda: japanese_weight(2.0),
    "inv-japanese": lambda: japanese_weight(-1.0),
    "exp": lambda: exp_weight(),
}


def get_weight(name: str, **params) -> Weight:
    try:
        factory = WEIGHTS[name]
    except KeyError:
        raise KeyError(f"unknown weight id {name!r}; known: {sorted(WEIGHTS)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# Planck function and delta_r

def planck(metric: MetricField, X) -> float | np.ndarray:
    """lambda_g(X) = sqrt(min eig(g_X^{-1} g^sigma_X)); vectorized over X."""
    P = np.asarray(X, dtype=float)
    g = metric.matrices(P)
    gs = metric.dual_matrices(P)
    _check_spd(g, "g_X")
    lam = np.sqrt(relative_eigvals(gs, g)[..., 0])
    return float(lam) if lam.ndim == 0 else lam


def project_to_ellipsoid(q, B, r):
    """Euclidean projection of q onto {y : y^T B y <= r^2}.

    Vectorized over the leading axes of q (B fixed). Uses the Lagrange
    characterization y = (I + mu B)^{-1} q with mu >= 0 located by bisection
    on a monotone scalar equation.
    """
    q = np.asarray(q, dtype=float)
    lam, V = np.linalg.eigh(_sym(B))
    qt = q @ V
    inside = np.einsum("...i,i,...i->...", qt, lam, qt) <= r * r
    # upper bound for mu: |q|^2/(mu^2 lam_min) < r^2
    hi = np.sqrt(np.sum(qt * qt, axis=-1) / lam[0]) / r + 1.0
    lo = np.zeros_like(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        y = qt / (1.0 + mid[..., None] * lam)
        val = np.einsum("...i,i,...i->...", y, lam, y)
        big = val > r * r
        lo = np.where(big, mid, lo)
        hi = np.where(big, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1.0)):
            break
    y = qt / (1.0 + hi[..., None] * lam)
    y = np.where(inside[..., None], qt, y)
    return y @ V.T


def _ellipsoid_projector(H, A, center, r):
    """Projection in the H-inner product onto {z : A(z - center) <= r^2}."""
    R = np.linalg.cholesky(_sym(H)).T  # H = R^T R
    Ri = np.linalg.inv(R)
    B = _sym(Ri.T @ A @ Ri)

    def proj(p):
        w = R @ (np.asarray(p, dtype=float) - center)
        return center + Ri @ project_to_ellipsoid(w, B, r)

    return proj


def delta_r(metric: MetricField, X, Y, r: float, *, fast: bool = False, tol: float = 1e-8,
            max_iter: int = 10_000, r_max: float = 1.0) -> float:
    """1 + (g^sigma_X ^ g^sigma_Y)(U_{X,r} - U_{Y,r}).

    The set distance is the minimum of the harmonic-mean form H over
    differences u - v with u in U_{X,r}, v in U_{Y,r}, found by alternating
    H-orthogonal projections between the two ellipsoids. ``fast`` returns
    the coarse bound 1 + H(X - Y) instead.
    """
    if not 0 < r <= r_max:
        raise ValueError(f"r must lie in (0, {r_max}]")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    H = harmonic_mean_matrix(metric.dual_matrices(X), metric.dual_matrices(Y))
    if fast:
        return float(1.0 + form_value(H, X - Y))
    gX = metric.matrices(X)
    gY = metric.matrices(Y)
    PX = _ellipsoid_projector(H, gX, X, r)
    PY = _ellipsoid_projector(H, gY, Y, r)
    u = X.copy()
    trace = []
    scale = 1.0 + np.sqrt(form_value(H, X - Y))
    for it in range(max_iter):
        v = PY(u)
        u_new = PX(v)
        step = np.sqrt(max(form_value(H, u_new - u), 0.0))
        dist = form_value(H, u_new - v)
        trace.append(dist)
        u = u_new
        if dist <= (tol * scale) ** 2:
            return 1.0
        if step <= tol * scale:
            v = PY(u)
            return float(1.0 + form_value(H, u - v))
    raise NumericFailure("alternating projections did not converge", trace[-50:])


# --------------------------------------------------------------------------
# sampling helpers and constant fits

def sample_pairs(box: float | Sequence[float], n_pairs: int = 500, seed: int = 42, n: int = 1,
                 lattice: int = 5):
    """Deterministic pair set spanning the box [-bx, bx] x [-bxi, bxi].

    One third of the pairs couples points of a coarse lattice that contains
    the origin and the corners (so far-apart and extreme pairs are always
    present), one third is uniform, and the rest are near pairs
    Y = X + small offsets at several scales (slow-variation probes).
    """
    b = np.broadcast_to(np.asarray(box, dtype=float), (2,)) if n == 1 else np.full(2 * n, box)
    half = np.concatenate([np.full(n, b[0]), np.full(n, b[-1])])
    rng = np.random.default_rng(seed)
    axes = [np.linspace(-h, h, lattice) for h in half]
    lat = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2 * n)
    n_lat = n_pairs // 3
    i = rng.integers(0, len(lat), n_lat)
    j = rng.integers(0, len(lat), n_lat)
    # always include origin <-> corners
    o = len(lat) // 2
    corners = [0, len(lat) - 1, lattice - 1, len(lat) - lattice] if n == 1 else [0, len(lat) - 1]
    i[: len(corners)] = o
    j[: len(corners)] = corners
    X1, Y1 = lat[i], lat[j]
    n_uni = n_pairs // 3
    X2 = rng.uniform(-half, half, (n_uni, 2 * n))
    Y2 = rng.uniform(-half, half, (n_uni, 2 * n))
    n_near = n_pairs - n_lat - n_uni
    X3 = rng.uniform(-half, half, (n_near, 2 * n))
    scales = 2.0 ** -rng.integers(0, 9, n_near)
    D = rng.standard_normal((n_near, 2 * n))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    Y3 = np.clip(X3 + scales[:, None] * D * (1 + np.linalg.norm(X3, axis=1, keepdims=True)) * 0.5,
                 -half, half)
    X = np.vstack([X1, X2, X3])
    Y = np.vstack([Y1, Y2, Y3])
    return X, Y


def _as_pairs(samples):
    if isinstance(samples, tuple) and len(samples) == 2:
        X, Y = samples
    else:
        arr = np.asarray(samples, dtype=float)
        X, Y = arr[:, 0], arr[:, 1]
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    # both orders so that every inequality is tested symmetrically
    return np.vstack([X, Y]), np.vstack([Y, X])


def _grid_ceil(value, grid=C_GRID, rtol=1e-9):
    for c in grid:
        if value <= c * (1 + rtol):
            return c
    return None


def fit_power_law(ratio, base, c_grid=C_GRID, n_grid=N_GRID):
    """Smallest N (then smallest C) with ratio <= C * base**N on all samples.

    Returns (C, N, pass). On failure the best attempt (largest N, exact
    required C) is returned with pass False.
    """
    ratio = np.asarray(ratio, dtype=float)
    logb = np.log(np.asarray(base, dtype=float))
    if ratio.size == 0:
        return 1.0, 0, True
    for N in n_grid:
        need = float(np.max(np.log(ratio) - N * logb))
        C = _grid_ceil(np.exp(need), c_grid)
        if C is not None:
            return C, N, True
    N = n_grid[-1]
    return float(np.exp(np.max(np.log(ratio) - N * logb))), N, False


def fit_slow_variation(ratio, closeness, c_grid=C_GRID, r_grid=R_GRID):
    """Largest r (then smallest C) such that closeness <= r^2 implies ratio <= C."""
    ratio = np.asarray(ratio, dtype=float)
    closeness = np.asarray(closeness, dtype=float)
    best = None
    for r in sorted(r_grid, reverse=True):
        sel = closeness <= r * r
        need = float(ratio[sel].max()) if np.any(sel) else 1.0
        C = _grid_ceil(need, c_grid)
        if C is not None:
            return C, r, True, int(sel.sum())
        best = (need, r, False, int(sel.sum()))
    return best


@dataclass
class AxiomReport:
    metric: str
    slow_variation: dict
    temperance: dict
    uncertainty: dict
    geodesic: dict | None
    samples_used: int

    @property
    def passed(self) -> bool:
        flags = [self.slow_variation["pass"], self.temperance["pass"], self.uncertainty["pass"]]
        if self.geodesic is not None:
            flags.append(self.geodesic["pass"])
        return all(flags)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "samples": self.samples_used,
                "slow_variation": self.slow_variation, "temperance": self.temperance,
                "uncertainty": self.uncertainty, "geodesic": self.geodesic}


def _form_ratio(gX, gY):
    """max over T of (gX(T)/gY(T))^{+-1}."""
    w = relative_eigvals(gX, gY)
    return np.maximum(w[..., -1], 1.0 / w[..., 0])


def check_axioms(metric: MetricField, samples, r_grid=R_GRID, *, grid=None) -> AxiomReport:
    """Fit structure constants of a metric on sampled pairs.

    Inequalities between two forms are tested exactly through generalized
    eigenvalues (which is the supremum over all directions T). If ``grid``
    is given the geodesic temperance check is run as well.
    """
    X, Y = _as_pairs(samples)
    gX = metric.matrices(X)
    gY = metric.matrices(Y)
    ratio = _form_ratio(gX, gY)
    close = form_value(gX, X - Y)
    C, r, ok, used = fit_slow_variation(ratio, close, r_grid=r_grid)
    slow = {"C": C, "r": r, "pass": ok, "pairs_in_ball": used}
    base = 1.0 + form_value(metric.dual_matrices(X), X - Y)
    Ct, Nt, okt = fit_power_law(ratio, base)
    temp = {"C": Ct, "N": Nt, "pass": okt}
    lam = planck(metric, np.vstack([X, Y]))
    unc = {"pass": bool(np.all(lam >= 1 - 1e-9)), "min_planck": float(np.min(lam))}
    geo = None
    if grid is not None:
        Cg, Ng, okg = check_geodesic_temperance(metric, samples, grid)
        geo = {"C": Cg, "N": Ng, "pass": okg}
    return AxiomReport(metric.label, slow, temp, unc, geo, len(X) // 2)


@dataclass
class WeightReport:
    weight: str
    metric: str
    slow_variation: dict
    temperance: dict
    samples_used: int

    @property
    def passed(self) -> bool:
        return self.slow_variation["pass"] and self.temperance["pass"]

    def to_dict(self) -> dict:
        return {"weight": self.weight, "metric": self.metric, "samples": self.samples_used,
                "slow_variation": self.slow_variation, "temperance": self.temperance}


def check_weight(metric: MetricField, M: Weight, samples, r_grid=R_GRID) -> WeightReport:
    X, Y = _as_pairs(samples)
    mX, mY = M(X), M(Y)
    if np.any(mX <= 0) or np.any(mY <= 0):
        raise ValueError("weight must be strictly positive")
    ratio = np.exp(np.abs(np.log(mX) - np.log(mY)))
    gX = metric.matrices(X)
    C, r, ok, used = fit_slow_variation(ratio, form_value(gX, X - Y), r_grid=r_grid)
    base = 1.0 + form_value(metric.dual_matrices(X), X - Y)
    Ct, Nt, okt = fit_power_law(ratio, base)
    return WeightReport(M.label, metric.label, {"C": C, "r": r, "pass": ok, "pairs_in_ball": used},
                        {"C": Ct, "N": Nt, "pass": okt}, len(X) // 2)


# --------------------------------------------------------------------------
# geodesic distance of g^# on a grid graph

class GeodesicGraph:
    """8-connected grid graph over a PhaseGrid with g^#-lengths on edges.

    Edge length is sqrt(g^#_mid(edge)) with g^# evaluated at the edge
    midpoint. Shortest paths are computed with Dijkstra (scipy).
    """

    def __init__(self, metric: MetricField, grid):
        if metric.n != 1:
            raise DimensionError("grid geodesics are implemented for n = 1 only")
        self.metric = metric
        self.grid = grid
        x, xi = grid.x, grid.xi
        nx, nxi = len(x), len(xi)
        idx = np.arange(nx * nxi).reshape(nx, nxi)
        rows, cols, lens = [], [], []
        for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
            i0 = slice(0, nx - di)
            i1 = slice(di, nx)
            j0 = slice(max(0, -dj), nxi - max(0, dj))
            j1 = slice(max(0, dj), nxi - max(0, -dj) if dj < 0 else nxi)
            a = idx[i0, j0].ravel()
            b = idx[i1, j1].ravel()
            ia, ja = np.unravel_index(a, (nx, nxi))
            ib, jb = np.unravel_index(b, (nx, nxi))
            pa = np.stack([x[ia], xi[ja]], -1)
            pb = np.stack([x[ib], xi[jb]], -1)
            G = metric.sharp_matrices(0.5 * (pa + pb))
            L = np.sqrt(form_value(G, pb - pa))
            rows.append(a)
            cols.append(b)
            lens.append(L)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        w = np.concatenate(lens)
        n = nx * nxi
        self.graph = coo_matrix((w, (r, c)), shape=(n, n)).tocsr()
        self.shape = (nx, nxi)

    def node(self, P) -> np.ndarray:
        """Index of the grid node nearest to each point (points must be in the box)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        g = self.grid
        lo = np.array([g.x[0], g.xi[0]])
        hi = np.array([g.x[-1], g.xi[-1]])
        step = np.array([g.dx, g.dxi])
        if np.any(P < lo - 0.5 * step - 1e-12) or np.any(P > hi + 0.5 * step + 1e-12):
            raise DomainError("point outside the grid box")
        ij = np.clip(np.rint((P - lo) / step).astype(int), 0, np.array(self.shape) - 1)
        return ij[:, 0] * self.shape[1] + ij[:, 1]

    def distances(self, X, Y) -> np.ndarray:
        a = self.node(X)
        b = self.node(Y)
        src, inv = np.unique(a, return_inverse=True)
        D = dijkstra(self.graph, directed=False, indices=src)
        return D[inv, b]


def geodesic_distance(metric: MetricField, X, Y, grid) -> float:
    return float(GeodesicGraph(metric, grid).distances(X, Y)[0])


def check_geodesic_temperance(metric: MetricField, samples, grid):
    """Fit (C, N) in g_X(T) <= C g_Y(T) (1 + d(X, Y))^N over the samples."""
    X, Y = _as_pairs(samples)
    d = GeodesicGraph(metric, grid).distances(X, Y)
    w = relative_eigvals(metric.matrices(X), metric.matrices(Y))
    return fit_power_law(w[..., -1], 1.0 + d)
