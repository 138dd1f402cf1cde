"""Sobolev norms, compactness probes, numerical Fredholm index, Riesz kernel
projectors, weight conjugation, parametrices and the converse experiment.

Truncated operators are square matrices, so the raw finite-dimensional
index is always zero. Kernel and cokernel are therefore counted among
small singular pairs whose vectors live in the interior of phase space:
at least half of the mass of the vector sits in |x| <= 0.75 L and half of
its discrete Fourier mass sits in |xi| <= 0.75 Xi. Modes pinned to the box
edge or to the xi-window are truncation artefacts and are not counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import subspace_angles, svd

from .errors import (ContourError, ConvergenceError, EllipticityError, GridMismatchError,
                     NoSpectralGapError)
from .grid import PhaseGrid, SymbolGrid
from .inversion import core_residual, symbol_inverse
from .metric import MetricField, Weight, constant_weight, planck
from .quantize import OperatorMatrix, dequantize, moyal, weyl_quantize
from .symbols import ConfinedFamily, check_elliptic, sample, spec_label

DEFAULT_TRUNCATIONS = (128, 256, 512)
DEFAULT_L = 8.0
RANK_REL_TOL = 1e-8
GAP_RATIO = 10.0
STABILITY_RATIO = 0.5
CORE_FRACTION = 0.75
INTERIOR_MASS = 0.5


# --------------------------------------------------------------------------
# localization of vectors

def core_fraction(v: np.ndarray, d: int = 1, fraction: float = CORE_FRACTION) -> float:
    """min(x-mass, Fourier-mass) of v inside the central fraction of the box."""
    V = np.asarray(v).reshape(-1, d)
    N = V.shape[0]
    tot = float(np.sum(np.abs(V) ** 2))
    if tot == 0:
        return 0.0
    n = np.abs(np.arange(N) - N // 2) <= fraction * N / 2
    fx = float(np.sum(np.abs(V[n]) ** 2)) / tot
    F = np.fft.fftshift(np.fft.fft(V, axis=0), axes=0) / math.sqrt(N)
    fxi = float(np.sum(np.abs(F[n]) ** 2)) / tot
    return min(fx, fxi)


# --------------------------------------------------------------------------
# index

@dataclass
class TruncationResult:
    N: int
    dim_ker: int
    dim_coker: int
    rank_tol: float
    sigma_above: float
    sigma_below: float
    gap_ratio: float
    smallest: list

    @property
    def index(self) -> int:
        return self.dim_ker - self.dim_coker

    def to_dict(self) -> dict:
        return {"N": self.N, "dim_ker": self.dim_ker, "dim_coker": self.dim_coker,
                "index": self.index, "rank_tol": self.rank_tol, "sigma_above": self.sigma_above,
                "sigma_below": self.sigma_below, "gap_ratio": self.gap_ratio,
                "smallest_sigma": self.smallest}


@dataclass
class IndexReport:
    dim_ker: int
    dim_coker: int
    index: int
    rank_tol: float | None
    truncations: list
    stable: bool
    sigma_tables: dict = field(default_factory=dict, repr=False)
    label: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "dim_ker": self.dim_ker, "dim_coker": self.dim_coker,
                "index": self.index, "rank_tol": self.rank_tol, "stable": self.stable,
                "truncations": [t.to_dict() for t in self.truncations]}


def analyze_truncation(A: OperatorMatrix, rank_tol: float | None = None) -> tuple:
    """Singular spectrum of one truncation with interior kernel/cokernel counts."""
    M = np.asarray(A.matrix)
    U, s, Vh = svd(M)
    tol = float(s[0] * RANK_REL_TOL) if rank_tol is None else float(rank_tol)
    if s[0] == 0:
        tol = max(tol, 1e-300)
    d = A.d
    cf_r = np.array([core_fraction(Vh[i].conj(), d) for i in range(len(s))])
    cf_l = np.array([core_fraction(U[:, i], d) for i in range(len(s))])
    small = s < tol
    ker = int(np.sum(small & (cf_r >= INTERIOR_MASS)))
    coker = int(np.sum(small & (cf_l >= INTERIOR_MASS)))
    both = (~small) & (cf_r >= INTERIOR_MASS) & (cf_l >= INTERIOR_MASS)
    above = float(np.min(s[both])) if np.any(both) else math.inf
    below = float(np.max(s[small])) if np.any(small) else 0.0
    ratio = above / max(below, tol)
    res = TruncationResult(A.grid.N_x, ker, coker, tol, above, below, ratio,
                           [float(v) for v in s[-6:]])
    return res, s, (U, Vh)


def _builder(op, L: float, window="auto") -> Callable[[int], OperatorMatrix]:
    if isinstance(op, OperatorMatrix):
        return lambda N: op
    if callable(op) and not isinstance(op, str) and getattr(op, "_is_builder", False):
        return op
    def build(N):
        g = PhaseGrid.fourier(L, N)
        return weyl_quantize(sample(op, g), window)
    return build


def as_builder(f: Callable[[int], OperatorMatrix]) -> Callable[[int], OperatorMatrix]:
    """Mark f(N) -> OperatorMatrix as a truncation builder for numerical_index."""
    f._is_builder = True
    return f


def numerical_index(op, rank_tol: float | None = None,
                    truncations: Sequence[int] = DEFAULT_TRUNCATIONS, *, L: float = DEFAULT_L,
                    label: str | None = None) -> IndexReport:
    """Interior kernel/cokernel dimensions at several truncations.

    ``op`` is a symbol spec, a builder marked with :func:`as_builder`, or a
    single OperatorMatrix (then only one truncation is available and the
    result is never stable). A spectral gap is required: at each
    truncation the smallest interior singular value above tol must exceed
    10 max(sigma_below, tol), and these values must agree within a factor
    of 2 across truncations. Otherwise NoSpectralGapError is raised.
    """
    build = _builder(op, L)
    if isinstance(op, OperatorMatrix):
        truncations = [op.grid.N_x]
    results, tables = [], {}
    for N in truncations:
        res, s, _ = analyze_truncation(build(N), rank_tol)
        results.append(res)
        tables[res.N] = s
    details = {"truncations": [r.to_dict() for r in results]}
    bad = [r.N for r in results if r.gap_ratio < GAP_RATIO]
    if bad:
        raise NoSpectralGapError(f"gap ratio below {GAP_RATIO:g} at truncations {bad}", details)
    above = [r.sigma_above for r in results]
    if all(math.isfinite(a) for a in above) and len(above) > 1:
        if min(above) / max(above) < STABILITY_RATIO:
            raise NoSpectralGapError(
                f"smallest interior singular value drifts across truncations: {above}", details)
    last = results[-1]
    stable = len(results) >= 3 and len({r.index for r in results}) == 1
    return IndexReport(last.dim_ker, last.dim_coker, last.index,
                       rank_tol, results, stable, tables, label or spec_label(op))


# --------------------------------------------------------------------------
# compactness

@dataclass
class CompactnessReport:
    k: int
    threshold: float
    sigma_k: dict
    k_star: dict
    monotone: bool
    stable: bool
    tables: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"k": self.k, "threshold": self.threshold,
                "sigma_k": {str(n): v for n, v in self.sigma_k.items()},
                "k_star": {str(n): v for n, v in self.k_star.items()},
                "monotone": self.monotone, "stable": self.stable}


def compactness_probe(op, truncations: Sequence[int] = DEFAULT_TRUNCATIONS, *, k: int = 50,
                      threshold: float = 1e-3, L: float = DEFAULT_L,
                      stable_rtol: float = 0.05) -> CompactnessReport:
    """Singular values of the truncations; sigma_k at fixed k and first k with sigma_k < threshold.

    k is 1-based (sigma_1 is the largest). ``stable`` means sigma_k agrees
    within ``stable_rtol`` relative across truncations.
    """
    build = _builder(op, L)
    sig, kst, tables = {}, {}, {}
    for N in truncations:
        A = build(N)
        s = np.linalg.svd(np.asarray(A.matrix), compute_uv=False)
        tables[N] = s
        sig[N] = float(s[k - 1]) if k <= len(s) else 0.0
        below = np.nonzero(s < threshold)[0]
        kst[N] = int(below[0]) + 1 if len(below) else None
    mono = all(bool(np.all(np.diff(s) <= 1e-12 * max(s[0], 1e-300))) for s in tables.values())
    vals = list(sig.values())
    ref = max(max(vals), 1e-300)
    stable = (max(vals) - min(vals)) <= stable_rtol * ref if ref > 1e-300 else True
    return CompactnessReport(k, threshold, sig, kst, mono, stable, tables)


# --------------------------------------------------------------------------
# Riesz projector

@dataclass
class RieszProjector:
    matrix: np.ndarray
    radius: float
    nodes: int
    idempotency: float
    selfadjointness: float
    rank: int
    principal_angle: float | None = None
    eigen_gap: float = 0.0

    def to_dict(self) -> dict:
        return {"radius": self.radius, "nodes": self.nodes, "idempotency": self.idempotency,
                "selfadjointness": self.selfadjointness, "rank": self.rank,
                "principal_angle": self.principal_angle, "eigen_gap": self.eigen_gap}

    def range_basis(self) -> np.ndarray:
        H = 0.5 * (self.matrix + self.matrix.conj().T)
        w, V = np.linalg.eigh(H)
        return V[:, w > 0.5]


def contour_radius(sigma: np.ndarray, upper: float, floor: float) -> float:
    """Circle radius in the widest logarithmic gap of sigma^2 inside (floor^2, upper).

    Eigenvalues of A*A close to the circle slow the trapezoid rule down, so
    the radius is the geometric mean of the two neighbours across the gap.
    Kernel eigenvalues (sigma < floor) always stay inside, and the radius is
    kept above 1e-6 sigma_max^2 so the resolvents stay well conditioned.
    """
    lam = np.sort(np.asarray(sigma, dtype=float) ** 2)
    lo = max(floor ** 2, 1e-6 * float(lam[-1]), 1e-300)
    lam = lam[(lam > lo) & (lam < upper)]
    pts = np.concatenate([[lo], lam, [upper]])
    gaps = np.log(pts[1:]) - np.log(pts[:-1])
    i = int(np.argmax(gaps))
    return float(min(1.0, math.sqrt(pts[i] * pts[i + 1])))


def _resolvent_avg(T, lams):
    n = T.shape[0]
    I = np.eye(n)
    acc = np.zeros_like(T, dtype=complex)
    for lam in lams:
        acc += lam * np.linalg.solve(lam * I - T, I)
    return acc


def riesz_projector(A, radius: float = 0.5, nodes: int = 16, *, tol: float = 1e-8,
                    max_nodes: int = 4096, contour_tol: float = 1e-8) -> RieszProjector:
    """B = (1/2 pi i) int_{|lambda| = radius} (lambda - A*A)^{-1} d lambda by the trapezoid rule.

    Nodes are doubled until B changes by at most ``tol`` (spectral norm of
    the difference). The principal angle between range(B) and the span of
    right singular vectors with sigma^2 < radius is recorded.
    """
    if not 0 < radius <= 1:
        raise ValueError("contour radius must lie in (0, 1]")
    M = np.asarray(A.matrix if isinstance(A, OperatorMatrix) else A, dtype=complex)
    T = M.conj().T @ M
    ev = np.linalg.eigvalsh(T)
    gap = float(np.min(np.abs(ev - radius)))
    if gap < contour_tol * radius:
        raise ContourError(f"eigenvalue of A*A within {gap:.2e} of the contour |lambda| = {radius}")
    n = nodes
    lams = radius * np.exp(2j * np.pi * np.arange(n) / n)
    S = _resolvent_avg(T, lams)
    B = S / n
    while True:
        if 2 * n > max_nodes:
            raise ConvergenceError(f"trapezoid rule did not stabilize with {max_nodes} nodes")
        new = radius * np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
        S = S + _resolvent_avg(T, new)
        n *= 2
        B2 = S / n
        change = float(np.linalg.norm(B2 - B, 2))
        B = B2
        if change <= tol:
            break
    idem = float(np.linalg.norm(B @ B - B, 2))
    sa = float(np.linalg.norm(B - B.conj().T, 2))
    rank = int(round(float(np.trace(B).real)))
    proj = RieszProjector(B, radius, n, idem, sa, rank, None, gap)
    _, s, Vh = svd(M)
    ker = Vh[s ** 2 < radius].conj().T
    R = proj.range_basis()
    if ker.shape[1] and R.shape[1]:
        proj.principal_angle = float(np.max(subspace_angles(R, ker)))
    elif ker.shape[1] == R.shape[1] == 0:
        proj.principal_angle = 0.0
    return proj


# --------------------------------------------------------------------------
# Sobolev norms

@dataclass
class SobolevReport:
    value: float
    l2: float
    family: str
    weight: str
    members: int

    @property
    def ratio(self) -> float:
        return self.value / self.l2 if self.l2 > 0 else math.nan

    def to_dict(self) -> dict:
        return {"value": self.value, "l2": self.l2, "ratio_to_l2": self.ratio,
                "family": self.family, "weight": self.weight, "members": self.members}


def sobolev_norms(U: np.ndarray, M: Weight | None, family: ConfinedFamily,
                  grid: PhaseGrid) -> np.ndarray:
    """Vectorized H(M, g) norms of the columns of U (shape (N_x,) or (N_x, m))."""
    M = M or constant_weight()
    U = np.asarray(U, dtype=complex)
    single = U.ndim == 1
    U = U.reshape(grid.N_x, -1) if single else U
    if U.shape[0] != grid.N_x:
        raise GridMismatchError(f"function has {U.shape[0]} samples, grid has {grid.N_x}")
    w = family.weights() * M(family.centers) ** 2
    acc = np.zeros(U.shape[1])
    for i in range(len(family)):
        if w[i] == 0:
            continue
        T = weyl_quantize(family.member(i, grid)).matrix
        acc += w[i] * np.sum(np.abs(T @ U) ** 2, axis=0) * grid.dx
    out = np.sqrt(acc)
    return out[0] if single else out


def sobolev_norm(u: np.ndarray, M: Weight | None, family: ConfinedFamily,
                 grid: PhaseGrid) -> SobolevReport:
    """sqrt(sum_Y M(Y)^2 ||theta_Y^w u||^2 |g_Y|^{1/2} cellvol)."""
    val = float(sobolev_norms(u, M, family, grid))
    l2 = float(np.sqrt(np.sum(np.abs(u) ** 2) * grid.dx))
    return SobolevReport(val, l2, family.label, (M or constant_weight()).label, len(family))


def random_test_functions(grid: PhaseGrid, count: int = 50, seed: int = 0) -> np.ndarray:
    """Gaussian wave packets with random centers, widths and frequencies, unit L2 norm."""
    rng = np.random.default_rng(seed)
    x = grid.x
    U = np.zeros((grid.N_x, count), dtype=complex)
    for j in range(count):
        for _ in range(rng.integers(1, 4)):
            x0 = rng.uniform(-0.4, 0.4) * grid.L_x
            w = rng.uniform(0.5, 2.0)
            k0 = rng.uniform(-0.4, 0.4) * grid.L_xi
            c = rng.normal() + 1j * rng.normal()
            U[:, j] += c * np.exp(-0.5 * ((x - x0) / w) ** 2 + 1j * k0 * x)
        U[:, j] /= np.sqrt(np.sum(np.abs(U[:, j]) ** 2) * grid.dx)
    return U


def norm_equivalence_constant(values: np.ndarray, l2: np.ndarray) -> float:
    """Smallest C with l2/C <= values <= C l2 on the set."""
    r = np.asarray(values) / np.asarray(l2)
    return float(max(np.max(r), 1.0 / np.min(r)))


# --------------------------------------------------------------------------
# weight conjugation and the reduced index

def weight_conjugators(M1: Weight, M2: Weight, grid: PhaseGrid, **kw):
    """b1 = M1/M2 sampled, b2 = its # inverse; residual of b1 # b2 in info."""
    b1 = sample(lambda x, xi: (M1 / M2)(np.stack([x, xi], -1)), grid)
    b1 = b1.replace(label=f"{M1.label}/{M2.label}")
    b2 = symbol_inverse(b1, **kw)
    res = core_residual(moyal(b1, b2))
    return b1, b2.replace(info=dict(b2.info, residual=res))


def fredholm_check(a, M: Weight, M1: Weight, *, rank_tol: float | None = None,
                   truncations: Sequence[int] = DEFAULT_TRUNCATIONS,
                   L: float = DEFAULT_L) -> IndexReport:
    """Index of the L2 realization of c # a # b with c = M1/M and b = (M1)^{#-1}.

    c^w a^w b^w: H(M1) -> H(M1) -> H(M1/M) -> L2 composed so that the
    product is of order one; per-truncation matrices are multiplied on the
    operator side.
    """
    one = constant_weight()

    @as_builder
    def build(N):
        g = PhaseGrid.fourier(L, N)
        A = weyl_quantize(sample(a, g))
        c = sample(lambda x, xi: (M1 / M)(np.stack([x, xi], -1)), g)
        if M1.label == one.label:
            return weyl_quantize(c) @ A
        _, b = weight_conjugators(M1, one, g)
        return weyl_quantize(c) @ A @ weyl_quantize(b)

    rep = numerical_index(build, rank_tol, truncations, L=L,
                          label=f"{spec_label(a)} | M={M.label}, M1={M1.label}")
    return rep


# --------------------------------------------------------------------------
# parametrix

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass
class ParametrixReport:
    K_radius: float
    eps: float
    weighted_sup: float
    shells: list
    decreasing: bool
    noise_floor: float

    def to_dict(self) -> dict:
        return {"K_radius": self.K_radius, "eps": self.eps, "weighted_sup": self.weighted_sup,
                "shells": self.shells, "decreasing": self.decreasing,
                "noise_floor": self.noise_floor}


def parametrix(a: SymbolGrid, M: Weight | None, metric: MetricField, K_radius: float = 1.0, *,
               annulus=(2.0, 6.0), shell_width: float = 1.0, eps_factor: float = 1e-3,
               noise_floor: float = 1e-9) -> tuple[SymbolGrid, ParametrixReport]:
    """Pointwise inverse outside K blended into (a*a + eps^2)^{-1} a* inside.

    The blend weight is a smoothstep over K <= |X| <= 1.5 K and
    eps = eps_factor max|a| on K, raised to half the smallest singular value
    of a on the blend annulus when a nearly vanishes inside K. When a is
    uniformly invertible on K (smallest singular value above 100 eps) no
    regularization is needed and eps = 0. The report holds
    sup |a~ # a - 1| lambda_g over the annulus and the residual maxima on
    unit-width shells.
    """
    ell = check_elliptic(a, M, K_radius)
    if not ell.passed:
        raise EllipticityError(f"symbol {a.label!r} is not elliptic outside |X| <= {K_radius}")
    g = a.grid
    P = g.points()
    R = np.linalg.norm(P, axis=-1)
    v = a.values
    inK = R <= K_radius
    amax = float(np.max(np.linalg.norm(v[inK], ord=2, axis=(-2, -1)))) if np.any(inK) else 0.0
    eps = eps_factor * amax
    # a near-zero of a inside K turns (a*a + eps^2)^{-1} a* into a spike of height
    # 1/(2 eps) and width ~eps, far below the grid spacing; cap it at the level
    # of a^{-1} on the blend annulus instead
    smin = np.linalg.svd(v, compute_uv=False)[..., -1]
    ring = (R >= K_radius) & (R <= 1.5 * K_radius)
    s_edge = float(np.min(smin[ring])) if np.any(ring) else 0.0
    s_in = float(np.min(smin[inK])) if np.any(inK) else s_edge
    if s_in < 0.5 * s_edge:
        eps = max(eps, 0.5 * s_edge)
    elif s_in > 100 * eps:
        eps = 0.0
    I = np.eye(a.d)
    vh = np.conj(np.swapaxes(v, -1, -2))
    reg = np.linalg.solve(vh @ v + eps ** 2 * I, vh)
    far = R > K_radius
    pinv = np.zeros_like(v)
    pinv[far] = np.linalg.inv(v[far])
    w = smoothstep((R - K_radius) / (0.5 * K_radius)) if K_radius > 0 else np.ones_like(R)
    w = w[..., None, None]
    at = a.replace(w * pinv + (1 - w) * reg, label=f"parametrix({a.label})")
    rho = moyal(at, a) - 1.0
    fib = np.linalg.norm(rho.values, ord=2, axis=(-2, -1)) if a.d > 1 else np.abs(rho.scalar)
    core = g.core_mask()
    lam = planck(metric, P)
    lo, hi = annulus
    ring = core & (R >= lo) & (R <= hi)
    wsup = float(np.max(fib[ring] * lam[ring])) if np.any(ring) else math.nan
    shells = []
    r0 = lo
    while r0 < hi - 1e-12:
        sel = core & (R >= r0) & (R < r0 + shell_width)
        if np.any(sel):
            shells.append({"R": r0, "residual": float(np.max(fib[sel]))})
        r0 += shell_width
    vals = [s["residual"] for s in shells]
    dec = all(b <= a_ * (1 + 1e-9) or max(a_, b) <= noise_floor for a_, b in zip(vals, vals[1:]))
    rep = ParametrixReport(float(K_radius), eps, wsup, shells, dec, noise_floor)
    return at, rep


# --------------------------------------------------------------------------
# converse experiment

@dataclass
class ConverseReport:
    label: str
    elliptic: bool
    fredholm: bool | None
    index: int | None
    inconclusive: bool
    consistent: bool | None
    ellipticity: dict
    index_report: dict | None
    riesz: dict | None = None
    remainder: float | None = None
    gap_details: dict | None = None

    def to_dict(self) -> dict:
        return {"label": self.label, "elliptic": self.elliptic, "fredholm": self.fredholm,
                "index": self.index, "inconclusive": self.inconclusive,
                "consistent": self.consistent, "ellipticity": self.ellipticity,
                "index_report": self.index_report, "riesz": self.riesz,
                "remainder_far": self.remainder, "gap_details": self.gap_details}


def converse_experiment(a, metric: MetricField, *, truncations: Sequence[int] = DEFAULT_TRUNCATIONS,
                        L: float = DEFAULT_L, K_radius: float = 1.0, rank_tol: float | None = None,
                        far_radius: float = 4.0) -> ConverseReport:
    """Fredholmness (index with gap) versus ellipticity with M = 1.

    For Fredholm instances B is the Riesz projector onto ker a^w and
    c = (b_B + a* # a)^{#-1}; the remainder ||c # a* # a - 1|| is measured for
    |X| >= far_radius on the core box.
    """
    label = spec_label(a)
    gbig = PhaseGrid.fourier(L, max(truncations))
    asym = sample(a, gbig)
    ell = check_elliptic(asym, None, K_radius)
    try:
        rep = numerical_index(a, rank_tol, truncations, L=L)
    except NoSpectralGapError as exc:
        return ConverseReport(label, ell.passed, None, None, True, None, ell.to_dict(), None,
                              gap_details=exc.details)
    fred = rep.stable
    out = ConverseReport(label, ell.passed, fred, rep.index, False, fred == ell.passed,
                         ell.to_dict(), rep.to_dict())
    if fred:
        N = truncations[0] if len(truncations) else 256
        g = PhaseGrid.fourier(L, 256 if 256 in truncations else N)
        A = weyl_quantize(sample(a, g))
        res, sv, _ = analyze_truncation(A, rank_tol)
        radius = contour_radius(sv, min(1.0, res.sigma_above ** 2), res.rank_tol)
        B = riesz_projector(A, radius)
        AhA = A.adjoint() @ A
        bB = dequantize(OperatorMatrix(g, A.d, B.matrix))
        c = symbol_inverse(bB + dequantize(AhA))
        rem = dequantize(weyl_quantize(c) @ AhA) - 1.0
        P = g.points()
        far = g.core_mask() & (np.linalg.norm(P, axis=-1) >= far_radius)
        out.riesz = B.to_dict()
        out.remainder = rem.sup_norm(far)
    return out
