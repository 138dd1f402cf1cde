"""Symbol registry, S(M,g) seminorms, confined partitions and ellipticity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.signal import resample

from .errors import CoverageError, ResolutionError, SymbolError
from .grid import PhaseGrid, SymbolGrid
from .metric import (MetricField, Weight, constant_weight, form_value, probe_directions,
                     project_to_ellipsoid)

INTERIOR_MARGIN = 0.1
STEP_FRACTION = 1.0 / 8.0
MAX_ORDER = 4


def _jap(x, xi):
    return np.sqrt(1.0 + x * x + xi * xi)


def _mat2(a, b, c, d):
    return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


BUILTINS: dict[str, Callable] = {
    "one": lambda x, xi: np.ones_like(x),
    "zero": lambda x, xi: np.zeros_like(x),
    "x": lambda x, xi: x,
    "xi": lambda x, xi: xi,
    "harmonic": lambda x, xi: x * x + xi * xi,
    "harmonic+1": lambda x, xi: x * x + xi * xi + 1.0,
    "annihilation": lambda x, xi: x + 1j * xi,
    "creation": lambda x, xi: x - 1j * xi,
    "shubin-weight-s": lambda x, xi, s=1.0: _jap(x, xi) ** s,
    "vanishing": lambda x, xi: 1.0 / _jap(x, xi),
    "directional-degenerate": lambda x, xi: x,
    "gaussian": lambda x, xi: np.exp(-x * x - xi * xi),
    "perturbed-identity": lambda x, xi, eps=0.4: 1.0 + eps * np.exp(-x * x - xi * xi),
    "elliptic-bounded": lambda x, xi: (x + 1j * xi) / _jap(x, xi),
    "degenerate-bounded": lambda x, xi: x / _jap(x, xi),
    "rotation-2x2": lambda x, xi: _mat2(x + 0j, -xi + 0j, xi + 0j, x + 0j),
    "annihilation-2x2": lambda x, xi: _mat2(x + 1j * xi, 0 * x + 0j, 0 * x + 0j, 1 + 0 * x + 0j),
}

# natural order weight of each built-in, used by reports and the CLI
NATURAL_WEIGHT = {
    "one": 0.0, "zero": 0.0, "x": 1.0, "xi": 1.0, "harmonic": 2.0, "harmonic+1": 2.0,
    "annihilation": 1.0, "creation": 1.0, "vanishing": -1.0, "directional-degenerate": 1.0,
    "gaussian": 0.0, "perturbed-identity": 0.0, "elliptic-bounded": 0.0,
    "degenerate-bounded": 0.0, "rotation-2x2": 1.0, "annihilation-2x2": 1.0,
}


def evaluate(spec, x, xi, d: int | None = None, **params) -> np.ndarray:
    """Evaluate a symbol spec at points; returns shape (..., d, d)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if isinstance(spec, str):
        try:
            f = BUILTINS[spec]
        except KeyError:
            raise SymbolError(f"unknown symbol id {spec!r}; known: {sorted(BUILTINS)}") from None
        v = f(x, xi, **params)
    elif hasattr(spec, "evaluate"):
        v = spec.evaluate(x, xi)
    elif callable(spec):
        v = spec(x, xi, **params)
    else:
        raise SymbolError(f"cannot interpret symbol spec {spec!r}")
    v = np.asarray(v, dtype=complex)
    base = np.broadcast_shapes(x.shape, xi.shape)
    if v.shape == base or v.ndim == 0:
        v = np.broadcast_to(v, base)
        dd = 1 if d is None else d
        v = v[..., None, None] * np.eye(dd)
    elif v.shape[:-2] != base:
        v = np.broadcast_to(v, base + v.shape[-2:])
    if d is not None and v.shape[-1] != d:
        raise SymbolError(f"symbol has fiber dimension {v.shape[-1]}, expected {d}")
    return v


def spec_label(spec) -> str:
    if isinstance(spec, str):
        return spec
    return getattr(spec, "label", None) or getattr(spec, "__name__", "closure")


def sample(spec, grid: PhaseGrid, d: int | None = None, *, weight_label: str = "",
           metric_label: str = "", **params) -> SymbolGrid:
    """Nodewise evaluation of a built-in id, PolySymbol or callable f(x, xi)."""
    X, XI = grid.mesh()
    v = evaluate(spec, X, XI, d, **params)
    if not np.all(np.isfinite(v)):
        raise SymbolError(f"symbol {spec_label(spec)!r} is not finite on the grid")
    return SymbolGrid(grid, v, weight_label=weight_label, metric_label=metric_label,
                      label=spec_label(spec))


# --------------------------------------------------------------------------
# finite-difference derivative panel

_STENCILS = {
    0: np.array([0.0, 0.0, 1.0, 0.0, 0.0]),
    1: np.array([0.0, -0.5, 0.0, 0.5, 0.0]),
    2: np.array([0.0, 1.0, -2.0, 1.0, 0.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def refine(a: SymbolGrid, factor_x: int = 1, factor_xi: int = 1) -> SymbolGrid:
    """Trigonometric (FFT) upsampling; exact for band-limited periodic data."""
    g = a.grid
    v = a.values
    if factor_x > 1:
        v = resample(v, g.N_x * factor_x, axis=0)
    if factor_xi > 1:
        v = resample(v, g.N_xi * factor_xi, axis=1)
    g2 = PhaseGrid(g.L_x, g.N_x * factor_x, g.L_xi, g.N_xi * factor_xi)
    return SymbolGrid(g2, v, a.weight_label, a.metric_label, a.label, a.flags)


class _Interpolant:
    """Bicubic spline interpolation of every fiber entry."""

    def __init__(self, a: SymbolGrid):
        g = a.grid
        self.grid = g
        self.d = a.d
        self.parts = []
        for i in range(a.d):
            for j in range(a.d):
                v = a.values[..., i, j]
                re = RectBivariateSpline(g.x, g.xi, v.real)
                im = RectBivariateSpline(g.x, g.xi, v.imag) if np.any(v.imag) else None
                self.parts.append((i, j, re, im))
        self.lo = np.array([g.x[0], g.xi[0]])
        self.hi = np.array([g.x[-1], g.xi[-1]])

    def inside(self, P):
        return np.all((P >= self.lo - 1e-12) & (P <= self.hi + 1e-12), axis=-1)

    def __call__(self, P):
        P = np.asarray(P, dtype=float)
        out = np.zeros(P.shape[:-1] + (self.d, self.d), dtype=complex)
        px = np.clip(P[..., 0], self.lo[0], self.hi[0]).ravel()
        pxi = np.clip(P[..., 1], self.lo[1], self.hi[1]).ravel()
        for i, j, re, im in self.parts:
            val = re.ev(px, pxi)
            if im is not None:
                val = val + 1j * im.ev(px, pxi)
            out[..., i, j] = val.reshape(P.shape[:-1])
        return out


def _fiber_norm(v):
    if v.shape[-1] == 1:
        return np.abs(v[..., 0, 0])
    return np.linalg.norm(v, ord=2, axis=(-2, -1))


def _eval_nodes(grid: PhaseGrid, margin: float, max_per_axis: int | None):
    mask = grid.interior_mask(margin)
    ii, jj = np.nonzero(mask)
    if max_per_axis:
        si = max(1, math.ceil(len(np.unique(ii)) / max_per_axis))
        sj = max(1, math.ceil(len(np.unique(jj)) / max_per_axis))
        keep = (ii % si == 0) & (jj % sj == 0)
        ii, jj = ii[keep], jj[keep]
    return np.stack([grid.x[ii], grid.xi[jj]], -1)


def derivative_panel(a: SymbolGrid, metric: MetricField, k: int, *, seed: int = 0,
                     margin: float = INTERIOR_MARGIN, max_per_axis: int | None = 96,
                     nodes=None):
    """Directional derivatives of a along g_X-unit probe directions.

    Returns (nodes, panel) where panel[l] holds, per node, the max over probe
    directions T of ||a^{(l)}(X; T, ..., T)|| with g_X(T) = 1, l = 0..k.
    Central differences use the step (ball radius)/8, i.e. 1/8 in units of T.
    """
    if not 0 <= k <= MAX_ORDER:
        raise ValueError(f"derivative order must lie in 0..{MAX_ORDER}")
    g = a.grid
    P = _eval_nodes(g, margin, max_per_axis) if nodes is None else np.asarray(nodes, float)
    dirs = probe_directions(1, seed)
    G = metric.matrices(P)
    interp = _Interpolant(a)
    panel = np.zeros((k + 1, len(P)))
    panel[0] = _fiber_norm(interp(P))
    if k == 0:
        return P, panel
    tau = STEP_FRACTION
    spacing = max(g.dx, g.dxi)
    offsets = np.arange(-2, 3)
    for e in dirs:
        T = e[None, :] / np.sqrt(form_value(G, np.broadcast_to(e, P.shape)))[:, None]
        step_len = tau * np.linalg.norm(T, axis=1)
        if np.min(step_len) < 2 * spacing * (1 - 1e-12):
            raise ResolutionError(
                f"probe step {np.min(step_len):.3g} is below twice the grid spacing {spacing:.3g}")
        pts = P[:, None, :] + offsets[None, :, None] * tau * T[:, None, :]
        ok = np.all(interp.inside(pts), axis=1)
        vals = interp(pts)
        for l in range(1, k + 1):
            w = _STENCILS[l]
            der = np.einsum("s,nsij->nij", w, vals) / tau ** l
            nrm = np.where(ok, _fiber_norm(der), 0.0)
            panel[l] = np.maximum(panel[l], nrm)
    return P, panel


def seminorm_S(a: SymbolGrid, M: Weight | None, metric: MetricField, k: int, **kw) -> float:
    """Finite-difference realization of the S(M, g) seminorm of order k."""
    M = M or constant_weight()
    P, panel = derivative_panel(a, metric, k, **kw)
    m = M(P)
    return float(np.max(panel / m[None, :]))


def ellipsoid_distance(P, Y, A, H, r):
    """H(P - U) where U = {Z : A(Z - Y) <= r^2}; vectorized over P."""
    R = np.linalg.cholesky(H).T
    Ri = np.linalg.inv(R)
    B = Ri.T @ A @ Ri
    w = (np.asarray(P, dtype=float) - Y) @ R.T
    y = project_to_ellipsoid(w, 0.5 * (B + B.T), r)
    return np.sum((w - y) ** 2, axis=-1)


def confinement_norm(a: SymbolGrid, Y, r: float, metric: MetricField, k: int, **kw) -> float:
    """sup over X, l <= k of ||a^{(l)}(X; T..)|| (1 + g^sigma_Y(X - U_{Y,r}))^{k/2}."""
    Y = np.asarray(Y, dtype=float)
    if not np.any(a.values):
        return 0.0
    P, panel = derivative_panel(a, metric, k, **kw)
    dist = ellipsoid_distance(P, Y, metric.matrices(Y), metric.dual_matrices(Y), r)
    return float(np.max(panel * (1.0 + dist)[None, :] ** (k / 2.0)))


def gaussian_bump(P, Y, gY, r):
    """exp(-g_Y(X - Y) / (2 r^2)): Gaussian with covariance g_Y^{-1} r^2."""
    D = np.asarray(P, dtype=float) - Y
    return np.exp(-0.5 * form_value(gY, D) / (r * r))


# --------------------------------------------------------------------------
# confined partition of unity

@dataclass
class ConfinedFamily:
    """Gaussian bumps phi_Y adapted to g_Y, renormalized to sum to one.

    The Riemann-sum identity sum_Y phi_Y(X) |g_Y|^{1/2} cellvol = 1 holds
    exactly at every node of any grid on which members are evaluated.
    """

    metric: MetricField
    r: float
    centers: np.ndarray
    cellvol: np.ndarray
    label: str
    confinement_constant: float | None = None
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.cellvol = np.broadcast_to(np.asarray(self.cellvol, dtype=float),
                                       (len(self.centers),)).copy()
        self._g = self.metric.matrices(self.centers)
        self._sqrtdet = np.sqrt(np.linalg.det(self._g))
        # (2 pi r^2)^{-n} makes the raw sum close to one before renormalization
        self._amp = 1.0 / (2 * np.pi * self.r ** 2) ** self.metric.n

    def __len__(self):
        return len(self.centers)

    def raw(self, i: int, P) -> np.ndarray:
        return self._amp * gaussian_bump(P, self.centers[i], self._g[i], self.r)

    def raw_sum(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        S = np.zeros(P.shape[:-1])
        for i in range(len(self)):
            S += self.raw(i, P) * self._sqrtdet[i] * self.cellvol[i]
        return S

    def normalizer(self, grid: PhaseGrid) -> np.ndarray:
        key = grid
        if key not in self._norm_cache:
            S = self.raw_sum(grid.points())
            core = grid.interior_mask(INTERIOR_MARGIN)
            if np.min(S[core]) < 1e-12:
                raise CoverageError("partition centers are too sparse: raw sum below 1e-12")
            self._norm_cache[key] = np.maximum(S, 1e-300)
        return self._norm_cache[key]

    def member_values(self, i: int, grid: PhaseGrid) -> np.ndarray:
        return self.raw(i, grid.points()) / self.normalizer(grid)

    def member(self, i: int, grid: PhaseGrid) -> SymbolGrid:
        return SymbolGrid(grid, self.member_values(i, grid), metric_label=self.metric.label,
                          label=f"{self.label}[{i}]")

    def sum_residual(self, grid: PhaseGrid) -> float:
        S = np.zeros((grid.N_x, grid.N_xi))
        for i in range(len(self)):
            S += self.member_values(i, grid) * self._sqrtdet[i] * self.cellvol[i]
        core = grid.interior_mask(INTERIOR_MARGIN)
        return float(np.max(np.abs(S[core] - 1.0)))

    def weights(self) -> np.ndarray:
        """|g_Y|^{1/2} cellvol per center."""
        return self._sqrtdet * self.cellvol

    def uniform_confinement(self, grid: PhaseGrid, k: int = 2, members=None, **kw) -> float:
        idx = range(len(self)) if members is None else members
        vals = [confinement_norm(self.member(i, grid), self.centers[i], self.r, self.metric, k,
                                 **kw) for i in idx]
        return float(max(vals))


def center_lattice(grid: PhaseGrid, spacing: float, pad: float = 0.0):
    """Uniform lattice of centers covering the grid box; returns (centers, cellvol)."""
    def axis(L):
        m = int(math.floor((L + pad) / spacing))
        return spacing * np.arange(-m, m + 1)
    cx, cxi = axis(grid.L_x), axis(grid.L_xi)
    C = np.stack(np.meshgrid(cx, cxi, indexing="ij"), -1).reshape(-1, 2)
    return C, spacing * spacing


def partition_of_unity(grid: PhaseGrid, metric: MetricField, r: float, *, centers=None,
                       cellvol=None, spacing: float | None = None, confinement_k: int | None = 2,
                       confinement_members: int = 5, label: str | None = None) -> ConfinedFamily:
    """Confined Gaussian family renormalized on ``grid``.

    Default centers form a lattice with spacing r times the smallest metric
    ball radius on the box. The uniform confinement constant is measured on
    a spread-out subset of members (all members if there are few).
    """
    if centers is None:
        if spacing is None:
            rad = float(np.min(metric.ball_radius(grid.points()[::4, ::4].reshape(-1, 2))))
            spacing = r * rad
        centers, cellvol = center_lattice(grid, spacing)
    elif cellvol is None:
        raise ValueError("cellvol is required with explicit centers")
    fam = ConfinedFamily(metric, r, centers, cellvol, label or f"{metric.label}-pu(r={r:g})")
    fam.normalizer(grid)
    if confinement_k is not None:
        n = len(fam)
        picks = sorted(set(np.linspace(0, n - 1, min(n, confinement_members)).astype(int)))
        try:
            fam.confinement_constant = fam.uniform_confinement(grid, confinement_k, picks)
        except ResolutionError:
            fam.confinement_constant = None
    return fam


# --------------------------------------------------------------------------
# ellipticity

@dataclass
class EllipticityReport:
    K_radius: float
    C: float
    margin: float
    inverse_bound: float
    passed: bool
    locus: list
    nodes_checked: int

    def to_dict(self) -> dict:
        return {"K_radius": self.K_radius, "C": self.C, "margin": self.margin,
                "inverse_bound": self.inverse_bound, "pass": self.passed,
                "locus": self.locus[:20], "locus_size": len(self.locus),
                "nodes_checked": self.nodes_checked}


def check_elliptic(a: SymbolGrid, M: Weight | None, K_radius: float, *,
                   det_floor: float = 1e-12) -> EllipticityReport:
    """Scan |det a(X)| / M(X)^d and ||a(X)^{-1}|| M(X) on nodes with |X| > K."""
    M = M or constant_weight()
    g = a.grid
    if not (0 <= K_radius < min(g.L_x, g.L_xi)):
        raise ValueError("K_radius must lie strictly inside the grid box")
    P = g.points()
    outside = np.linalg.norm(P, axis=-1) > K_radius
    Q = P[outside]
    v = a.values[outside]
    m = M(Q)
    det = np.abs(np.linalg.det(v)) if a.d > 1 else np.abs(v[:, 0, 0])
    ratio = det / m ** a.d
    smin = np.linalg.svd(v, compute_uv=False)[:, -1]
    with np.errstate(divide="ignore"):
        inv = np.where(smin > 0, m / np.where(smin > 0, smin, 1.0), np.inf)
    bad = ratio <= det_floor
    margin = float(np.min(ratio)) if len(ratio) else np.inf
    ib = float(np.max(inv)) if len(inv) else 0.0
    passed = bool(margin > det_floor and np.isfinite(ib))
    locus = [tuple(map(float, q)) for q in Q[bad]]
    return EllipticityReport(float(K_radius), margin, margin, ib, passed, locus, int(len(Q)))
