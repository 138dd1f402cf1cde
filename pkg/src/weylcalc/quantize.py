"""Discrete Weyl quantization, Wigner-type dequantization and the # product.

Grid conventions (Fourier-compatible PhaseGrid, N = N_x = N_xi):

* x_j = -L + j dx, xi_l = (l - N/2) dxi with dx dxi = 2 pi / N;
* the kernel K(x_j, x_k) = (1/2pi) sum_l e^{i (x_j - x_k) xi_l} a(m, xi_l) dxi is
  evaluated at the midpoint m = (x_j + x_k)/2 of the periodic (minimum
  image) separation s = j - k in [-N/2, N/2);
* midpoints falling half-way between nodes are obtained by 8-point
  periodic Lagrange interpolation of a along x;
* the matrix entry is K dx, so that a = 1 gives the identity.

Polynomial-type symbols are not periodic in xi; a smooth window toward the
edge value a(x, -Xi) is applied when the aliasing indicator fires.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import svdvals
from scipy.sparse.linalg import svds
from scipy.special import erf

from .errors import FitUndefined, GridMismatchError
from .grid import PhaseGrid, SymbolGrid
from .metric import MetricField, Weight, constant_weight, delta_r, form_value, probe_directions
from .symbols import ConfinedFamily, gaussian_bump, sample

# 8-point Lagrange weights for the value half-way between nodes
_HALF_WEIGHTS = np.array([-5.0, 49.0, -245.0, 1225.0, 1225.0, -245.0, 49.0, -5.0]) / 2048.0

ALIAS_BAND = 0.10      # outer fraction of the xi half-width inspected for aliasing
ALIAS_THRESHOLD = 1e-6
TAPER_BAND = 0.25      # outer fraction of the xi half-width used by the window
DENSE_SVD_MAX = 1024


class AliasingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense (d N) x (d N) realization of a^w; blocks indexed by spatial nodes."""

    grid: PhaseGrid
    d: int
    matrix: np.ndarray
    flags: frozenset = frozenset()
    label: str = ""

    def __post_init__(self):
        A = np.array(self.matrix, dtype=complex)
        n = self.d * self.grid.N_x
        if A.shape != (n, n):
            raise GridMismatchError(f"matrix shape {A.shape} does not match (dN, dN) = ({n}, {n})")
        if not np.all(np.isfinite(A)):
            raise ValueError("operator matrix has non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "flags", frozenset(self.flags))

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.grid, self.d, self.matrix.conj().T, self.flags,
                              f"({self.label})*")

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.grid != self.grid or other.d != self.d:
            raise GridMismatchError("operators live on different grids")
        return OperatorMatrix(self.grid, self.d, self.matrix @ other.matrix,
                              self.flags | other.flags, f"{self.label}.{other.label}")

    def norm(self) -> float:
        return operator_norm(self.matrix)

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def operator_norm(A: np.ndarray) -> float:
    """Largest singular value: dense SVD up to 1024, Lanczos beyond."""
    if A.shape[0] <= DENSE_SVD_MAX:
        return float(svdvals(A)[0])
    return float(svds(A, k=1, return_singular_vectors=False)[0])


# --------------------------------------------------------------------------
# windowing

def xi_window(grid: PhaseGrid, band: float = TAPER_BAND) -> np.ndarray:
    """Smooth window equal to 1 on |xi| <= (1 - band) Xi and ~1e-17 at +-Xi."""
    Xi = grid.L_xi
    c = Xi * (1.0 - band / 2.0)
    s = Xi * band / 12.0
    xi = grid.xi
    return 0.5 * (erf((c - xi) / s) + erf((c + xi) / s))


def aliasing_fraction(a: SymbolGrid) -> float:
    """Mass of xi-variation near the xi-boundary relative to total mass.

    Variation is measured against the edge value a(x, -Xi), so symbols that
    are constant in xi near the boundary (including xi-independent ones) are
    not flagged.
    """
    v = a.values
    edge = v[:, :1]
    band = np.abs(a.grid.xi) >= (1.0 - ALIAS_BAND) * a.grid.L_xi
    dev = np.abs(v[:, band] - edge).sum()
    total = np.abs(v).sum()
    return float(dev / total) if total > 0 else 0.0


def window_symbol(a: SymbolGrid, band: float = TAPER_BAND) -> SymbolGrid:
    """a_edge + w(xi) (a - a_edge): periodic and smooth in xi, equal to a inside."""
    w = xi_window(a.grid, band)[None, :, None, None]
    edge = a.values[:, :1]
    return a.replace(edge + w * (a.values - edge), flags=a.flags | {"windowed"})


def _prepare(a: SymbolGrid, window) -> SymbolGrid:
    if window == "auto":
        return window_symbol(a) if aliasing_fraction(a) > ALIAS_THRESHOLD else a
    if window:
        return window_symbol(a)
    if aliasing_fraction(a) > ALIAS_THRESHOLD:
        warnings.warn(f"symbol {a.label!r} has xi-boundary mass above {ALIAS_THRESHOLD:g}",
                      AliasingWarning, stacklevel=3)
        return a.replace(flags=a.flags | {"aliasing"})
    return a


# --------------------------------------------------------------------------
# core transforms

def _half_shift(v: np.ndarray) -> np.ndarray:
    """Periodic 8-point interpolation of v (axis 0) to x_j + dx/2."""
    out = np.zeros_like(v)
    for i, w in enumerate(_HALF_WEIGHTS):
        out += w * np.roll(v, -(i - 3), axis=0)
    return out


def _index_maps(N: int):
    j, k = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    s = ((j - k + N // 2) % N) - N // 2
    p = (2 * k + s) % (2 * N)
    return s, p, (j - k) % N


_MAPS: dict[int, tuple] = {}


def _maps(N):
    if N not in _MAPS:
        _MAPS[N] = _index_maps(N)
    return _MAPS[N]


def _quantize_scalar(v: np.ndarray) -> np.ndarray:
    """Matrix of the Weyl quantization of scalar samples v (N x N)."""
    N = v.shape[0]
    fine = np.empty((2 * N, N), dtype=complex)
    fine[0::2] = v
    fine[1::2] = _half_shift(v)
    G = np.fft.ifft(fine, axis=1) * ((-1.0) ** np.arange(N))[None, :]
    s, p, sm = _maps(N)
    A = G[p, sm]
    # separation -N/2 is shared by two antipodal midpoints; average them
    ny = s == -N // 2
    A[ny] = 0.5 * (G[p[ny], N // 2] + G[(p[ny] + N) % (2 * N), N // 2])
    return A


def _dequantize_scalar(A: np.ndarray) -> np.ndarray:
    N = A.shape[0]
    s, p, sm = _maps(N)
    G = np.zeros((2 * N, N), dtype=complex)
    G[p, sm] = A
    Ge = G[0::2].copy()
    odd = (np.arange(N) % 2) == 1
    Ge[:, odd] = np.roll(_half_shift(G[1::2]), 1, axis=0)[:, odd]
    Ge *= ((-1.0) ** np.arange(N))[None, :]
    return np.fft.fft(Ge, axis=1)


def _check_grid(grid: PhaseGrid):
    if not grid.fourier_compatible:
        raise GridMismatchError("quantization needs a Fourier-compatible grid (dxi = 2pi/(N dx))")


def weyl_quantize(a: SymbolGrid, window="auto") -> OperatorMatrix:
    """Dense matrix of a^w on the spatial nodes of a Fourier-compatible grid."""
    _check_grid(a.grid)
    a = _prepare(a, window)
    d, N = a.d, a.grid.N_x
    if d == 1:
        M = _quantize_scalar(a.values[..., 0, 0])
    else:
        blocks = np.empty((d, d, N, N), dtype=complex)
        for i in range(d):
            for j in range(d):
                blocks[i, j] = _quantize_scalar(a.values[..., i, j])
        M = blocks.transpose(2, 0, 3, 1).reshape(d * N, d * N)
    return OperatorMatrix(a.grid, d, M, a.flags, a.label)


def dequantize(A: OperatorMatrix) -> SymbolGrid:
    """a(x, xi) = sum_t e^{-i xi t} K(x + t/2, x - t/2) dt at every node."""
    _check_grid(A.grid)
    d, N = A.d, A.grid.N_x
    if d == 1:
        v = _dequantize_scalar(np.asarray(A.matrix))[..., None, None]
    else:
        blocks = np.asarray(A.matrix).reshape(N, d, N, d).transpose(1, 3, 0, 2)
        v = np.empty((N, N, d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                v[..., i, j] = _dequantize_scalar(blocks[i, j])
    return SymbolGrid(A.grid, v, label=A.label, flags=A.flags)


def moyal(a: SymbolGrid, b: SymbolGrid, window="auto") -> SymbolGrid:
    """a # b computed as dequantize(a^w b^w)."""
    if a.grid != b.grid:
        raise GridMismatchError("moyal needs both symbols on the same grid")
    out = dequantize(weyl_quantize(a, window) @ weyl_quantize(b, window))
    return out.replace(label=f"{a.label}#{b.label}")


# --------------------------------------------------------------------------
# operator-side seminorms

def linear_form_operator(grid: PhaseGrid, T, d: int = 1) -> OperatorMatrix:
    """Quantization of L(X) = [T, X] = tau.x - t.xi for T = (t, tau)."""
    t, tau = float(T[0]), float(T[1])
    L = sample(lambda x, xi: tau * x - t * xi, grid, d)
    return weyl_quantize(L, window=True)


def commutator(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """ad L . B = L B - B L."""
    return L @ B - B @ L


def op_seminorm(a: SymbolGrid, M: Weight | None, metric: MetricField, family: ConfinedFamily,
                k: int, *, members=None, seed: int = 0) -> float:
    """sup over centers Y, l <= k of M(Y)^{-1} ||ad L_1^w .. ad L_l^w (theta_Y^w a^w)||.

    L_j X = [T_j, X] with g_Y(T_j) = 1 over the probe set. For l = 2 the
    pairs are all basis pairs plus (T, T) for the random probes.
    """
    if not 0 <= k <= 2:
        raise ValueError("op_seminorm supports k <= 2")
    M = M or constant_weight()
    grid = a.grid
    A = weyl_quantize(a).matrix
    dirs = probe_directions(1, seed)
    idx = range(len(family)) if members is None else members
    best = 0.0
    for i in idx:
        Y = family.centers[i]
        gY = metric.matrices(Y)
        B = weyl_quantize(family.member(i, grid)).matrix @ A
        val = operator_norm(B)
        if k >= 1:
            Ts = [e / math.sqrt(form_value(gY, e)) for e in dirs]
            Ls = [linear_form_operator(grid, T, a.d).matrix for T in Ts]
            ad1 = [commutator(L, B) for L in Ls]
            val = max(val, max(operator_norm(C) for C in ad1))
            if k == 2:
                pairs = [(p, q) for p in range(2) for q in range(2)]
                pairs += [(p, p) for p in range(2, len(Ls))]
                val = max(val, max(operator_norm(commutator(Ls[p], ad1[q])) for p, q in pairs))
        best = max(best, val / float(M(Y)))
    return best


# --------------------------------------------------------------------------
# chain decay

@dataclass
class ChainDecayReport:
    nu: int
    centers: list
    lhs: float
    product_of_norms: float
    deltas: list
    N0: float
    rhs_model: float
    fit_quality: float
    fit_undefined: bool
    subchains: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "centers": self.centers, "lhs": self.lhs,
                "product_of_norms": self.product_of_norms, "deltas": self.deltas,
                "N0": self.N0, "rhs_model": self.rhs_model, "fit_quality": self.fit_quality,
                "fit_undefined": self.fit_undefined, "subchains": self.subchains}


def chain_grid(centers, margin: float = 6.0, N: int = 256) -> PhaseGrid:
    C = np.asarray(centers, dtype=float)
    L = max(8.0, float(np.max(np.abs(C[:, 0]))) + margin)
    grid = PhaseGrid.fourier(L, N)
    while grid.L_xi < float(np.max(np.abs(C[:, 1]))) + margin:
        N *= 2
        grid = PhaseGrid.fourier(L, N)
    return grid


def confined_chain_decay(centers, metric: MetricField, r: float, nu: int | None = None, *,
                         grid: PhaseGrid | None = None, fast_delta: bool = False
                         ) -> ChainDecayReport:
    """Measure ||c_0^w ... c_nu^w|| for unit-norm Gaussian bumps at Y_j.

    N0 is fitted by least squares on every contiguous sub-chain:
    log ||c_i^w..c_j^w|| ~ -N0 sum log delta_r(Y_m, Y_{m+1}) + const.
    fit_quality is the RMS residual of that fit in natural-log units.
    """
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    nu = len(C) - 1 if nu is None else nu
    if nu != len(C) - 1:
        raise ValueError("nu must equal len(centers) - 1")
    if not 1 <= nu <= 8:
        raise ValueError("nu must lie in 1..8")
    grid = grid or chain_grid(C)
    ops = []
    for Y in C:
        c = sample(lambda x, xi, Y=Y: gaussian_bump(np.stack([x, xi], -1), Y,
                                                   metric.matrices(Y), r), grid)
        A = weyl_quantize(c).matrix
        ops.append(A / operator_norm(A))
    deltas = [delta_r(metric, C[j], C[j + 1], r, fast=fast_delta) for j in range(nu)]
    logd = np.log(deltas)
    rows = []
    for i, j in itertools.combinations(range(nu + 1), 2):
        prod = ops[i]
        for m in range(i + 1, j + 1):
            prod = prod @ ops[m]
        rows.append((i, j, operator_norm(prod), float(logd[i:j].sum())))
    lhs = next(v for i, j, v, _ in rows if i == 0 and j == nu)
    S = np.array([s for *_, s in rows])
    y = np.log(np.maximum([v for _, _, v, _ in rows], 1e-300))
    undefined = bool(np.all(S <= 1e-12))
    if undefined:
        N0, quality = 0.0, float("nan")
    else:
        D = np.stack([-S, np.ones_like(S)], 1)
        coef, *_ = np.linalg.lstsq(D, y, rcond=None)
        N0 = max(0.0, float(coef[0]))
        resid = y - D @ np.array([N0, coef[1]])
        quality = float(np.sqrt(np.mean(resid ** 2)))
    rhs = float(np.exp(-N0 * logd.sum()))
    sub = [{"i": i, "j": j, "norm": v, "log_delta_sum": s} for i, j, v, s in rows]
    return ChainDecayReport(nu, C.tolist(), float(lhs), 1.0, list(map(float, deltas)), N0, rhs,
                            quality, undefined, sub)


def chain_fit_or_raise(report: ChainDecayReport) -> float:
    if report.fit_undefined:
        raise FitUndefined("all delta_r equal 1: centers overlap")
    return report.N0
