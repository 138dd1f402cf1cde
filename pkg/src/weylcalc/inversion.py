"""Neumann-series inversion of symbols, two-sided # inverses, and C^N regularity
of inverse families through the derivative identity d b = -b # (d a) # b.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import svdvals

from .errors import ContractionError, ConvergenceError, NonInvertibleError, WeylCalcError
from .grid import SymbolGrid
from .metric import euclidean_metric
from .quantize import OperatorMatrix, dequantize, operator_norm, weyl_quantize
from .symbols import derivative_panel, refine

DIRECT_SUM_MAX = 256
TRACE_TERMS = 16
COND_MAX = 1e8
NORM_MARGIN = 1.01


@dataclass
class NeumannReport:
    m_max: int
    contraction: float
    tail_norm: list
    seminorm_trace: dict
    fitted_ratio: dict
    converged: bool
    method: str

    def to_dict(self) -> dict:
        return {"m_max": self.m_max, "operator_contraction": self.contraction,
                "tail_norm": self.tail_norm,
                "seminorm_trace": {str(k): v for k, v in self.seminorm_trace.items()},
                "fitted_ratio": {str(k): v for k, v in self.fitted_ratio.items()},
                "converged": self.converged, "method": self.method}


def terms_needed(eps: float, tol: float) -> int:
    """Smallest m with eps^{m+1} / (1 - eps) <= tol."""
    if eps == 0.0:
        return 0
    m = math.log(tol * (1.0 - eps)) / math.log(eps) - 1.0
    return max(0, math.ceil(m - 1e-12))


def _trace_panel(sym: SymbolGrid, k_max: int, fine: tuple[int, int]) -> list[float]:
    """S(1, euclidean) seminorms of orders 0..k_max on the core box of an FFT-refined grid."""
    fs = refine(sym, *fine)
    g = fs.grid
    xs = np.linspace(-0.5 * g.L_x, 0.5 * g.L_x, 33)
    xis = np.linspace(-0.5 * g.L_xi, 0.5 * g.L_xi, 33)
    nodes = np.stack(np.meshgrid(xs, xis, indexing="ij"), -1).reshape(-1, 2)
    _, panel = derivative_panel(fs, euclidean_metric(), k_max, nodes=nodes)
    run = np.maximum.accumulate(panel.max(axis=1))
    return [float(v) for v in run]


def fit_ratio(values: Sequence[float]) -> float:
    """exp of the slope of a least-squares line through log(values) versus m."""
    v = np.asarray(values, dtype=float)
    keep = v > 1e-300
    m = np.arange(1, len(v) + 1)[keep]
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(m, np.log(v[keep]), 1)[0]
    return float(math.exp(slope))


def _trace_refinement(sym: SymbolGrid) -> tuple[int, int]:
    """FFT refinement factors making dx, dxi small against a unit probe step."""
    g = sym.grid
    target = 1.0 / 8.0 / 2.0
    fx = 1 << max(0, math.ceil(math.log2(g.dx / target * 1.25)))
    fxi = 1 << max(0, math.ceil(math.log2(g.dxi / target * 1.25)))
    return fx, fxi


def neumann_inverse(r: SymbolGrid, tol: float = 1e-13, m_cap: int = 2 ** 40, *,
                    trace: bool = True, trace_terms: int = TRACE_TERMS
                    ) -> tuple[SymbolGrid, NeumannReport]:
    """R = 1 + sum_{m=1}^{m*} r^{#m}, powers taken on the operator side.

    m* is the first m with eps^{m+1}/(1 - eps) <= tol, eps = ||r^w||. Up to
    256 terms are summed directly; longer series use the product
    prod_k (I + R^{2^k}), which yields the same partial sums of length 2^K - 1.
    """
    Rw = weyl_quantize(r).matrix
    n = Rw.shape[0]
    eps = operator_norm(Rw) if np.any(Rw) else 0.0
    if eps >= 1.0:
        raise ContractionError(f"||r^w|| = {eps:.6g} is not below 1")
    m_star = terms_needed(eps, tol)
    if m_star > m_cap:
        raise ConvergenceError(f"{m_star} terms needed for tol {tol:g}, cap is {m_cap}")
    I = np.eye(n, dtype=complex)
    traces: dict[int, list] = {0: [], 1: [], 2: []}
    fine = _trace_refinement(r)
    if m_star <= DIRECT_SUM_MAX:
        method = "direct"
        S = I.copy()
        P = I
        for m in range(1, m_star + 1):
            P = P @ Rw
            S += P
            if trace and m <= trace_terms:
                vals = _trace_panel(dequantize(OperatorMatrix(r.grid, r.d, P)), 2, fine)
                for kk in range(3):
                    traces[kk].append(vals[kk])
        m_used = m_star
    else:
        method = "doubling"
        K = math.ceil(math.log2(m_star + 1))
        S = I.copy()
        P = Rw.copy()
        for k in range(K):
            S = S + S @ P if k else I + P
            if k < K - 1:
                P = P @ P
        m_used = 2 ** K - 1
        if trace:
            P = I
            for m in range(1, trace_terms + 1):
                P = P @ Rw
                vals = _trace_panel(dequantize(OperatorMatrix(r.grid, r.d, P)), 2, fine)
                for kk in range(3):
                    traces[kk].append(vals[kk])
    # tail bound at every partial sum actually formed
    ms = range(m_used + 1) if method == "direct" else [2 ** k - 1 for k in range(1, K + 1)]
    tails = [[m, float(eps ** (m + 1) / (1.0 - eps))] for m in ms] if eps else [[0, 0.0]]
    ratios = {k: fit_ratio(v) for k, v in traces.items() if v}
    converged = tails[-1][1] <= tol and all(q < 1.0 for q in ratios.values())
    R = dequantize(OperatorMatrix(r.grid, r.d, S, r.flags)).replace(label=f"neumann({r.label})")
    rep = NeumannReport(m_used, float(eps), tails, traces, ratios, converged, method)
    return R, rep


def core_residual(s: SymbolGrid, target: float | SymbolGrid = 1.0) -> float:
    mask = s.grid.core_mask()
    diff = s - target
    return diff.sup_norm(mask)


def symbol_inverse(a: SymbolGrid, *, tol: float = 1e-13, trace: bool = False,
                   residual_tol: float = 1e-5) -> SymbolGrid:
    """Two-sided # inverse b = C^{-1} R # a*, R = (1 - r)^{-1}, r = 1 - C^{-1} a* # a.

    C = 1.01 ||a^w||^2. Residuals ||b#a - 1|| and ||a#b - 1|| on the core box,
    the Neumann report and the measured condition number go into ``info``.
    """
    A = weyl_quantize(a)
    s = svdvals(A.matrix)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    if cond > COND_MAX:
        raise NonInvertibleError(f"a^w has condition number {cond:.3g} > {COND_MAX:g}")
    C = NORM_MARGIN * float(s[0]) ** 2
    AhA = OperatorMatrix(A.grid, A.d, A.matrix.conj().T @ A.matrix, A.flags)
    r = (1.0 - dequantize(AhA) / C).replace(label=f"1-C^-1 {a.label}*#{a.label}")
    R, rep = neumann_inverse(r, tol, trace=trace)
    Bw = weyl_quantize(R).matrix @ A.matrix.conj().T / C
    b = dequantize(OperatorMatrix(a.grid, a.d, Bw, A.flags))
    Bq = weyl_quantize(b)
    left = dequantize(Bq @ A)
    right = dequantize(A @ Bq)
    info = {"C": C, "condition": cond, "residual_left": core_residual(left),
            "residual_right": core_residual(right), "neumann": rep.to_dict(),
            "residual_tol": residual_tol}
    return b.replace(label=f"inv({a.label})", info=info)


def matrix_inverse_symbol(a: SymbolGrid) -> SymbolGrid:
    """Reference: dequantize((a^w)^{-1}) by dense LU."""
    A = weyl_quantize(a)
    return dequantize(OperatorMatrix(a.grid, a.d, np.linalg.inv(A.matrix), A.flags))


# --------------------------------------------------------------------------
# families

@dataclass
class SymbolFamily:
    """Symbols a_lambda on a uniform lambda grid; all members share one grid.

    ``derivative``, when given, maps (lambda, j) to the exact j-th lambda
    derivative as a SymbolGrid; otherwise derivatives are finite differences.
    """

    lambdas: np.ndarray
    members: list
    N: int = 1
    derivative: Callable | None = None
    label: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if len(self.lambdas) != len(self.members):
            raise ValueError("one member per lambda sample is required")
        if len(self.lambdas) > 1:
            st = np.diff(self.lambdas)
            if np.any(st <= 0) or np.ptp(st) > 1e-9 * abs(st[0]):
                raise ValueError("lambda samples must be strictly increasing and uniform")
        g0 = self.members[0].grid
        d0 = self.members[0].d
        if any(m.grid != g0 or m.d != d0 for m in self.members):
            raise ValueError("family members must share one grid and fiber dimension")

    @property
    def h(self) -> float:
        return float(self.lambdas[1] - self.lambdas[0]) if len(self.lambdas) > 1 else 0.0

    def __len__(self):
        return len(self.members)

    @classmethod
    def from_function(cls, f: Callable[[float], SymbolGrid], lo: float, hi: float, count: int,
                      N: int = 1, label: str = "") -> "SymbolFamily":
        lam = np.linspace(lo, hi, count)
        return cls(lam, [f(float(t)) for t in lam], N, label=label)


def family_inverse(family: SymbolFamily, **kw) -> SymbolFamily:
    """Memberwise symbol_inverse with a continuity diagnostic.

    info["continuity_ratio"] lists ||b_{k+1} - b_k|| / ||a_{k+1} - a_k|| per step
    (None where the members coincide).
    """
    inv = []
    for i, (lam, a) in enumerate(zip(family.lambdas, family.members)):
        try:
            inv.append(symbol_inverse(a, **kw))
        except WeylCalcError as exc:
            raise type(exc)(f"member {i} (lambda={lam:g}): {exc}") from exc
    ratios = []
    for i in range(len(inv) - 1):
        da = (family.members[i + 1] - family.members[i]).sup_norm()
        db = (inv[i + 1] - inv[i]).sup_norm()
        ratios.append(db / da if da > 1e-14 else None)
    out = SymbolFamily(family.lambdas, inv, family.N, label=f"inv({family.label})")
    out.info["continuity_ratio"] = ratios
    out.info["residuals"] = [max(b.info["residual_left"], b.info["residual_right"]) for b in inv]
    return out


_FD = {1: (np.array([-0.5, 0.0, 0.5]), 1),
       2: (np.array([1.0, -2.0, 1.0]), 1),
       3: (np.array([-0.5, 1.0, 0.0, -1.0, 0.5]), 2)}


def _fd(mats: Sequence[np.ndarray], i: int, q: int, stride: int, h: float) -> np.ndarray:
    """Central q-th difference at index i with spacing stride*h."""
    w, half = _FD[q]
    out = np.zeros_like(mats[i])
    for s, c in zip(range(-half, half + 1), w):
        if c:
            out = out + c * mats[i + s * stride]
    return out / (stride * h) ** q


def derivative_via_identity(B: np.ndarray, Aders: Sequence[np.ndarray], q: int) -> list:
    """Operator-side derivatives of B = A^{-1} up to order q.

    Aders[j] is the j-th lambda derivative of A (Aders[0] unused). Uses the
    Leibniz expansion of A B = I, which gives
    B^{(p)} = -B sum_{j=1}^{p} C(p, j) A^{(j)} B^{(p-j)}; for p = 1 this is
    the identity b' = -b # a' # b.
    """
    out = [B]
    for p in range(1, q + 1):
        acc = np.zeros_like(B)
        for j in range(1, p + 1):
            acc = acc + math.comb(p, j) * (Aders[j] @ out[p - j])
        out.append(-B @ acc)
    return out


@dataclass
class RegularityReport:
    h: float
    orders: dict

    def to_dict(self) -> dict:
        return {"h": self.h, "orders": {str(k): v for k, v in self.orders.items()}}


def regularity_check(family: SymbolFamily, inverses: SymbolFamily, N: int = 1) -> RegularityReport:
    """Compare finite differences of b_lambda with the derivative identity.

    For each order q <= N, errors are measured at step h and 2h on the
    lambda samples where both stencils fit; the Richardson slope is
    log2(err(2h) / err(h)).
    """
    if not 1 <= N <= 3:
        raise ValueError("regularity order must lie in 1..3")
    K = len(family)
    if K < 2 * N + 3:
        raise ValueError(f"need at least {2 * N + 3} lambda samples for order {N}, got {K}")
    if len(inverses) != K:
        raise ValueError("family and inverses differ in length")
    h = family.h
    grid = family.members[0].grid
    d = family.members[0].d
    mask = grid.core_mask()
    A = [weyl_quantize(a).matrix for a in family.members]
    B = [weyl_quantize(b).matrix for b in inverses.members]
    orders = {}
    for q in range(1, N + 1):
        reach = 2 * _FD[q][1]     # stencil half-width at stride 2
        idx = list(range(reach, K - reach))
        errs = {}
        for stride in (1, 2):
            worst = 0.0
            for i in idx:
                if family.derivative is not None:
                    Ad = [None] + [weyl_quantize(family.derivative(family.lambdas[i], j)).matrix
                                   for j in range(1, q + 1)]
                else:
                    Ad = [None] + [_fd(A, i, j, stride, h) for j in range(1, q + 1)]
                ident = derivative_via_identity(B[i], Ad, q)[q]
                fd = _fd(B, i, q, stride, h)
                diff = dequantize(OperatorMatrix(grid, d, fd - ident))
                worst = max(worst, diff.sup_norm(mask))
            errs[stride] = worst
        e1, e2 = errs[1], errs[2]
        slope = math.log2(e2 / e1) if e1 > 0 and e2 > 0 else math.nan
        orders[q] = {"error_h": e1, "error_2h": e2, "slope": slope, "lambdas": len(idx)}
    return RegularityReport(h, orders)
