"""Phase-space grids, sampled symbols and the binary container format."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import GridMismatchError, SymbolError

MAGIC = b"WEYLCALC"
CONTAINER_VERSION = 1


def _is_pow2(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform rectangular sampling of [-L_x, L_x) x [-L_xi, L_xi).

    Nodes are x_j = -L_x + j dx (j < N_x) and xi_l = -L_xi + l dxi, so that
    for even N the origin is a node. A grid is Fourier-compatible (usable
    for quantization) when N_xi = N_x and dxi = 2 pi / (N_x dx); use
    :meth:`fourier` to build one.
    """

    L_x: float
    N_x: int
    L_xi: float
    N_xi: int

    def __post_init__(self):
        if not (_is_pow2(self.N_x) and _is_pow2(self.N_xi)):
            raise ValueError(f"grid sizes must be powers of two, got {self.N_x}, {self.N_xi}")
        if not (self.L_x > 0 and self.L_xi > 0):
            raise ValueError("grid extents must be positive")
        object.__setattr__(self, "L_x", float(self.L_x))
        object.__setattr__(self, "L_xi", float(self.L_xi))
        object.__setattr__(self, "N_x", int(self.N_x))
        object.__setattr__(self, "N_xi", int(self.N_xi))

    @classmethod
    def fourier(cls, L: float, N: int) -> "PhaseGrid":
        """Fourier-conjugate grid: dxi = pi / L, xi-extent N pi / (2 L)."""
        return cls(L, N, N * np.pi / (2.0 * L), N)

    @classmethod
    def square(cls, L: float, N: int) -> "PhaseGrid":
        return cls(L, N, L, N)

    @property
    def n(self) -> int:
        return 1

    @property
    def dx(self) -> float:
        return 2.0 * self.L_x / self.N_x

    @property
    def dxi(self) -> float:
        return 2.0 * self.L_xi / self.N_xi

    @property
    def x(self) -> np.ndarray:
        return -self.L_x + self.dx * np.arange(self.N_x)

    @property
    def xi(self) -> np.ndarray:
        return -self.L_xi + self.dxi * np.arange(self.N_xi)

    @property
    def cell(self) -> float:
        return self.dx * self.dxi

    @property
    def fourier_compatible(self) -> bool:
        return self.N_x == self.N_xi and abs(self.dxi * self.N_x * self.dx - 2 * np.pi) < 1e-9

    def mesh(self):
        return np.meshgrid(self.x, self.xi, indexing="ij")

    def points(self) -> np.ndarray:
        X, XI = self.mesh()
        return np.stack([X, XI], -1)

    def interior_mask(self, margin: float = 0.1) -> np.ndarray:
        """Nodes at distance >= margin * extent from the box boundary."""
        X, XI = self.mesh()
        return (np.abs(X) <= (1 - margin) * self.L_x) & (np.abs(XI) <= (1 - margin) * self.L_xi)

    def core_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Nodes in the central box |x| <= f L_x, |xi| <= f L_xi."""
        X, XI = self.mesh()
        return (np.abs(X) <= fraction * self.L_x) & (np.abs(XI) <= fraction * self.L_xi)

    def to_dict(self) -> dict:
        return {"L_x": self.L_x, "N_x": self.N_x, "L_xi": self.L_xi, "N_xi": self.N_xi}


@dataclass(frozen=True)
class SymbolGrid:
    """Complex d x d matrix-valued samples on a PhaseGrid.

    ``values`` has shape (N_x, N_xi, d, d) and is read-only. ``flags`` marks
    processing facts such as "windowed"; ``info`` carries diagnostics
    attached by the producing operation.
    """

    grid: PhaseGrid
    values: np.ndarray
    weight_label: str = ""
    metric_label: str = ""
    label: str = ""
    flags: frozenset = frozenset()
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        g = self.grid
        if v.ndim == 2:
            v = v[..., None, None]
        if v.ndim != 4 or v.shape[:2] != (g.N_x, g.N_xi) or v.shape[2] != v.shape[3]:
            raise SymbolError(f"values of shape {v.shape} do not match grid {g.N_x}x{g.N_xi}")
        if not np.all(np.isfinite(v)):
            raise SymbolError("symbol has non-finite samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "flags", frozenset(self.flags))
        object.__setattr__(self, "info", MappingProxyType(dict(self.info)))

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def scalar(self) -> np.ndarray:
        if self.d != 1:
            raise SymbolError("scalar view requested for a matrix-valued symbol")
        return self.values[..., 0, 0]

    def replace(self, values=None, **changes) -> "SymbolGrid":
        kw = dict(grid=self.grid, values=self.values if values is None else values,
                  weight_label=self.weight_label, metric_label=self.metric_label,
                  label=self.label, flags=self.flags, info={})
        kw.update(changes)
        return SymbolGrid(**kw)

    def adjoint(self) -> "SymbolGrid":
        """Pointwise conjugate transpose a*."""
        return self.replace(np.conj(np.swapaxes(self.values, -1, -2)), label=f"({self.label})*")

    def _check(self, other):
        if other.grid != self.grid or other.d != self.d:
            raise GridMismatchError("symbols live on different grids or fibers")

    def __add__(self, other):
        if isinstance(other, SymbolGrid):
            self._check(other)
            return self.replace(self.values + other.values, flags=self.flags | other.flags)
        return self.replace(self.values + other * np.eye(self.d))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SymbolGrid):
            self._check(other)
            return self.replace(self.values - other.values, flags=self.flags | other.flags)
        return self.replace(self.values - other * np.eye(self.d))

    def __rsub__(self, other):
        return self.replace(other * np.eye(self.d) - self.values)

    def __mul__(self, c):
        if isinstance(c, SymbolGrid):
            raise TypeError("use pointwise() or moyal() for products of symbols")
        return self.replace(self.values * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self.replace(self.values / c)

    def __neg__(self):
        return self.replace(-self.values)

    def pointwise(self, other: "SymbolGrid") -> "SymbolGrid":
        self._check(other)
        return self.replace(self.values @ other.values)

    def sup_norm(self, mask=None) -> float:
        """max over nodes of the spectral norm of the fiber matrix."""
        v = self.values if mask is None else self.values[mask]
        if self.d == 1:
            return float(np.max(np.abs(v))) if v.size else 0.0
        return float(np.max(np.linalg.norm(v, ord=2, axis=(-2, -1)))) if v.size else 0.0


def identity_symbol(grid: PhaseGrid, d: int = 1) -> SymbolGrid:
    v = np.broadcast_to(np.eye(d, dtype=complex), (grid.N_x, grid.N_xi, d, d))
    return SymbolGrid(grid, v, label="one")


# --------------------------------------------------------------------------
# binary container: 16-byte header, length-prefixed JSON, complex64 payload

def write_container(path, array: np.ndarray, meta: dict) -> None:
    arr = np.ascontiguousarray(np.asarray(array), dtype="<c8")
    meta = dict(meta)
    meta["shape"] = list(arr.shape)
    meta["dtype"] = "complex64-le"
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", CONTAINER_VERSION, 0))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(arr.tobytes(order="C"))


def read_container(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MAGIC:
            raise ValueError(f"{path}: not a weylcalc container")
        version, _ = struct.unpack("<II", head[8:])
        if version != CONTAINER_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        (n,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(n).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<c8")
    return data.reshape(meta["shape"]), meta


def save_symbol(path, a: SymbolGrid) -> None:
    write_container(path, a.values, {"kind": "symbol", "grid": a.grid.to_dict(), "d": a.d,
                                     "label": a.label, "weight_label": a.weight_label,
                                     "metric_label": a.metric_label, "flags": sorted(a.flags)})


def load_symbol(path) -> SymbolGrid:
    data, meta = read_container(path)
    if meta.get("kind") != "symbol":
        raise ValueError(f"{path}: container does not hold a symbol")
    g = PhaseGrid(**meta["grid"])
    return SymbolGrid(g, data.astype(complex), meta.get("weight_label", ""),
                      meta.get("metric_label", ""), meta.get("label", ""),
                      frozenset(meta.get("flags", [])))
