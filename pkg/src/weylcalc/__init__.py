"""Weyl-Hörmander calculus on phase-space grids: metrics, symbols, quantization,
inversion and Fredholm diagnostics."""
__version__ = "0.1.0"

from .errors import WeylCalcError  # noqa: E402
from .grid import PhaseGrid, SymbolGrid  # noqa: E402
from .metric import get_metric, get_weight  # noqa: E402
from .symbols import sample  # noqa: E402
from .quantize import weyl_quantize, dequantize, moyal  # noqa: E402

__all__ = ["__version__", "WeylCalcError", "PhaseGrid", "SymbolGrid", "get_metric",
           "get_weight", "sample", "weyl_quantize", "dequantize", "moyal"]
