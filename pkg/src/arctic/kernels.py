"""Selects the compiled kernels, falling back to pure Python.

Set ``ARCTIC_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("ARCTIC_PURE_PYTHON", "") not in ("", "0"):
    from . import _flipcore_py as _impl
    from . import _solvercore_py as _solver
    COMPILED = False
else:
    try:
        from . import _flipcore as _impl
        from . import _solvercore as _solver
        COMPILED = True
    except ImportError:
        from . import _flipcore_py as _impl
        from . import _solvercore_py as _solver
        COMPILED = False

apply_moves = _impl.apply_moves
apply_draws = _impl.apply_draws
coupled_draws = _impl.coupled_draws
batch_draws = _impl.batch_draws
sweep_words = _impl.sweep_words
relax_sweeps = _solver.relax_sweeps
local_gradient = _solver.local_gradient
BACKEND = "cython" if COMPILED else "python"
