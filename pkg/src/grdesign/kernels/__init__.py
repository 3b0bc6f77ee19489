"""Grid kernels with a compiled fast path.

The Cython extension is used when it was built; otherwise the pure-Python
module is used. Set ``GRDESIGN_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("GRDESIGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if compiled_backend is not None else "python"

bfs = backend.bfs
worstcase_wcd = backend.worstcase_wcd
shortest_path_actions = backend.shortest_path_actions
plan_policy = backend.plan_policy

__all__ = [
    "BACKEND_NAME",
    "backend",
    "bfs",
    "compiled_backend",
    "plan_policy",
    "python_backend",
    "shortest_path_actions",
    "worstcase_wcd",
]
