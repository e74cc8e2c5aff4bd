"""Kernel backend selection.

Two interchangeable kernel modules exist: the compiled extension
``_kernels`` and its pure-Python twin ``_kernels_py``.  By default the
compiled one is used when importable and the pure one otherwise.  The
environment variable ``REPLICA_ES_BACKEND`` forces the choice:

  REPLICA_ES_BACKEND=c        require the compiled extension (ImportError if absent)
  REPLICA_ES_BACKEND=python   force the pure-Python twin
  REPLICA_ES_BACKEND=auto     default behavior

The selected module is exported as :data:`kernels`; its ``BACKEND_NAME``
("c" or "python") is re-exported as :data:`backend_name`.
"""

import os

from . import _kernels_py

__all__ = ["kernels", "backend_name"]

_choice = os.environ.get("REPLICA_ES_BACKEND", "auto").strip().lower()

if _choice in ("", "auto"):
    try:
        from . import _kernels as _selected
    except ImportError:
        _selected = _kernels_py
elif _choice in ("c", "compiled"):
    from . import _kernels as _selected
elif _choice in ("python", "pure"):
    _selected = _kernels_py
else:
    raise ValueError(
        f"REPLICA_ES_BACKEND={_choice!r} is not recognized; "
        "use 'c', 'python', or 'auto'"
    )

kernels = _selected
backend_name = _selected.BACKEND_NAME
