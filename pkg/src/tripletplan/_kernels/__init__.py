"""Hot-kernel backend selection.

Imports the compiled extension when present, otherwise falls back to the
numpy reference implementations. Set TRIPLETPLAN_PURE=1 to force the pure
path (useful for parity debugging and benchmarking).
"""

import os

from . import pure

if os.environ.get("TRIPLETPLAN_PURE"):
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
gae_scan = _impl.gae_scan
adam_step = _impl.adam_step
ap_weighted = _impl.ap_weighted


def available_backends():
    """Importable backends by name; 'pure' is always present."""
    backends = {"pure": pure}
    try:
        from . import _fast

        backends["compiled"] = _fast
    except ImportError:
        pass
    return backends
