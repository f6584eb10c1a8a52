"""tripletplan: imitation-vs-reinforcement benchmark for action-triplet planning."""

import os as _os

# Single-threaded BLAS: the workloads are many small matmuls where thread
# fan-out costs more than it buys, and bit-reproducible runs are part of
# the contract. Effective only if set before numpy initializes; explicit
# user settings win.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Which hot-kernel backend this process selected ('compiled' or 'pure')."""
    from . import _kernels

    return _kernels.BACKEND
