"""Test-session setup.

The kernels spend their time in many small-to-medium LAPACK factorizations,
where OpenBLAS thread synchronization costs far more than it buys (order 10x
on small VMs). Pin BLAS to one thread for the suite; parallelism, where used,
happens across independent runs instead.
"""

import os
import sys

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

if "numpy" in sys.modules:
    # numpy got imported before this conftest; limit the pools at runtime
    try:
        import threadpoolctl

        _limiter = threadpoolctl.threadpool_limits(1, "blas")
    except Exception:  # pragma: no cover - best effort
        pass
