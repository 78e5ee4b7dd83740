"""Test-session setup: pin BLAS to one thread before numpy loads.

Two-thread GEMM is measurably slower than single-threaded on the small
matrices this package uses, and single-threaded kernels keep results
bit-reproducible regardless of the host's thread count.
"""

import os
import sys

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

sys.path.insert(0, os.path.dirname(__file__))
