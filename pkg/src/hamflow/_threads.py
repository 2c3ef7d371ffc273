"""Thread-cap plumbing applied at import time.

BLAS pools size themselves from environment variables read when numpy
first loads, so this module must be imported before anything numeric.
The package __init__ imports it first for exactly that reason.
"""

import os

_POOL_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def apply_thread_cap(environ=os.environ):
    """Propagate HAMFLOW_THREADS to the BLAS pool variables.

    Existing pool settings win; a malformed value is left for the CLI to
    reject, since raising during import would break plain library use.
    Returns the cap, or None when unset or malformed.
    """
    value = environ.get("HAMFLOW_THREADS")
    if value is None:
        return None
    try:
        count = int(value)
    except ValueError:
        return None
    if count < 1:
        return None
    for var in _POOL_VARS:
        environ.setdefault(var, str(count))
    return count


apply_thread_cap()
