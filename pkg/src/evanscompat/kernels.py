"""Select the compiled orbit kernel when built, else the numpy fallback."""
import os

if os.environ.get("EVANSCOMPAT_PURE_PYTHON"):
    from ._kernels_py import orbit_representatives
    BACKEND = "python"
else:
    try:
        from ._kernels import orbit_representatives  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import orbit_representatives
        BACKEND = "python"

__all__ = ["orbit_representatives", "BACKEND"]
