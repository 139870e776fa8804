"""Pick the compiled core when it imports, else the numpy fallback.

Set SCHOENBERG_BACKEND=python to force the fallback.
"""
import os

from . import _fallback

NAME = "python"
core = _fallback

if os.environ.get("SCHOENBERG_BACKEND", "").lower() != "python":
    try:
        from . import _core as core  # noqa: F811
        NAME = "cython"
    except ImportError:
        core = _fallback
