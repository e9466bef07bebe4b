"""Numerical kernel dispatch: compiled extension if built, numpy otherwise.

The active backend is chosen once at import. ``use_backend`` exists for the
backend benchmark and the equivalence tests; everything else should go
through the module-level functions re-exported here.
"""

from . import pyref as _pyref

try:
    from . import _core as _compiled
except ImportError:
    _compiled = None

ACT_LINEAR = _pyref.ACT_LINEAR
ACT_TANH = _pyref.ACT_TANH
ACT_GELU = _pyref.ACT_GELU

ACTIVATION_KINDS = {"linear": ACT_LINEAR, "tanh": ACT_TANH, "gelu": ACT_GELU}

_active = _compiled if _compiled is not None else _pyref

_EXPORTED = (
    "dense_fwd",
    "dense_fwd_batch",
    "dense_bwd",
    "dense_bwd_batch",
    "act_fwd",
    "act_bwd",
    "decode_combine",
)


def available_backends() -> tuple[str, ...]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return tuple(names)


def get_backend(name: str):
    if name == "python":
        return _pyref
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel extension is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def active_backend() -> str:
    return _active.BACKEND_NAME


def use_backend(name: str) -> None:
    """Switch the active backend (testing/benchmark hook, not config)."""
    global _active
    _active = get_backend(name)
    for fn in _EXPORTED:
        globals()[fn] = getattr(_active, fn)


for _fn in _EXPORTED:
    globals()[_fn] = getattr(_active, _fn)
del _fn
