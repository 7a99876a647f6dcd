"""Backend selection for the integration kernels.

The compiled extension ``vnc._kernels`` is used when it imports; otherwise,
or when the environment variable ``VNC_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the NumPy implementation in ``vnc._kernels_py`` is
used.  Both expose the same ``SystemKernel`` class and status codes.
"""

from __future__ import annotations

import os

import numpy as np

from vnc import _kernels_py
from vnc import exprlang
from vnc.exprlang import Num

OK, DOMAIN, NONFINITE, SINGULAR, NOT_PD = range(5)
FORMULATIONS = {"uncontrolled": 0, "closedloop": 1, "constrained": 2, "nonholonomic": 3}
STATUS_NAMES = {
    OK: "ok",
    DOMAIN: "domain error",
    NONFINITE: "non-finite state",
    SINGULAR: "singular control matrix",
    NOT_PD: "metric not positive definite",
}


def _load_compiled():
    if os.environ.get("VNC_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from vnc import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from vnc import _kernels  # noqa: F401

        out.insert(0, "cython")
    except ImportError:
        pass
    return out


def _kernel_class(backend: str | None):
    backend = backend or BACKEND
    if backend == "python":
        return _kernels_py.SystemKernel
    if backend == "cython":
        from vnc import _kernels

        return _kernels.SystemKernel
    raise ValueError(f"unknown backend {backend!r}")


def compile_system(system, backend: str | None = None):
    """Translate a :class:`~vnc.systems.SystemSpec` into a kernel object."""
    n, m, k = system.n, system.m, system.k
    exprs = [e for row in system.metric.entries for e in row]
    exprs.append(system.potential.expr)
    exprs += [e for row in system.constraints.forms for e in row]
    exprs += [e for row in system.inputs.forms for e in row]
    force = system.drift_force.components if not system.drift_force.is_zero else tuple(Num(0.0) for _ in range(n))
    exprs += list(force)
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    starts = [0]
    depth = 1
    for e in exprs:
        o, a, d = exprlang.compile_program(e, consts)
        ops += o
        args += a
        starts.append(len(ops))
        depth = max(depth, d)
    if not consts:
        consts.append(0.0)
    cls = _kernel_class(backend)
    return cls(
        n, m, k,
        np.asarray(ops, dtype=np.int32),
        np.asarray(args, dtype=np.int32),
        np.asarray(consts, dtype=np.float64),
        np.asarray(starts, dtype=np.int32),
        depth,
        not system.drift_force.is_zero,
        not system.potential.is_zero,
    )
