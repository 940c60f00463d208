"""Central finite-difference oracle for the reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from dsvpr.errors import EvaluationError, ParameterError
from dsvpr.numerics.tensor import Tensor, no_grad


@dataclass
class GradReport:
    max_relative_error: float
    worst_parameter: str | None
    per_parameter_errors: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def ok(self) -> bool:
        return self.max_relative_error < self.tol


def _scalar(f: Callable[[], Tensor]) -> float:
    value = f()
    out = float(np.asarray(value.data if isinstance(value, Tensor) else value).reshape(()))
    if not np.isfinite(out):
        raise EvaluationError(f"function under gradient check returned {out}")
    return out


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradReport:
    """Compare tape gradients of scalar ``f()`` against central differences.

    Every coordinate of every tensor in ``params`` is perturbed by +/-h in
    place. Per coordinate the error is |a - n| / max(|a|, |n|, 1e-8); the
    report keeps the per-tensor maximum.

    ``max_coords`` caps the coordinates probed per tensor: larger tensors
    are checked on a seeded random sample that always contains the
    coordinate with the largest analytic gradient.
    """
    if not h > 0:
        raise ParameterError(f"step h must be positive, got {h}")
    if any(p.dtype == np.float64 for p in params.values()) and not 1e-6 <= h <= 1e-3:
        raise ParameterError(f"step h={h} outside [1e-6, 1e-3] for 64-bit checks")

    for p in params.values():
        p.requires_grad = True
        p.zero_grad()
    out = f()
    _scalar(lambda: out)
    out.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    with no_grad():
        for name, p in params.items():
            if not p.data.flags.c_contiguous or not p.data.flags.writeable:
                p.data = np.array(p.data, order="C")
            flat = p.data.reshape(-1)
            a_full = analytic[name].reshape(-1).astype(np.float64)
            if max_coords is not None and flat.size > max_coords:
                top = int(np.argmax(np.abs(a_full)))
                rest = rng.choice(flat.size, size=max_coords - 1, replace=False)
                coords = np.unique(np.append(rest, top))
            else:
                coords = np.arange(flat.size)
            numeric = np.empty(coords.size, dtype=np.float64)
            for j, i in enumerate(coords):
                orig = flat[i]
                flat[i] = orig + h
                fp = _scalar(f)
                flat[i] = orig - h
                fm = _scalar(f)
                flat[i] = orig
                numeric[j] = (fp - fm) / (2.0 * h)
            a = a_full[coords]
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
            errors[name] = float(np.max(np.abs(a - numeric) / denom)) if coords.size else 0.0

    worst = max(errors, key=errors.get) if errors else None
    return GradReport(
        max_relative_error=errors[worst] if worst is not None else 0.0,
        worst_parameter=worst,
        per_parameter_errors=errors,
        tol=tol,
    )
