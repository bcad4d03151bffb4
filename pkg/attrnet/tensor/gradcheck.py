"""Central finite differences, the oracle every analytic gradient is checked against."""
from __future__ import annotations

from collections.abc import Callable, Iterable

import numpy as np

from attrnet.errors import NumericError
from attrnet.tensor.tensor import Tensor, float64_mode


def finite_difference_gradient(
    f: Callable[[Tensor], Tensor | float],
    x: Tensor,
    step: float = 1e-3,
    indices: Iterable[tuple[int, ...]] | None = None,
) -> Tensor:
    """Estimate the gradient of the scalar function `f` at `x` by central differences.

    Each coordinate i gets `(f(x + h e_i) - f(x - h e_i)) / (2h)`. Evaluation happens in 64-bit mode on a
    float64 copy of `x`; `x` itself is left untouched.

    Args:
        f (Callable[[Tensor], Tensor | float]): The function; must return a scalar.
        x (Tensor): The point to differentiate at.
        step (float, optional): The step `h`. Defaults to 1e-3.
        indices (Iterable[tuple[int, ...]] | None, optional): Only estimate these coordinates, leaving the rest
            zero. Defaults to every coordinate.

    Raises:
        NumericError: If any evaluation of `f` is NaN or infinite.

    Returns:
        Tensor: A float64 tensor shaped like `x`.
    """
    base = np.array(x.data, dtype=np.float64)
    gradient = np.zeros_like(base)
    coordinates = indices if indices is not None else np.ndindex(base.shape)

    def evaluate(point: np.ndarray) -> float:
        with float64_mode():
            value = f(Tensor(point, dtype=np.float64))
        result = value.item() if isinstance(value, Tensor) else float(value)
        if not np.isfinite(result):
            raise NumericError(f"function evaluated to {result} during finite differencing")
        return result

    for index in coordinates:
        original = base[index]
        base[index] = original + step
        upper = evaluate(base.copy())
        base[index] = original - step
        lower = evaluate(base.copy())
        base[index] = original
        gradient[index] = (upper - lower) / (2 * step)
    return Tensor(gradient, dtype=np.float64)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Return `max|a - n| / max(max|a|, max|n|)`, or 0 when both are exactly zero."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)))
    difference = float(np.max(np.abs(analytic - numeric), initial=0.0))
    if scale == 0:
        return difference
    return difference / scale
