"""
Path: engine/app/services/ode_integrator.py
Purpose: Fixed-step classical Runge-Kutta integrator shared by every deterministic flow
Logic:
  - Grid of full steps plus one shortened final step so the grid ends exactly at the horizon
  - State is a short list of floats; the right-hand side is a plain Python callable
  - Components below `floor` by more than UNDERSHOOT_TOL raise, smaller undershoots are clamped
  - Optional silent clip interval for flows that live in [0, 1]
  - Non-finite values raise NumericError with the time of the failing step
"""

import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, NumericError

DEFAULT_STEP = 1e-3
UNDERSHOOT_TOL = 1e-12

RHS = Callable[[Sequence[float]], Sequence[float]]


def time_grid(horizon: float, step: float) -> List[float]:
    """Times 0, step, 2*step, ... with a final partial step landing on horizon."""
    if not (step > 0) or not math.isfinite(step):
        raise DomainError(f"Invalid step: {step}. Must be > 0.")
    if not (horizon >= 0) or not math.isfinite(horizon):
        raise DomainError(f"Invalid horizon: {horizon}. Must be >= 0.")
    n_full = int(math.floor(horizon / step + 1e-9))
    times = [i * step for i in range(n_full + 1)]
    if horizon - times[-1] > 1e-9 * step:
        times.append(horizon)
    else:
        times[-1] = horizon if n_full > 0 else 0.0
    return times


def integrate(
    rhs: RHS,
    y0: Sequence[float],
    horizon: float,
    step: float = DEFAULT_STEP,
    floor: Optional[float] = None,
    clip: Optional[Tuple[float, float]] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Integrate dy/dt = rhs(y) with classical RK4.

    Args:
        rhs: Right-hand side, maps a state list to a sequence of derivatives
        y0: Initial state
        horizon: Final time (>= 0)
        step: Nominal step (> 0)
        floor: Structural lower bound; undershoot beyond UNDERSHOOT_TOL raises
        clip: (lo, hi) interval the state is silently clipped to after each step

    Returns:
        (times, values, max_undershoot) with values of shape (n, len(y0))
    """
    times = time_grid(horizon, step)
    y = [float(v) for v in y0]
    dim = len(y)
    values = np.empty((len(times), dim))
    values[0] = y
    max_undershoot = 0.0

    for i in range(1, len(times)):
        t0 = times[i - 1]
        h = times[i] - t0
        k1 = rhs(y)
        k2 = rhs([a + 0.5 * h * b for a, b in zip(y, k1)])
        k3 = rhs([a + 0.5 * h * b for a, b in zip(y, k2)])
        k4 = rhs([a + h * b for a, b in zip(y, k3)])
        y = [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]

        if not all(math.isfinite(v) for v in y):
            raise NumericError("Non-finite flow value", time=times[i])
        if floor is not None:
            for j in range(dim):
                gap = floor - y[j]
                if gap > 0:
                    if gap > UNDERSHOOT_TOL:
                        raise NumericError(f"Flow component {j + 1} fell below {floor} by {gap:.3g}", time=times[i])
                    max_undershoot = max(max_undershoot, gap)
                    y[j] = floor
        if clip is not None:
            lo, hi = clip
            y = [min(max(v, lo), hi) for v in y]
        values[i] = y

    times_arr = np.asarray(times)
    times_arr.flags.writeable = False
    values.flags.writeable = False
    return times_arr, values, max_undershoot
