from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass
class GradCheckFailure:
    input_index: int
    element: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    passed: bool
    checked: int
    max_rel_error: float
    first_failure: Optional[GradCheckFailure] = None

    def __str__(self):
        if self.passed:
            return f"grad check passed on {self.checked} elements (max rel error {self.max_rel_error:.3e})"
        f = self.first_failure
        return (f"grad check failed at input {f.input_index} element {f.element}: "
                f"analytic {f.analytic:.10e} vs numeric {f.numeric:.10e} (rel error {f.rel_error:.3e})")


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def grad_check(loss_and_grads: Callable[[], tuple], inputs: Sequence[np.ndarray],
               rel_tol: float = 1e-4, abs_tol: float = 0.0) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grads()`` evaluates the scalar loss at the current contents
    of ``inputs`` and returns ``(loss, grads)`` with one gradient array per
    input. Inputs are perturbed in place (step ``1e-6 * max(1, |x|)``) and
    restored. An element passes when its relative error is within
    ``rel_tol``. A positive ``abs_tol`` also passes elements whose absolute
    error is within it, for checks over whole models where some true
    gradients sit at the level of round-off.
    """
    _, analytic = loss_and_grads()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    checked = 0
    worst = 0.0
    for index, x in enumerate(inputs):
        for element in np.ndindex(x.shape):
            original = x[element]
            h = 1e-6 * max(1.0, abs(original))
            x[element] = original + h
            plus, _ = loss_and_grads()
            x[element] = original - h
            minus, _ = loss_and_grads()
            x[element] = original
            numeric = (plus - minus) / (2.0 * h)
            a = float(analytic[index][element])
            err = relative_error(a, numeric)
            checked += 1
            if abs_tol > 0.0 and abs(a - numeric) <= abs_tol:
                continue
            worst = max(worst, err)
            if err > rel_tol:
                return GradCheckReport(False, checked, worst,
                                       GradCheckFailure(index, element, a, numeric, err))
    return GradCheckReport(True, checked, worst)
