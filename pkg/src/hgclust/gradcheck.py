"""Central-difference verification of reverse-mode gradients.

``grad_check`` perturbs every coordinate of every parameter, compares the
finite-difference slope against the taped gradient and reports the worst
coordinate. Coordinates sitting exactly on a kink (one-sided slopes
disagree, e.g. ReLU at 0) are flagged and excluded from pass/fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import Tape, Tensor, no_grad, record_onto
from .errors import NumericsError

# One-sided slopes that differ by more than this (relative) mark a kink.
_KINK_GAP = 0.1


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int
    kinks: list = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        loc = f"{self.worst_param}{list(self.worst_index)}" if self.worst_param else "-"
        return (f"{status}: max relative error {self.max_rel_error:.3e} at {loc} "
                f"({self.n_checked} coordinates, {len(self.kinks)} kinks excluded, "
                f"tol {self.tol:g})")


def _eval_scalar(loss_fn: Callable[[], Tensor]) -> float:
    with no_grad():
        out = loss_fn()
    return out.item()


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
               eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode and central-difference gradients of ``loss_fn``.

    ``loss_fn`` must be deterministic and depend on ``params`` only through
    their current ``data`` (it is re-invoked after in-place perturbations).
    """
    f0 = _eval_scalar(loss_fn)
    if _eval_scalar(loss_fn) != f0:
        raise NumericsError("grad_check: loss_fn is not deterministic")

    for p in params.values():
        p.zero_grad()
    tape = Tape()
    with record_onto(tape):
        loss = loss_fn()
    tape.backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    for p in params.values():
        p.zero_grad()

    worst = 0.0
    worst_param = ""
    worst_index: tuple = ()
    n_checked = 0
    kinks: list[tuple[str, tuple]] = []

    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = _eval_scalar(loss_fn)
            flat[i] = orig - eps
            f_minus = _eval_scalar(loss_fn)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            an = a_flat[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1.0)
            idx = np.unravel_index(i, p.data.shape)
            if rel >= tol:
                # Possible kink: compare the two one-sided slopes.
                d_fwd = (f_plus - f0) / eps
                d_bwd = (f0 - f_minus) / eps
                gap = abs(d_fwd - d_bwd) / max(abs(d_fwd), abs(d_bwd), 1.0)
                if gap > _KINK_GAP:
                    kinks.append((name, idx))
                    continue
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_param = name
                worst_index = idx

    return GradCheckReport(max_rel_error=worst, worst_param=worst_param,
                           worst_index=worst_index, n_checked=n_checked,
                           kinks=kinks, tol=tol)
