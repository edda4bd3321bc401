"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import no_grad


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict = field(default_factory=dict)
    entries_checked: dict = field(default_factory=dict)

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return all(err < self.tolerance for err in self.max_rel_error.values())

    @property
    def failures(self):
        return {k: v for k, v in self.max_rel_error.items() if not v < self.tolerance}

    def __str__(self):
        lines = [f"gradient check (tol {self.tolerance:g}): "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for name, err in self.max_rel_error.items():
            lines.append(f"  {name:<28s} n={self.entries_checked[name]:<5d} "
                         f"max rel err {err:.3e}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)``; the floor absorbs near-zero gradients."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def finite_difference_check(loss_fn, params, tolerance=1e-6, step=1e-5,
                            max_entries=None, rng=None, floor=1e-6):
    """Compare ``backward`` gradients of ``loss_fn()`` with central differences.

    ``params`` maps group names to leaf tensors. ``loss_fn`` must be a
    deterministic function of their current values returning a scalar
    ``Tensor`` (use eval mode for batch norm, or accept that train mode
    recomputes batch statistics on every call, which is still deterministic).
    With ``max_entries`` only that many randomly chosen entries per group are
    perturbed.
    """
    params = dict(params)
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {name: np.array(p.grad, copy=True) if p.grad is not None
                else np.zeros_like(p.data) for name, p in params.items()}

    rng = np.random.default_rng(0) if rng is None else rng
    report = GradCheckReport(tolerance)
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            numeric = np.empty(idx.size)
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2.0 * step)
            err = relative_error(analytic[name].reshape(-1)[idx], numeric, floor)
            report.max_rel_error[name] = float(err.max()) if err.size else 0.0
            report.entries_checked[name] = int(idx.size)
    for p in params.values():
        p.zero_grad()
    return report
