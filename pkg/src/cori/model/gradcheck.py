"""Numerical gradient verification: analytic gradients vs central finite differences."""

from __future__ import annotations

import random
from typing import Callable, Optional, Sequence

import torch


class NonFiniteLossError(ValueError):
    pass


def grad_check(loss_fn: Callable[[], torch.Tensor],
               params: Sequence[torch.Tensor], eps: float = 1e-5,
               max_entries_per_param: Optional[int] = None,
               seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_fn must recompute the loss from the current parameter values on every
    call. Entries where both gradients are below 1e-7 in magnitude are treated
    as matching (untouched parameters are exactly zero on both routes).
    max_entries_per_param caps the checked entries per tensor (seeded random
    choice) to keep large embedding tables tractable. Double precision only.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-6, 1e-3]")
    for p in params:
        if p.dtype != torch.float64:
            raise ValueError("grad_check requires float64 parameters")
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"loss is {loss.detach().item()}")
    analytic = torch.autograd.grad(loss, params, allow_unused=True)
    rng = random.Random(seed)

    max_rel = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            ga = torch.zeros_like(p) if g is None else g
            flat = p.data.view(-1)
            ga_flat = ga.reshape(-1)
            n = flat.numel()
            if max_entries_per_param is not None and n > max_entries_per_param:
                indices = rng.sample(range(n), max_entries_per_param)
            else:
                indices = range(n)
            for idx in indices:
                orig = flat[idx].item()
                flat[idx] = orig + eps
                f_plus = float(loss_fn())
                flat[idx] = orig - eps
                f_minus = float(loss_fn())
                flat[idx] = orig
                numeric = (f_plus - f_minus) / (2 * eps)
                a = float(ga_flat[idx])
                denom = max(abs(a), abs(numeric))
                if denom < 1e-7:
                    continue
                max_rel = max(max_rel, abs(a - numeric) / denom)
    return max_rel
