"""Central finite-difference gradient checking shared across test modules."""

import numpy as np
import torch


def central_diff_check(
    loss_fn,
    params,
    n_coords=16,
    seed=0,
    h=1e-6,
    rtol=1e-3,
    atol=1e-9,
):
    """Compare autograd gradients of `loss_fn()` against central differences.

    `params` is a list of (name, tensor) pairs; `n_coords` scalar
    coordinates are sampled across them. Gradients numerically at zero
    (below `atol`) count as agreement: central differences resolve a
    double-precision loss only to ~|L|*eps/h.
    """
    loss = loss_fn()
    grads = torch.autograd.grad(
        loss, [p for _, p in params], allow_unused=True, retain_graph=False
    )
    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(n_coords):
        k = int(rng.integers(len(params)))
        name, p = params[k]
        g = grads[k]
        flat = p.detach().reshape(-1)
        j = int(rng.integers(flat.numel()))
        analytic = float(g.reshape(-1)[j]) if g is not None else 0.0
        orig = float(flat[j])
        with torch.no_grad():
            flat[j] = orig + h
            lp = float(loss_fn())
            flat[j] = orig - h
            lm = float(loss_fn())
            flat[j] = orig
        numeric = (lp - lm) / (2.0 * h)
        tol = max(rtol * max(abs(analytic), abs(numeric)), atol)
        if abs(analytic - numeric) > tol:
            failures.append((name, j, analytic, numeric))
    return failures
