"""Shared test utilities: finite-difference gradient checking and straight-line
oracles for the attention equations."""

import numpy as np
import torch


def perturb_params(module, scale=0.1, seed=0):
    """Move all parameters away from degenerate zeros (zero-init BN scales,
    zero attention scalars) so gradient checks exercise every path."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(torch.randn(p.shape, generator=gen) * scale)


def fd_check(loss_fn, params, n_samples=20, steps=(1e-6, 1e-5, 1e-4), seed=0):
    """Max relative error between autograd and central finite differences
    over n_samples randomly chosen parameter entries.  Callers run in
    float64 and eval mode.

    The difference is evaluated at several step sizes and the best taken:
    high-curvature directions need small steps while near-zero gradients
    need larger ones to rise above cancellation noise.  An absolute error
    below 1e-8 counts as agreement; relative error is meaningless for
    gradients at the noise floor."""
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for _ in range(n_samples):
        pi = int(rng.integers(len(params)))
        p = params[pi]
        j = int(rng.integers(p.numel()))
        flat = p.detach().reshape(-1)
        orig = flat[j].item()
        g = grads[pi]
        an = 0.0 if g is None else g.reshape(-1)[j].item()
        best = np.inf
        for h in steps:
            with torch.no_grad():
                flat[j] = orig + h
                lp = loss_fn().item()
                flat[j] = orig - h
                lm = loss_fn().item()
                flat[j] = orig
            fd = (lp - lm) / (2 * h)
            err = abs(an - fd)
            rel = 0.0 if err < 1e-8 else err / max(abs(an), abs(fd))
            best = min(best, rel)
        max_rel = max(max_rel, best)
    return max_rel


def position_attention_oracle(a, wb, wc, wd, alpha):
    """Element-by-element evaluation of the spatial attention equations.

    a: (C, H, W); wb, wc: (Cr, C); wd: (C, C); returns (C, H, W).
    """
    c, h, w = a.shape
    n = h * w
    A = a.reshape(c, n).astype(np.float64)
    B = wb @ A
    Cm = wc @ A
    D = wd @ A
    E = np.empty_like(A)
    for j in range(n):
        e = np.array([np.exp(B[:, i] @ Cm[:, j]) for i in range(n)])
        s = e / e.sum()
        acc = np.zeros(c)
        for i in range(n):
            acc += s[i] * D[:, i]
        E[:, j] = alpha * acc + A[:, j]
    return E.reshape(c, h, w)


def channel_attention_oracle(a, beta):
    """Element-by-element evaluation of the channel attention equations."""
    c, h, w = a.shape
    n = h * w
    A = a.reshape(c, n).astype(np.float64)
    E = np.empty_like(A)
    for j in range(c):
        e = np.array([np.exp(A[i] @ A[j]) for i in range(c)])
        x = e / e.sum()
        acc = np.zeros(n)
        for i in range(c):
            acc += x[i] * A[i]
        E[j] = beta * acc + A[j]
    return E.reshape(c, h, w)
