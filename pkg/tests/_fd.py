"""Central finite-difference gradient oracle (fp64).

Independent of autograd: perturbs each parameter element in place, re-runs
the loss closure, and compares the centered difference against the analytic
gradient. The figure of merit is the max absolute deviation over the full
concatenated gradient, relative to the full gradient's own max magnitude
(parameters whose true gradient is identically zero, e.g. biases under a
translation-invariant loss, must not inflate the ratio through a tiny
denominator).
"""

import torch


def fd_gradcheck(loss_fn, params, h=1e-6):
    loss = loss_fn()
    assert loss.dtype == torch.float64, "gradient checks run in fp64"
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g
             for p, g in zip(params, grads)]
    num = 0.0
    den = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.view(-1)
            fd = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                fd[i] = (up - down) / (2.0 * h)
            num = max(num, (g.view(-1) - fd).abs().max().item())
            den = max(den, g.abs().max().item(), fd.abs().max().item())
    return num / max(den, 1e-8)
