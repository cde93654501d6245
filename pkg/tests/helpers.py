"""Shared test utilities: the central finite-difference gradient oracle."""

import numpy as np

import fairmtl.autodiff as ad

STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def fd_grad(build, params):
    """Central finite differences of a scalar-valued graph builder.

    `build` maps nothing to a 1x1 Tensor, reading the live values of
    `params`.  Returns one array of the same shape per param.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        it = np.nditer(p.value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p.value[idx]
            p.value[idx] = orig + STEP
            hi = build().value[0, 0]
            p.value[idx] = orig - STEP
            lo = build().value[0, 0]
            p.value[idx] = orig
            g[idx] = (hi - lo) / (2 * STEP)
            it.iternext()
        grads.append(g)
    return grads


def check_grads(build, params):
    for p in params:
        p.grad[...] = 0.0
    root = build()
    ad.backward(root)
    numeric = fd_grad(build, params)
    for p, num in zip(params, numeric):
        denom = np.maximum(np.abs(num), np.abs(p.grad))
        err = np.abs(p.grad - num)
        bad = err > np.maximum(REL_TOL * denom, ABS_FLOOR)
        assert not bad.any(), (
            f"grad mismatch for {p.name}: max err {err.max():.3e}\n"
            f"analytic:\n{p.grad}\nnumeric:\n{num}")
