"""Central-finite-difference gradient checking for the tensor engine.

The oracle is independent of the tape: it re-evaluates the forward function
at perturbed parameter values and differences the results.
"""

from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np

from somagrid import numcore as nc
from somagrid.numcore import Tape, Tensor, backward


def numeric_gradient(f: Callable[[Sequence[np.ndarray]], float],
                     arrays: List[np.ndarray], h: float = 1e-5) -> List[np.ndarray]:
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(arrays)
            flat[i] = orig - h
            fm = f(arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def gradcheck(build: Callable[[List[Tensor]], Tensor], arrays: List[np.ndarray],
              rtol: float = 1e-4, atol: float = 1e-7, h: float = 1e-5) -> None:
    """Compare tape gradients of `build(params) -> scalar` with central differences."""
    params = [nc.parameter(a.copy()) for a in arrays]
    with Tape():
        loss = build(params)
        nc.zero_grads(params)
        backward(loss)
    analytic = [np.zeros_like(a) if p.grad is None else p.grad for p, a in zip(params, arrays)]

    def f(arrs: Sequence[np.ndarray]) -> float:
        vals = [Tensor(a) for a in arrs]
        return float(build(vals).data)

    numeric = numeric_gradient(f, [a.copy() for a in arrays], h=h)
    for k, (ag, ng) in enumerate(zip(analytic, numeric)):
        err = np.abs(ag - ng)
        tol = atol + rtol * np.maximum(np.abs(ag), np.abs(ng))
        assert (err <= tol).all(), (
            f"gradient mismatch on operand {k}: max err {err.max():.3e}, "
            f"analytic {ag.reshape(-1)[:4]}, numeric {ng.reshape(-1)[:4]}"
        )
