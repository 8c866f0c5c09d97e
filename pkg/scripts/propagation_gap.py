"""Compare iterative propagation with the direct linear solve across tolerances.

The stopping rule bounds the step size, so the distance to the fixed point
is about tol * alpha / (1 - alpha); this prints both side by side.

    python scripts/propagation_gap.py
"""
import numpy as np

from pacc.netprop import initial_weights, load_ppi, propagate, solve_fixed_point
from pacc.synthetic import random_ppi

alpha = 0.7
print("tol\tmax_gap\tbound\titerations")
for tol in (1e-4, 1e-6, 1e-8, 1e-10, 1e-12):
    gap, iters = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 201))
        net = load_ppi(random_ppi(n, int(rng.integers(n, 4 * n)), seed=seed))
        w0 = initial_weights(net, rng.choice(net.genes, size=min(5, net.n), replace=False))
        res = propagate(net, w0, alpha=alpha, tol=tol)
        gap = max(gap, float(np.max(np.abs(res.weights - solve_fixed_point(net, w0, alpha)))))
        iters = max(iters, res.iterations)
    print(f"{tol:.0e}\t{gap:.3e}\t{tol * alpha / (1 - alpha):.3e}\t{iters}")
