"""Central finite-difference oracle for the hand-written MLP backward pass."""
import numpy as np

from bilateral_cf.learner import _forward, init_mlp, mlp_backward

STEP = 1e-6
# gradients smaller than this are compared absolutely; FD round-off is ~1e-10
FLOOR = 1e-5


def _loss(params, x, c):
    return float(np.sum(c * _forward(params, x)[0]))


def max_relative_error(sizes, rng, output="identity", output_scale=1.0, batch=4, coords=30):
    """Worst relative error over sampled parameter and input coordinates for
    a randomly drawn network, input batch and output weighting."""
    params = init_mlp(sizes, rng, output=output, output_scale=output_scale, final_range=0.5)
    x = rng.normal(0.0, 1.0, (batch, sizes[0]))
    c = rng.normal(0.0, 1.0, (batch, sizes[-1]))
    _, acts = _forward(params, x)
    gw, gb, gx = mlp_backward(params, acts, c)

    worst = 0.0
    arrays = params.arrays()
    grads = [g for pair in zip(gw, gb) for g in pair]
    for _ in range(coords):
        k = rng.integers(len(arrays))
        idx = tuple(rng.integers(s) for s in arrays[k].shape)
        old = arrays[k][idx]
        arrays[k][idx] = old + STEP
        up = _loss(params, x, c)
        arrays[k][idx] = old - STEP
        down = _loss(params, x, c)
        arrays[k][idx] = old
        worst = max(worst, _rel(grads[k][idx], (up - down) / (2 * STEP)))
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + STEP
        up = _loss(params, x, c)
        x[idx] = old - STEP
        down = _loss(params, x, c)
        x[idx] = old
        worst = max(worst, _rel(gx[idx], (up - down) / (2 * STEP)))
    return worst


def _rel(a, n):
    return abs(a - n) / max(abs(a), abs(n), FLOOR)
