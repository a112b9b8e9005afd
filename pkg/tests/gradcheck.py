"""Central finite-difference oracle for layer gradients.

Loss is a fixed random projection of the layer output, so the upstream
gradient is exactly the projection tensor and every input/parameter gradient
can be checked independently of the backward implementation.
"""
import numpy as np


def central_difference(f, arr, indices, h=1e-5):
    flat = arr.ravel()
    grads = np.zeros(len(indices))
    for out_i, i in enumerate(indices):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        grads[out_i] = (fp - fm) / (2 * h)
    return grads


def max_rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-7)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_layer_gradients(layer, x_shape, seed, n_checks=40, h=1e-5, train=True):
    """Worst relative error across input and parameter gradients for one layer."""
    rng = np.random.default_rng(seed)
    layer.build(x_shape[1:], rng)
    x = rng.normal(size=x_shape)
    y = layer.forward(x, train)
    proj = rng.normal(size=y.shape)

    def loss():
        return float((layer.forward(x, train) * proj).sum())

    layer.forward(x, train)
    dx = layer.backward(proj.copy())
    worst = 0.0

    idx = rng.choice(x.size, size=min(n_checks, x.size), replace=False)
    numeric = central_difference(loss, x, idx, h)
    worst = max(worst, max_rel_error(dx.ravel()[idx], numeric))

    for name in layer.param_order:
        param = layer.params[name]
        layer.forward(x, train)
        layer.backward(proj.copy())
        analytic = layer.grads[name].ravel()
        idx = rng.choice(param.size, size=min(n_checks, param.size), replace=False)
        numeric = central_difference(loss, param, idx, h)
        worst = max(worst, max_rel_error(analytic[idx], numeric))
    return worst


def check_maxpool_gradients(layer, x_shape, seed, n_checks=40, h=1e-5):
    """Same check but with well-separated inputs so perturbation never flips an argmax."""
    rng = np.random.default_rng(seed)
    layer.build(x_shape[1:], rng)
    x = rng.permutation(np.arange(np.prod(x_shape), dtype=np.float64)).reshape(x_shape) * 0.618
    y = layer.forward(x, True)
    proj = rng.normal(size=y.shape)

    def loss():
        return float((layer.forward(x, True) * proj).sum())

    layer.forward(x, True)
    dx = layer.backward(proj.copy())
    idx = rng.choice(x.size, size=min(n_checks, x.size), replace=False)
    numeric = central_difference(loss, x, idx, h)
    return max_rel_error(dx.ravel()[idx], numeric)
