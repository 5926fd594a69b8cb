import numpy as np
import pytest

from vixseg import tensor as T


@pytest.fixture
def f64():
    """Run the test body at 64-bit precision."""
    with T.precision("float64"):
        yield


def central_diff(fn, arrays, h=1e-6):
    """Central finite differences of a scalar fn over a list of ndarrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            up = fn()
            a[idx] = orig - h
            down = fn()
            a[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(got, want, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(got), np.abs(want)), floor)
    return float(np.max(np.abs(got - want) / denom))


def fd_check(build_loss, params, h=1e-6, tol=1e-5, floor=1e-6):
    """Assert analytic gradients of build_loss() match central differences.

    build_loss must construct the graph from scratch each call and return the
    scalar loss Tensor.  params is a list of Parameters feeding it.  Elements
    whose gradients are below `floor` are compared against it absolutely.
    """
    for p in params:
        p.zero_grad()
    with T.Tape() as tape:
        tape.backward(build_loss())

    def value():
        with T.no_grad():
            return build_loss().item()

    fd = central_diff(value, [p.data for p in params], h=h)
    for p, g in zip(params, fd):
        err = rel_err(p.grad, g, floor=floor)
        assert err <= tol, f"{p.name}: rel err {err}"
