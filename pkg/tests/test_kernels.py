import numpy as np
import pytest

from tetmpm.errors import OutOfGridError
from tetmpm.kernels import KernelType, stencil, stencil_batch, support_size
from tetmpm.transfers import Grid

KERNELS = [KernelType.LINEAR, KernelType.QUADRATIC]


def _grid(spacing=0.1, dims=(12, 11, 13)):
    return Grid(spacing, origin=(-0.2, 0.05, 0.0), dims=dims)


def _interior_points(rng, grid, n):
    """Random positions safely inside the widest stencil's node range."""
    lo = grid.origin + 1.6 * grid.spacing
    hi = grid.origin + (np.array(grid.dims) - 2.6) * grid.spacing
    return lo + rng.random((n, 3)) * (hi - lo)


@pytest.mark.parametrize("kernel", KERNELS)
def test_partition_of_unity(kernel):
    rng = np.random.default_rng(7)
    grid = _grid()
    x = _interior_points(rng, grid, 10_000)
    _, w, _ = stencil_batch(x, kernel, grid)
    assert np.abs(w.sum(axis=1) - 1.0).max() <= 1e-12


@pytest.mark.parametrize("kernel", KERNELS)
def test_gradients_sum_to_zero(kernel):
    rng = np.random.default_rng(8)
    grid = _grid()
    x = _interior_points(rng, grid, 10_000)
    _, _, g = stencil_batch(x, kernel, grid)
    assert np.abs(g.sum(axis=1)).max() <= 1e-10


@pytest.mark.parametrize("kernel", KERNELS)
def test_linear_completeness(kernel):
    # sum_i N_i(x) x_i reproduces x itself
    rng = np.random.default_rng(9)
    grid = _grid()
    x = _interior_points(rng, grid, 5_000)
    idx, w, _ = stencil_batch(x, kernel, grid)
    recon = np.einsum("ns,nsa->na", w, grid.node_positions(idx))
    assert np.abs(recon - x).max() <= 1e-10


@pytest.mark.parametrize("kernel", KERNELS)
def test_gradient_completeness(kernel):
    # sum_i grad N_i(x) x_i^T = identity (exact linear-field gradients)
    rng = np.random.default_rng(10)
    grid = _grid()
    x = _interior_points(rng, grid, 2_000)
    idx, _, g = stencil_batch(x, kernel, grid)
    J = np.einsum("nsa,nsb->nab", g, grid.node_positions(idx))
    assert np.abs(J - np.eye(3)).max() <= 1e-9


def test_quadratic_weight_at_node():
    # 1-D quadratic B-spline value at zero offset is 3/4 - 0^2 = 0.75, so the
    # center node of a stencil placed exactly on a node carries 0.75^3
    grid = _grid()
    node = grid.origin + grid.spacing * np.array([4.0, 5.0, 6.0])
    st = stencil(node, KernelType.QUADRATIC, grid)
    assert st.weights.max() == pytest.approx(0.75 ** 3, abs=1e-14)
    center = st.node_indices[np.argmax(st.weights)]
    assert np.allclose(grid.node_positions(np.array([center]))[0], node)
    # face neighbors carry 0.75^2 * 0.125
    w_sorted = np.sort(st.weights)[::-1]
    assert np.allclose(w_sorted[1:7], 0.75 ** 2 * 0.125, atol=1e-14)


def test_linear_weight_at_node_is_interpolatory():
    grid = _grid()
    node = grid.origin + grid.spacing * np.array([3.0, 2.0, 7.0])
    st = stencil(node, KernelType.LINEAR, grid)
    w = np.sort(st.weights)
    assert w[-1] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(w[:-1]).max() <= 1e-14


@pytest.mark.parametrize("kernel", KERNELS)
def test_gradient_matches_finite_difference(kernel):
    rng = np.random.default_rng(11)
    grid = _grid()
    nodal = rng.standard_normal(grid.node_count)

    def interp(pos):
        idx, w, _ = stencil_batch(pos[None, :], kernel, grid)
        return (w[0] * nodal[idx[0]]).sum()

    eps = 1e-6
    for x in _interior_points(rng, grid, 50):
        idx, _, g = stencil_batch(x[None, :], kernel, grid)
        grad = np.einsum("sa,s->a", g[0], nodal[idx[0]])
        fd = np.array([
            (interp(x + eps * np.eye(3)[a]) - interp(x - eps * np.eye(3)[a])) / (2 * eps)
            for a in range(3)
        ])
        scale = max(np.abs(fd).max(), 1.0)
        assert np.abs(grad - fd).max() <= 1e-6 * scale


@pytest.mark.parametrize("kernel", KERNELS)
def test_support_size(kernel):
    grid = _grid()
    x = grid.origin + grid.spacing * np.array([4.3, 5.1, 6.7])
    idx, w, g = stencil_batch(x[None, :], kernel, grid)
    assert idx.shape == (1, support_size(kernel))
    assert w.shape == (1, support_size(kernel))
    assert g.shape == (1, support_size(kernel), 3)


@pytest.mark.parametrize("kernel", KERNELS)
def test_out_of_grid_raises(kernel):
    grid = _grid()
    far = grid.origin + grid.spacing * (np.array(grid.dims) + 3.0)
    with pytest.raises(OutOfGridError):
        stencil_batch(far[None, :], kernel, grid)
    with pytest.raises(OutOfGridError):
        stencil_batch((grid.origin - 2.0 * grid.spacing)[None, :], kernel, grid)


def test_single_matches_batch():
    rng = np.random.default_rng(12)
    grid = _grid()
    x = _interior_points(rng, grid, 10)
    idx, w, g = stencil_batch(x, KernelType.QUADRATIC, grid)
    for k in range(10):
        st = stencil(x[k], KernelType.QUADRATIC, grid)
        assert np.array_equal(st.node_indices, idx[k])
        assert np.array_equal(st.weights, w[k])
        assert np.array_equal(st.gradients, g[k])
