import numpy as np
import pytest

from dctrestore import autodiff as ad
from dctrestore import blockdct as bd
from dctrestore import synth
from dctrestore.jfif import canonical_plane_dims


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def fd_gradcheck(fn, tensors, rng, n_coords=8, h=1e-5, tol=1e-4):
    """Central finite differences on sampled coordinates vs analytic grads.

    fn rebuilds the scalar loss from the current tensor data on every call;
    tensors must be float64 for the tolerance to be meaningful.
    """
    for t in tensors:
        t.grad = None
    loss = fn()
    ad.backward(loss)
    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        grad = t.grad_or_zero().reshape(-1)
        k = min(n_coords, flat.size)
        idxs = rng.choice(flat.size, size=k, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn().data.reshape(-1)[0])
            flat[i] = orig - h
            fm = float(fn().data.reshape(-1)[0])
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            denom = max(abs(numeric), abs(grad[i]), 1.0)
            worst = max(worst, abs(numeric - grad[i]) / denom)
    assert worst <= tol, f"finite-difference mismatch: rel err {worst:.3e} > {tol}"
    return worst


def random_quantized_image(rng, height, width, subsampling, gray=False, qf=None):
    """A legal random QuantizedImage (coefficients within entropy-coding range)."""
    if qf is None:
        qf = int(rng.integers(5, 96))
    luma = bd.qf_to_qm(qf, bd.ComponentKind.LUMA).table
    chroma = bd.qf_to_qm(qf, bd.ComponentKind.CHROMA).table
    ncomps = 1 if gray else 3
    dims = canonical_plane_dims((height, width), subsampling, ncomps)
    tables = [luma] if gray else [luma, chroma]
    comps = []
    for i, (h, w) in enumerate(dims):
        table = tables[min(i, len(tables) - 1)]
        limit = np.minimum(1023 // table, 1023)  # keep AC sizes <= 10 bits
        tiled = np.tile(limit, (h // 8, w // 8))
        plane = rng.integers(-tiled, tiled + 1)
        comps.append(bd.ComponentPlane(i + 1, plane, min(i, len(tables) - 1)))
    return bd.QuantizedImage(comps, tables, subsampling if not gray else bd.Subsampling.S444, (height, width))


@pytest.fixture(scope="session")
def natural_image():
    return synth.synth_image(11, 96, 96)


@pytest.fixture(scope="session")
def natural_gray():
    return synth.synth_image(17, 96, 96, gray=True)
