"""Shared helpers: finite-difference gradient checks and small meshes."""

import numpy as np
import pytest

import pdmesh.autodiff as ad
from pdmesh.mesh import Mesh
from pdmesh.shapes import icosahedron

FD_STEP = 1e-5


def scalarize(out, offset):
    """Reduce any op output to a scalar with a generic quadratic probe."""
    flat = ad.reshape(out, (out.data.size, 1))
    return ad.mean_rows(ad.sqnorm_rows(ad.add(flat, offset)))


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_gradient(f, x, h=FD_STEP):
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xflat = x.reshape(-1)
    for i in range(x.size):
        orig = xflat[i]
        xflat[i] = orig + h
        up = f(x)
        xflat[i] = orig - h
        down = f(x)
        xflat[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(build, inputs, rng, tol=1e-4):
    """Compare taped adjoints of ``build(*tensors)`` with central FD.

    ``build`` must accept both tracked and plain tensors; every entry of
    ``inputs`` is treated as differentiable.
    """
    tape = ad.Tape()
    tensors = [tape.variable(x) for x in inputs]
    out = build(*tensors)
    offset = rng.normal(size=(out.data.size, 1))
    loss = tape.gradients(scalarize(out, offset), tensors)

    def forward_value(arrays):
        plain = [ad.Tensor(a) for a in arrays]
        return float(scalarize(build(*plain), offset).data)

    for pos, x in enumerate(inputs):
        def f(perturbed, pos=pos):
            arrays = list(inputs)
            arrays[pos] = perturbed
            return forward_value(arrays)

        fd = numeric_gradient(f, x.copy())
        err = rel_error(fd, loss[tensors[pos].nid])
        assert err < tol, f"gradient mismatch on input {pos}: rel err {err}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bumpy_icosahedron(rng, amount=0.15) -> Mesh:
    """Closed 12-vertex mesh with randomized geometry, no degenerate faces."""
    base = icosahedron()
    return base.with_positions(
        base.positions + amount * rng.normal(size=base.positions.shape))


def permute_mesh(mesh: Mesh, vperm, fperm=None):
    """Relabel vertices by vperm (new index = vperm position) and
    optionally reorder faces."""
    vperm = np.asarray(vperm)
    inverse = np.empty_like(vperm)
    inverse[vperm] = np.arange(vperm.size)
    faces = inverse[mesh.faces]
    if fperm is not None:
        faces = faces[np.asarray(fperm)]
    return Mesh(mesh.positions[vperm], faces), inverse
