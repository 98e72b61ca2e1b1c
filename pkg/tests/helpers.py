"""Shared dense oracles and random-MPO generators for the test suite.

The dense constructions here are deliberately independent of the package's
MPO contraction code: they build operators with explicit Kronecker products,
so they can serve as ground truth for it.
"""

import numpy as np

from mpotrace import Mpo

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
ID2 = np.eye(2)


def kron_chain(ops):
    out = np.array([[1.0]])
    for op in ops:
        out = np.kron(out, op)
    return out


def site_op(length, site, op):
    """Dense operator acting with ``op`` on one 1-based site."""
    return kron_chain([op if k == site else ID2 for k in range(1, length + 1)])


def dense_ising(length, j_coupling, g_field):
    dim = 2 ** length
    h = np.zeros((dim, dim))
    for i in range(1, length):
        h += j_coupling * kron_chain(
            [SX if k in (i, i + 1) else ID2 for k in range(1, length + 1)])
    for i in range(1, length + 1):
        h += g_field * site_op(length, i, SZ)
    return h


def dense_lmg(length, h_field):
    dim = 2 ** length
    sx_tot = np.zeros((dim, dim))
    sz_tot = np.zeros((dim, dim))
    for i in range(1, length + 1):
        sx_tot += site_op(length, i, SX) / 2.0
        sz_tot += site_op(length, i, SZ) / 2.0
    return -(sx_tot @ sx_tot) / length - 2.0 * h_field * sz_tot


def random_mpo(rng, length, bond, phys=2, complex_entries=True):
    dims = [1] + [bond] * (length - 1) + [1]
    tensors = []
    for i in range(length):
        shape = (dims[i], phys, phys, dims[i + 1])
        t = rng.standard_normal(shape)
        if complex_entries:
            t = t + 1j * rng.standard_normal(shape)
        tensors.append(t / np.sqrt(bond * phys))
    return Mpo(tensors)


def random_hermitian_mpo(rng, length, bond, phys=2):
    """Site-wise Hermitian tensors make the whole operator Hermitian."""
    dims = [1] + [bond] * (length - 1) + [1]
    tensors = []
    for i in range(length):
        shape = (dims[i], phys, phys, dims[i + 1])
        t = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        t = t + t.conj().transpose(0, 2, 1, 3)
        tensors.append(t / np.sqrt(bond * phys))
    return Mpo(tensors)
