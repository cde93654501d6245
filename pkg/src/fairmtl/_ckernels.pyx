# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels: fused elementwise loops over float64 buffers.

Mirrors `fairmtl._kernels_np` exactly (same names, same accumulate-in-place
contract).  Matrix products stay in numpy/BLAS; only the elementwise-heavy
inner loops live here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt

cnp.import_array()

XENT_CLIP = 1e-12
cdef double _CLIP = 1e-12


def relu_fwd(cnp.ndarray[double, ndim=2, mode="c"] x):
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty_like(x)
    cdef Py_ssize_t i, n = x.size
    cdef double* xp = <double*> x.data
    cdef double* op = <double*> out.data
    for i in range(n):
        op[i] = xp[i] if xp[i] > 0.0 else 0.0
    return out


def relu_bwd(cnp.ndarray[double, ndim=2, mode="c"] x,
             cnp.ndarray[double, ndim=2, mode="c"] g,
             cnp.ndarray[double, ndim=2, mode="c"] acc):
    cdef Py_ssize_t i, n = x.size
    cdef double* xp = <double*> x.data
    cdef double* gp = <double*> g.data
    cdef double* ap = <double*> acc.data
    for i in range(n):
        # branchless so the compiler can vectorize; random signs would
        # otherwise stall on mispredictions
        ap[i] += gp[i] * (xp[i] > 0.0)


def sigmoid_fwd(cnp.ndarray[double, ndim=2, mode="c"] x):
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty_like(x)
    cdef Py_ssize_t i, n = x.size
    cdef double* xp = <double*> x.data
    cdef double* op = <double*> out.data
    for i in range(n):
        op[i] = 1.0 / (1.0 + exp(-xp[i]))
    return out


def sigmoid_bwd(cnp.ndarray[double, ndim=2, mode="c"] s,
                cnp.ndarray[double, ndim=2, mode="c"] g,
                cnp.ndarray[double, ndim=2, mode="c"] acc):
    cdef Py_ssize_t i, n = s.size
    cdef double* sp = <double*> s.data
    cdef double* gp = <double*> g.data
    cdef double* ap = <double*> acc.data
    for i in range(n):
        ap[i] += gp[i] * sp[i] * (1.0 - sp[i])


def xent_fwd(cnp.ndarray[double, ndim=2, mode="c"] p,
             cnp.ndarray[double, ndim=2, mode="c"] y):
    cdef Py_ssize_t i, n = p.size
    cdef double* pp = <double*> p.data
    cdef double* yp = <double*> y.data
    cdef double total = 0.0, pc
    for i in range(n):
        pc = pp[i]
        if pc < _CLIP:
            pc = _CLIP
        elif pc > 1.0 - _CLIP:
            pc = 1.0 - _CLIP
        total -= yp[i] * log(pc) + (1.0 - yp[i]) * log1p(-pc)
    return total / n


def xent_bwd(cnp.ndarray[double, ndim=2, mode="c"] p,
             cnp.ndarray[double, ndim=2, mode="c"] y,
             double gscale,
             cnp.ndarray[double, ndim=2, mode="c"] acc):
    cdef Py_ssize_t i, n = p.size
    cdef double* pp = <double*> p.data
    cdef double* yp = <double*> y.data
    cdef double* ap = <double*> acc.data
    cdef double scale = gscale / n, pc
    for i in range(n):
        pc = pp[i]
        if pc < _CLIP or pc > 1.0 - _CLIP:
            continue
        ap[i] += (pc - yp[i]) / (pc * (1.0 - pc)) * scale


def gauss_fwd(cnp.ndarray[double, ndim=2, mode="c"] u,
              cnp.ndarray[double, ndim=2, mode="c"] v,
              double gamma):
    cdef Py_ssize_t i, j, nu = u.shape[0], nv = v.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((nu, nv))
    cdef double* up = <double*> u.data
    cdef double* vp = <double*> v.data
    cdef double* op = <double*> out.data
    cdef double d
    for i in range(nu):
        for j in range(nv):
            d = up[i] - vp[j]
            op[i * nv + j] = exp(-gamma * d * d)
    return out


def gauss_bwd(cnp.ndarray[double, ndim=2, mode="c"] u,
              cnp.ndarray[double, ndim=2, mode="c"] v,
              cnp.ndarray[double, ndim=2, mode="c"] k,
              cnp.ndarray[double, ndim=2, mode="c"] g,
              double gamma,
              cnp.ndarray[double, ndim=2, mode="c"] du,
              cnp.ndarray[double, ndim=2, mode="c"] dv):
    cdef Py_ssize_t i, j, nu = u.shape[0], nv = v.shape[0]
    cdef double* up = <double*> u.data
    cdef double* vp = <double*> v.data
    cdef double* kp = <double*> k.data
    cdef double* gp = <double*> g.data
    cdef double* dup = <double*> du.data
    cdef double* dvp = <double*> dv.data
    cdef double w
    for i in range(nu):
        for j in range(nv):
            w = gp[i * nv + j] * kp[i * nv + j] * (-2.0 * gamma) * (up[i] - vp[j])
            dup[i] += w
            dvp[j] -= w


def adagrad_step(cnp.ndarray[double, ndim=2, mode="c"] param,
                 cnp.ndarray[double, ndim=2, mode="c"] grad,
                 cnp.ndarray[double, ndim=2, mode="c"] acc,
                 double lr, double eps):
    cdef Py_ssize_t i, n = param.size
    cdef double* pp = <double*> param.data
    cdef double* gp = <double*> grad.data
    cdef double* ap = <double*> acc.data
    for i in range(n):
        ap[i] += gp[i] * gp[i]
        pp[i] -= lr * gp[i] / (sqrt(ap[i]) + eps)
