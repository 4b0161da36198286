# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: Koranyi nearest-center search, greedy nets and
piecewise-linear interval maxima."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline double _norm4(double xq, double xp, double xt,
                          double cq, double cp, double ct) noexcept nogil:
    cdef double dq = xq - cq
    cdef double dp = xp - cp
    cdef double dt = xt - ct + 0.5 * (cq * xp - cp * xq)
    cdef double s = dq * dq + dp * dp
    return s * s / 16.0 + dt * dt


def koranyi_argmin(points, centers):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], m = C.shape[0], i, j, best
    if m == 0:
        raise ValueError("no centers")
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    cdef long long[::1] I = idx
    cdef double[::1] D = dist
    cdef double d, bd
    with nogil:
        for i in range(n):
            bd = INFINITY
            best = 0
            for j in range(m):
                d = _norm4(P[i, 0], P[i, 1], P[i, 2], C[j, 0], C[j, 1], C[j, 2])
                if d < bd:
                    bd = d
                    best = j
            I[i] = best
            D[i] = sqrt(sqrt(bd))
    return idx, dist


def greedy_koranyi_net(candidates, seeds, double sep):
    cdef double[:, ::1] X = np.ascontiguousarray(candidates, dtype=np.float64)
    S0 = np.ascontiguousarray(seeds, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = X.shape[0], ns = S0.shape[0], i, j, m
    acc_arr = np.empty((ns + n, 3))
    acc_arr[:ns] = S0
    cdef double[:, ::1] A = acc_arr
    mask_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] mask = mask_arr
    cdef double sep4 = sep * sep * sep * sep
    cdef bint ok
    m = ns
    with nogil:
        for i in range(n):
            ok = True
            for j in range(m):
                if _norm4(X[i, 0], X[i, 1], X[i, 2], A[j, 0], A[j, 1], A[j, 2]) < sep4:
                    ok = False
                    break
            if ok:
                A[m, 0] = X[i, 0]
                A[m, 1] = X[i, 1]
                A[m, 2] = X[i, 2]
                m += 1
                mask[i] = 1
    return mask_arr.astype(bool)


cdef inline double _interp(double x, double[::1] bx, double[::1] by,
                           Py_ssize_t nb) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = nb - 1, mid
    if x <= bx[0]:
        return by[0]
    if x >= bx[nb - 1]:
        return by[nb - 1]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if bx[mid] <= x:
            lo = mid
        else:
            hi = mid
    if bx[hi] == bx[lo]:
        return by[hi]
    return by[lo] + (by[hi] - by[lo]) * (x - bx[lo]) / (bx[hi] - bx[lo])


cdef inline Py_ssize_t _search(double x, double[::1] bx, Py_ssize_t nb, bint right) noexcept nogil:
    # numpy searchsorted: first j with bx[j] > x (right) or bx[j] >= x (left)
    cdef Py_ssize_t lo = 0, hi = nb, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if bx[mid] < x or (right and bx[mid] == x):
            lo = mid + 1
        else:
            hi = mid
    return lo


def pl_interval_max(bx_in, by_in, lo_in, hi_in):
    cdef double[::1] bx = np.ascontiguousarray(bx_in, dtype=np.float64)
    cdef double[::1] by = np.ascontiguousarray(by_in, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(lo_in, dtype=np.float64)
    cdef double[::1] hi = np.ascontiguousarray(hi_in, dtype=np.float64)
    cdef Py_ssize_t nb = bx.shape[0], n = lo.shape[0], i, j, a, b, L, w
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    # sparse table of range maxima over the breakpoints
    cdef Py_ssize_t K = 1
    while nb and (1 << K) <= nb:
        K += 1
    tab_arr = np.empty((K, max(nb, 1)))
    cdef double[:, ::1] tab = tab_arr
    cdef double v, u
    with nogil:
        for j in range(nb):
            tab[0, j] = by[j]
        w = 1
        for L in range(1, K):
            for j in range(nb - 2 * w + 1):
                u = tab[L - 1, j + w]
                tab[L, j] = tab[L - 1, j] if tab[L - 1, j] > u else u
            w *= 2
        for i in range(n):
            if hi[i] < lo[i]:
                out[i] = -INFINITY
                continue
            v = _interp(lo[i], bx, by, nb)
            u = _interp(hi[i], bx, by, nb)
            if u > v:
                v = u
            a = _search(lo[i], bx, nb, True)
            b = _search(hi[i], bx, nb, False)
            if b > a:
                L = 0
                while (2 << L) <= b - a:
                    L += 1
                u = tab[L, a]
                if tab[L, b - (1 << L)] > u:
                    u = tab[L, b - (1 << L)]
                if u > v:
                    v = u
            out[i] = v
    return out_arr


def koranyi_cell_radii(points, owner, centers):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(centers, dtype=np.float64)
    cdef long long[::1] O = np.ascontiguousarray(owner, dtype=np.int64)
    cdef Py_ssize_t n = P.shape[0], m = C.shape[0], i, j
    inner_arr = np.full(m, np.inf)
    outer_arr = np.zeros(m)
    cdef double[::1] inner = inner_arr
    cdef double[::1] outer = outer_arr
    cdef double d
    with nogil:
        for i in range(n):
            for j in range(m):
                d = sqrt(sqrt(_norm4(P[i, 0], P[i, 1], P[i, 2], C[j, 0], C[j, 1], C[j, 2])))
                if j == O[i]:
                    if d > outer[j]:
                        outer[j] = d
                elif d < inner[j]:
                    inner[j] = d
    return inner_arr, outer_arr
