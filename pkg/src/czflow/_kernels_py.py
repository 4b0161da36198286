"""Pure-numpy implementations of the hot kernels.

These mirror ``czflow._kernels`` (Cython) exactly and are used when the
compiled extension is unavailable.
"""
import numpy as np

_CHUNK = 2048


def koranyi_sq4(dq, dp, dtau_plus_half_cross):
    # fourth power of the Koranyi norm of n^{-1} n'
    s = dq * dq + dp * dp
    return s * s / 16.0 + dtau_plus_half_cross * dtau_plus_half_cross


def _pair_norm4(points, centers):
    q = points[:, 0][:, None]
    p = points[:, 1][:, None]
    t = points[:, 2][:, None]
    cq = centers[:, 0][None, :]
    cp = centers[:, 1][None, :]
    ct = centers[:, 2][None, :]
    # c^{-1} x = (q - cq, p - cp, t - ct + (cq p - cp q)/2)
    dtau = t - ct + 0.5 * (cq * p - cp * q)
    return koranyi_sq4(q - cq, p - cp, dtau)


def koranyi_argmin(points, centers):
    """Index of and distance to the nearest center for every point.

    Distances are the left-invariant Koranyi distance d(c, x) = |c^{-1} x|.
    Ties resolve to the lowest center index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    n = points.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    if centers.shape[0] == 0:
        raise ValueError("no centers")
    for s in range(0, n, _CHUNK):
        d4 = _pair_norm4(points[s:s + _CHUNK], centers)
        j = np.argmin(d4, axis=1)
        idx[s:s + _CHUNK] = j
        dist[s:s + _CHUNK] = np.sqrt(np.sqrt(d4[np.arange(len(j)), j]))
    return idx, dist


def greedy_koranyi_net(candidates, seeds, sep):
    """Greedy maximal separated subset.

    Candidates are scanned in order; a candidate is accepted when its
    Koranyi distance to every seed and every accepted candidate is >= sep.
    Returns a boolean mask over candidates.
    """
    candidates = np.ascontiguousarray(candidates, dtype=np.float64)
    seeds = np.ascontiguousarray(seeds, dtype=np.float64).reshape(-1, 3)
    sep4 = float(sep) ** 4
    n = candidates.shape[0]
    mask = np.zeros(n, dtype=bool)
    cap = seeds.shape[0] + n
    acc = np.empty((cap, 3))
    acc[:seeds.shape[0]] = seeds
    m = seeds.shape[0]
    for i in range(n):
        x = candidates[i]
        if m:
            c = acc[:m]
            dtau = x[2] - c[:, 2] + 0.5 * (c[:, 0] * x[1] - c[:, 1] * x[0])
            d4 = koranyi_sq4(x[0] - c[:, 0], x[1] - c[:, 1], dtau)
            if d4.min() < sep4:
                continue
        acc[m] = x
        m += 1
        mask[i] = True
    return mask


def pl_interval_max(bx, by, lo, hi):
    """Maximum of a piecewise-linear function on each interval [lo_i, hi_i].

    The function interpolates (bx, by) (bx sorted ascending) and is held
    constant outside [bx[0], bx[-1]]. Empty intervals give -inf.
    """
    bx = np.asarray(bx, dtype=np.float64)
    by = np.asarray(by, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    out = np.maximum(np.interp(lo, bx, by), np.interp(hi, bx, by))
    # interior breakpoints: prefix-free range max via a sparse table
    nb = bx.shape[0]
    i0 = np.searchsorted(bx, lo, side="right")
    i1 = np.searchsorted(bx, hi, side="left")
    has = i1 > i0
    if nb and has.any():
        levels = [by]
        w = 1
        while 2 * w <= nb:
            prev = levels[-1]
            levels.append(np.maximum(prev[:-w], prev[w:]))
            w *= 2
        a = i0[has]
        b = i1[has]
        span = b - a
        lev = np.floor(np.log2(span)).astype(np.int64)
        vals = np.empty(a.shape[0])
        for L in np.unique(lev):
            sel = lev == L
            tab = levels[L]
            vals[sel] = np.maximum(tab[a[sel]], tab[b[sel] - (1 << L)])
        out[has] = np.maximum(out[has], vals)
    out[hi < lo] = -np.inf
    return out


def koranyi_cell_radii(points, owner, centers):
    """Per-center radii of an assignment.

    Returns (inner, outer): inner[j] is the smallest distance from center j
    to a point not owned by j, outer[j] the largest distance to a point
    owned by j (0 when it owns none).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    owner = np.asarray(owner, dtype=np.int64)
    m = centers.shape[0]
    inner = np.full(m, np.inf)
    outer = np.zeros(m)
    for s in range(0, points.shape[0], _CHUNK):
        d = np.sqrt(np.sqrt(_pair_norm4(points[s:s + _CHUNK], centers)))
        own = owner[s:s + _CHUNK]
        rows = np.arange(d.shape[0])
        np.maximum.at(outer, own, d[rows, own])
        d[rows, own] = np.inf
        inner = np.minimum(inner, d.min(axis=0))
    return inner, outer
