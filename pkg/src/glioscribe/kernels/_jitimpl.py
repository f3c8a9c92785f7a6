"""Numba-compiled voxel kernels (fast path).

Each function mirrors the numpy/scipy fallback in `_npimpl`. Compiled with
cache=True so the JIT cost is paid once per machine, not per process.
"""

import numpy as np
from numba import njit

_INF = 1e30


@njit(cache=True)
def _label_components_impl(mask, offsets):
    nx, ny, nz = mask.shape
    labels = np.zeros(mask.shape, np.int32)
    stack = np.empty(mask.size, np.int64)
    current = 0
    for i0 in range(nx):
        for j0 in range(ny):
            for k0 in range(nz):
                if mask[i0, j0, k0] == 0 or labels[i0, j0, k0] != 0:
                    continue
                current += 1
                labels[i0, j0, k0] = current
                stack[0] = (i0 * ny + j0) * nz + k0
                top = 1
                while top > 0:
                    top -= 1
                    flat = stack[top]
                    i = flat // (ny * nz)
                    rem = flat % (ny * nz)
                    j = rem // nz
                    k = rem % nz
                    for m in range(offsets.shape[0]):
                        ii = i + offsets[m, 0]
                        jj = j + offsets[m, 1]
                        kk = k + offsets[m, 2]
                        if ii < 0 or ii >= nx or jj < 0 or jj >= ny or kk < 0 or kk >= nz:
                            continue
                        if mask[ii, jj, kk] != 0 and labels[ii, jj, kk] == 0:
                            labels[ii, jj, kk] = current
                            stack[top] = (ii * ny + jj) * nz + kk
                            top += 1
    return labels


def label_components(mask, connectivity, offsets=None):
    # offsets supplied by the package-level wrapper; kept as arg so the
    # kernel stays connectivity-agnostic
    return _label_components_impl(mask, offsets)


@njit(cache=True)
def _dt1d(f, n, s, v, z, d):
    # Felzenszwalb-Huttenlocher lower envelope of parabolas, one scan line.
    # f holds squared distances in, d gets squared distances out.
    k = 0
    v[0] = 0
    z[0] = -_INF
    z[1] = _INF
    for q in range(1, n):
        qs = q * s
        while True:
            p = v[k]
            ps = p * s
            denom = 2.0 * qs - 2.0 * ps
            sline = ((f[q] + qs * qs) - (f[p] + ps * ps)) / denom
            if sline <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = sline
        z[k + 1] = _INF
    k = 0
    for q in range(n):
        qs = q * s
        while z[k + 1] < qs:
            k += 1
        dx = qs - v[k] * s
        d[q] = dx * dx + f[v[k]]


@njit(cache=True)
def _edt_impl(mask, sx, sy, sz):
    nx, ny, nz = mask.shape
    f = np.empty(mask.shape, np.float64)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                f[i, j, k] = _INF if mask[i, j, k] != 0 else 0.0
    nmax = max(nx, max(ny, nz))
    v = np.empty(nmax, np.int64)
    z = np.empty(nmax + 1, np.float64)
    line = np.empty(nmax, np.float64)
    out = np.empty(nmax, np.float64)
    for j in range(ny):
        for k in range(nz):
            for i in range(nx):
                line[i] = f[i, j, k]
            _dt1d(line, nx, sx, v, z, out)
            for i in range(nx):
                f[i, j, k] = out[i]
    for i in range(nx):
        for k in range(nz):
            for j in range(ny):
                line[j] = f[i, j, k]
            _dt1d(line, ny, sy, v, z, out)
            for j in range(ny):
                f[i, j, k] = out[j]
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                line[k] = f[i, j, k]
            _dt1d(line, nz, sz, v, z, out)
            for k in range(nz):
                f[i, j, k] = out[k]
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if mask[i, j, k] == 0:
                    f[i, j, k] = 0.0
                elif f[i, j, k] >= _INF:
                    f[i, j, k] = np.inf
                else:
                    f[i, j, k] = np.sqrt(f[i, j, k])
    return f


def edt(mask, spacing):
    if not mask.any():
        return np.zeros(mask.shape, np.float64)
    return _edt_impl(mask, float(spacing[0]), float(spacing[1]), float(spacing[2]))


@njit(cache=True)
def _nn_gather_impl(labels, coords, out):
    nx, ny, nz = labels.shape
    for t in range(coords.shape[0]):
        i = int(np.rint(coords[t, 0]))
        j = int(np.rint(coords[t, 1]))
        k = int(np.rint(coords[t, 2]))
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            out[t] = labels[i, j, k]
        else:
            out[t] = 0
    return out


def nn_gather(labels, coords):
    out = np.zeros(coords.shape[0], labels.dtype)
    return _nn_gather_impl(labels, coords, out)
