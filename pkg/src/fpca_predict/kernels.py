"""Local-linear kernel smoothing kernels (numba and numpy backends).

Both backends take data already collapsed to unique design locations:
``w`` holds the total observation weight at a location and ``y`` the
weighted mean response there. Weighted least squares is invariant to this
collapse, so results match the raw-data fit exactly while the inner loops
run over far fewer points.

Each evaluation point that sees fewer than three effective locations, or a
singular local design, is refit with the bandwidth doubled, up to
``max_doublings`` times. The bandwidth actually used is returned alongside
the estimate (``nan`` where every attempt failed).
"""

import math
from enum import IntEnum

import numpy as np

from . import _accel
from ._accel import njit

_GAUSS_TRUNC_NORM = 1.0 / (math.sqrt(2.0 * math.pi) * math.erf(1.0 / math.sqrt(2.0)))
_MIN_POINTS = 3
_DET_RTOL = 1e-10


class Kernel(IntEnum):
    EPANECHNIKOV = 0
    GAUSSIAN_TRUNCATED = 1
    UNIFORM = 2

    @classmethod
    def from_name(cls, name):
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"epanechnikov": cls.EPANECHNIKOV, "epan": cls.EPANECHNIKOV,
                   "gaussian_truncated": cls.GAUSSIAN_TRUNCATED, "gaussian": cls.GAUSSIAN_TRUNCATED,
                   "uniform": cls.UNIFORM, "rect": cls.UNIFORM}
        if key not in aliases:
            raise ValueError(f"unknown kernel {name!r}")
        return aliases[key]


def kernel_values(u, kernel=Kernel.EPANECHNIKOV):
    """Kernel density on [-1, 1], zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    kernel = Kernel.from_name(kernel)
    if kernel == Kernel.EPANECHNIKOV:
        k = 0.75 * (1.0 - u * u)
    elif kernel == Kernel.GAUSSIAN_TRUNCATED:
        k = _GAUSS_TRUNC_NORM * np.exp(-0.5 * u * u)
    else:
        k = np.full_like(u, 0.5)
    return np.where(inside, k, 0.0)


@njit
def _kern_nb(u, kernel):
    if u < -1.0 or u > 1.0:
        return 0.0
    if kernel == 0:
        return 0.75 * (1.0 - u * u)
    if kernel == 1:
        return _GAUSS_TRUNC_NORM * math.exp(-0.5 * u * u)
    return 0.5


@njit
def _ll1d_nb(x, y, w, xout, h, kernel, max_doublings):
    n_out = xout.shape[0]
    est = np.full(n_out, np.nan)
    used = np.full(n_out, np.nan)
    for g in range(n_out):
        t = xout[g]
        hh = h
        for _ in range(max_doublings + 1):
            lo = np.searchsorted(x, t - hh, side="left")
            hi = np.searchsorted(x, t + hh, side="right")
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            r0 = 0.0
            r1 = 0.0
            npts = 0
            for p in range(lo, hi):
                d = x[p] - t
                k = _kern_nb(d / hh, kernel) * w[p]
                if k <= 0.0:
                    continue
                npts += 1
                s0 += k
                s1 += k * d
                s2 += k * d * d
                r0 += k * y[p]
                r1 += k * d * y[p]
            det = s0 * s2 - s1 * s1
            if npts >= _MIN_POINTS and det > _DET_RTOL * s0 * s2:
                est[g] = (s2 * r0 - s1 * r1) / det
                used[g] = hh
                break
            hh *= 2.0
    return est, used


@njit
def _ll2d_nb(s, t, w, y, sout, tout, h, kernel, max_doublings):
    # s must be sorted ascending
    ns = sout.shape[0]
    nt = tout.shape[0]
    est = np.full((ns, nt), np.nan)
    used = np.full((ns, nt), np.nan)
    for i in range(ns):
        a = sout[i]
        for j in range(nt):
            b = tout[j]
            hh = h
            for _ in range(max_doublings + 1):
                lo = np.searchsorted(s, a - hh, side="left")
                hi = np.searchsorted(s, a + hh, side="right")
                m00 = 0.0
                m10 = 0.0
                m01 = 0.0
                m20 = 0.0
                m11 = 0.0
                m02 = 0.0
                r0 = 0.0
                r1 = 0.0
                r2 = 0.0
                npts = 0
                for p in range(lo, hi):
                    dt = t[p] - b
                    if dt < -hh or dt > hh:
                        continue
                    ds = s[p] - a
                    k = _kern_nb(ds / hh, kernel) * _kern_nb(dt / hh, kernel) * w[p]
                    if k <= 0.0:
                        continue
                    npts += 1
                    m00 += k
                    m10 += k * ds
                    m01 += k * dt
                    m20 += k * ds * ds
                    m11 += k * ds * dt
                    m02 += k * dt * dt
                    r0 += k * y[p]
                    r1 += k * ds * y[p]
                    r2 += k * dt * y[p]
                # cofactors of the symmetric 3x3 normal matrix, first row
                c00 = m20 * m02 - m11 * m11
                c01 = m01 * m11 - m10 * m02
                c02 = m10 * m11 - m20 * m01
                det = m00 * c00 + m10 * c01 + m01 * c02
                if npts >= _MIN_POINTS and det > _DET_RTOL * m00 * m20 * m02:
                    est[i, j] = (c00 * r0 + c01 * r1 + c02 * r2) / det
                    used[i, j] = hh
                    break
                hh *= 2.0
    return est, used


def _ll1d_np(x, y, w, xout, h, kernel, max_doublings):
    est = np.full(xout.shape[0], np.nan)
    used = np.full(xout.shape[0], np.nan)
    todo = np.arange(xout.shape[0])
    hh = h
    for _ in range(max_doublings + 1):
        if todo.size == 0:
            break
        d = x[None, :] - xout[todo, None]
        k = kernel_values(d / hh, kernel) * w[None, :]
        s0 = k.sum(axis=1)
        s1 = (k * d).sum(axis=1)
        s2 = (k * d * d).sum(axis=1)
        r0 = k @ y
        r1 = (k * d) @ y
        npts = (k > 0).sum(axis=1)
        det = s0 * s2 - s1 * s1
        ok = (npts >= _MIN_POINTS) & (det > _DET_RTOL * s0 * s2)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (s2 * r0 - s1 * r1) / det
        est[todo[ok]] = val[ok]
        used[todo[ok]] = hh
        todo = todo[~ok]
        hh *= 2.0
    return est, used


def _ll2d_np(s, t, w, y, sout, tout, h, kernel, max_doublings):
    ns, nt = sout.shape[0], tout.shape[0]
    est = np.full((ns, nt), np.nan)
    used = np.full((ns, nt), np.nan)
    for i in range(ns):
        todo = np.arange(nt)
        hh = h
        for _ in range(max_doublings + 1):
            if todo.size == 0:
                break
            ds = s - sout[i]
            ks = kernel_values(ds / hh, kernel) * w
            near = ks > 0
            ds = ds[near]
            dt = t[near][None, :] - tout[todo, None]
            k = ks[near][None, :] * kernel_values(dt / hh, kernel)
            yy = y[near]
            m00 = k.sum(axis=1)
            m10 = k @ ds
            m01 = (k * dt).sum(axis=1)
            m20 = k @ (ds * ds)
            m11 = (k * dt) @ ds
            m02 = (k * dt * dt).sum(axis=1)
            r0 = k @ yy
            r1 = k @ (ds * yy)
            r2 = (k * dt) @ yy
            npts = (k > 0).sum(axis=1)
            c00 = m20 * m02 - m11 * m11
            c01 = m01 * m11 - m10 * m02
            c02 = m10 * m11 - m20 * m01
            det = m00 * c00 + m10 * c01 + m01 * c02
            ok = (npts >= _MIN_POINTS) & (det > _DET_RTOL * m00 * m20 * m02)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = (c00 * r0 + c01 * r1 + c02 * r2) / det
            est[i, todo[ok]] = val[ok]
            used[i, todo[ok]] = hh
            todo = todo[~ok]
            hh *= 2.0
    return est, used


def local_linear_1d(x, y, w, xout, h, kernel=Kernel.EPANECHNIKOV, max_doublings=3):
    """Local-linear intercepts at ``xout`` from unique sorted locations ``x``.

    Returns
    -------
    est, used : ndarray
        Estimates and the bandwidth that produced each (``nan`` on failure).
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    xout = np.ascontiguousarray(xout, dtype=float)
    kernel = int(Kernel.from_name(kernel))
    if _accel.numba_enabled():
        return _ll1d_nb(x, y, w, xout, float(h), kernel, int(max_doublings))
    return _ll1d_np(x, y, w, xout, float(h), kernel, int(max_doublings))


def local_linear_2d(s, t, w, y, sout, tout, h, kernel=Kernel.EPANECHNIKOV, max_doublings=3):
    """Product-kernel local-linear surface on the ``sout`` x ``tout`` grid.

    ``(s, t)`` are unique design pairs sorted by ``s``.
    """
    s = np.ascontiguousarray(s, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    sout = np.ascontiguousarray(sout, dtype=float)
    tout = np.ascontiguousarray(tout, dtype=float)
    kernel = int(Kernel.from_name(kernel))
    if _accel.numba_enabled():
        return _ll2d_nb(s, t, w, y, sout, tout, float(h), kernel, int(max_doublings))
    return _ll2d_np(s, t, w, y, sout, tout, float(h), kernel, int(max_doublings))
