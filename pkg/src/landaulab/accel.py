"""Backend selection for the hot numeric kernels.

The inner loops that dominate operator application (symmetric-tensor
contractions, anisotropic gradient projection, weighted reductions) exist in
two interchangeable implementations: numba ``@njit`` loops and pure-numpy
vectorized code.  The environment variable ``LANDAU_NUMBA`` picks the backend
(``0``/``false`` forces numpy; default is numba when importable).
``LANDAU_THREADS`` caps FFT worker threads; default is all logical cores.

``benchmarks/bench_backends.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np


def thread_count() -> int:
    raw = os.environ.get("LANDAU_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def _numba_requested() -> bool:
    flag = os.environ.get("LANDAU_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


_HAVE_NUMBA = False
if _numba_requested():
    try:
        import numba

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False


def using_numba() -> bool:
    return _HAVE_NUMBA


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _np_sym_contract(a6, h6):
    # sum_ij A_ij H_ij for symmetric 3x3 fields stored as [xx,yy,zz,xy,xz,yz]
    return (a6[0] * h6[0] + a6[1] * h6[1] + a6[2] * h6[2]
            + 2.0 * (a6[3] * h6[3] + a6[4] * h6[4] + a6[5] * h6[5]))


def _np_sym_quadform(a6, gx, gy, gz):
    return (a6[0] * gx * gx + a6[1] * gy * gy + a6[2] * gz * gz
            + 2.0 * (a6[3] * gx * gy + a6[4] * gx * gz + a6[5] * gy * gz))


def _np_aniso_combine(vx, vy, vz, r2, hv, gx, gy, gz):
    # P_v g + <v> (I - P_v) g, with P_v = identity at v = 0
    safe = np.where(r2 > 0.0, r2, 1.0)
    dot = (vx * gx + vy * gy + vz * gz) / safe
    px = dot * vx
    py = dot * vy
    pz = dot * vz
    ox = px + hv * (gx - px)
    oy = py + hv * (gy - py)
    oz = pz + hv * (gz - pz)
    at_zero = r2 == 0.0
    if np.any(at_zero):
        ox = np.where(at_zero, gx, ox)
        oy = np.where(at_zero, gy, oy)
        oz = np.where(at_zero, gz, oz)
    return ox, oy, oz


def _np_weighted_sumsq(w, f):
    return float(np.sum(w * f * f))


def _np_weighted_dot3(w, ax, ay, az, bx, by, bz):
    return float(np.sum(w * (ax * bx + ay * by + az * bz)))


# ---------------------------------------------------------------------------
# numba implementations (same contracts, loop form)
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False)

    @_njit
    def _nb_sym_contract(a6, h6):
        n = a6.shape[1]
        out = np.empty(n)
        for i in range(n):
            out[i] = (a6[0, i] * h6[0, i] + a6[1, i] * h6[1, i]
                      + a6[2, i] * h6[2, i]
                      + 2.0 * (a6[3, i] * h6[3, i] + a6[4, i] * h6[4, i]
                               + a6[5, i] * h6[5, i]))
        return out

    @_njit
    def _nb_sym_quadform(a6, gx, gy, gz):
        n = gx.shape[0]
        out = np.empty(n)
        for i in range(n):
            out[i] = (a6[0, i] * gx[i] * gx[i] + a6[1, i] * gy[i] * gy[i]
                      + a6[2, i] * gz[i] * gz[i]
                      + 2.0 * (a6[3, i] * gx[i] * gy[i]
                               + a6[4, i] * gx[i] * gz[i]
                               + a6[5, i] * gy[i] * gz[i]))
        return out

    @_njit
    def _nb_aniso_combine(vx, vy, vz, r2, hv, gx, gy, gz):
        n = gx.shape[0]
        ox = np.empty(n)
        oy = np.empty(n)
        oz = np.empty(n)
        for i in range(n):
            if r2[i] > 0.0:
                dot = (vx[i] * gx[i] + vy[i] * gy[i] + vz[i] * gz[i]) / r2[i]
                px = dot * vx[i]
                py = dot * vy[i]
                pz = dot * vz[i]
                ox[i] = px + hv[i] * (gx[i] - px)
                oy[i] = py + hv[i] * (gy[i] - py)
                oz[i] = pz + hv[i] * (gz[i] - pz)
            else:
                ox[i] = gx[i]
                oy[i] = gy[i]
                oz[i] = gz[i]
        return ox, oy, oz

    @_njit
    def _nb_weighted_sumsq(w, f):
        acc = 0.0
        for i in range(f.shape[0]):
            acc += w[i] * f[i] * f[i]
        return acc

    @_njit
    def _nb_weighted_dot3(w, ax, ay, az, bx, by, bz):
        acc = 0.0
        for i in range(ax.shape[0]):
            acc += w[i] * (ax[i] * bx[i] + ay[i] * by[i] + az[i] * bz[i])
        return acc


# ---------------------------------------------------------------------------
# dispatch.  All functions take/return flat contiguous float64 arrays.
# ---------------------------------------------------------------------------

def _flat6(a6):
    a6 = np.ascontiguousarray(a6, dtype=np.float64)
    return a6.reshape(6, -1)


def sym_contract(a6, h6):
    """sum_ij A_ij H_ij, symmetric storage [xx, yy, zz, xy, xz, yz]."""
    shape = np.shape(h6[0])
    a = _flat6(a6)
    h = _flat6(h6)
    if _HAVE_NUMBA:
        return _nb_sym_contract(a, h).reshape(shape)
    return _np_sym_contract(a, h).reshape(shape)


def sym_quadform(a6, grad3):
    """sum_ij A_ij g_i g_j for a vector field g."""
    shape = np.shape(grad3[0])
    a = _flat6(a6)
    gx, gy, gz = (np.ascontiguousarray(g, dtype=np.float64).ravel() for g in grad3)
    if _HAVE_NUMBA:
        return _nb_sym_quadform(a, gx, gy, gz).reshape(shape)
    return _np_sym_quadform(a, gx, gy, gz).reshape(shape)


def aniso_combine(vx, vy, vz, r2, hv, grad3):
    """Anisotropic gradient combine: P_v g + <v>(I-P_v) g, identity at v=0."""
    shape = np.shape(grad3[0])
    flat = lambda a: np.ascontiguousarray(a, dtype=np.float64).ravel()
    gx, gy, gz = (flat(g) for g in grad3)
    args = (flat(vx), flat(vy), flat(vz), flat(r2), flat(hv), gx, gy, gz)
    if _HAVE_NUMBA:
        ox, oy, oz = _nb_aniso_combine(*args)
    else:
        ox, oy, oz = _np_aniso_combine(*args)
    return ox.reshape(shape), oy.reshape(shape), oz.reshape(shape)


def weighted_sumsq(w, f):
    """sum_i w_i f_i^2.  The h^3 quadrature factor is the caller's business."""
    flat = lambda a: np.ascontiguousarray(a, dtype=np.float64).ravel()
    if _HAVE_NUMBA:
        return float(_nb_weighted_sumsq(flat(w), flat(f)))
    return _np_weighted_sumsq(flat(w), flat(f))


def weighted_dot3(w, a3, b3):
    """sum_i w_i (a_i . b_i) for two vector fields."""
    flat = lambda a: np.ascontiguousarray(a, dtype=np.float64).ravel()
    ax, ay, az = (flat(c) for c in a3)
    bx, by, bz = (flat(c) for c in b3)
    wf = flat(w)
    if _HAVE_NUMBA:
        return float(_nb_weighted_dot3(wf, ax, ay, az, bx, by, bz))
    return _np_weighted_dot3(wf, ax, ay, az, bx, by, bz)
