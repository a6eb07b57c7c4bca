"""Compiled stencil for the pseudomode master-equation right-hand side.

The enlarged state is a column-stacked ``n x n`` matrix over ``spin (x) modes``
(row-major tensor order, spin slowest). Every term of the generator either flips
the spin or shifts one mode by one Fock level, on the left (rows) or on the right
(columns). ``L rho`` is therefore a sum of shifted, coefficient-weighted copies of
columns of ``rho``; each output column is built while it sits in cache.

The kernel works on the split real layout ``y = [Re vec(rho), Im vec(rho)]`` so the
inner loops vectorise; contiguous slice views keep the indexing free of wraparound
checks.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(inline="always", fastmath=True)
def _fma_vec(o_r, o_i, c_r, c_i, x_r, x_i):
    for k in range(o_r.size):
        xr = x_r[k]
        xi = x_i[k]
        o_r[k] += c_r[k] * xr - c_i[k] * xi
        o_i[k] += c_r[k] * xi + c_i[k] * xr


@numba.njit(inline="always", fastmath=True)
def _fma_scalar(o_r, o_i, ar, ai, x_r, x_i):
    for k in range(o_r.size):
        xr = x_r[k]
        xi = x_i[k]
        o_r[k] += ar * xr - ai * xi
        o_i[k] += ar * xi + ai * xr


@numba.njit(cache=True, nogil=True, fastmath=True)
def pseudomode_rhs(y, out, n, m_half, diag_r, diag_i, deph, flip_r, flip_i, dn_r, dn_i, up_r, up_i, jump,
                   cdiag_r, cdiag_i, cflip_r, cflip_i, cdn_r, cdn_i, cup_r, cup_i, cjump, strides, gd2_on):
    size = n * n
    yr = y[:size]
    yi = y[size:]
    outr = out[:size]
    outi = out[size:]
    for j in range(n):
        o = n * j
        Or = outr[o:o + n]
        Oi = outi[o:o + n]
        Vr = yr[o:o + n]
        Vi = yi[o:o + n]
        # diagonal: -i K_l[i] + i K_r[j] (+ 2 gamma_D s_i s_j)
        djr = cdiag_r[j]
        dji = cdiag_i[j]
        szj = (1.0 if j < m_half else -1.0) if gd2_on else 0.0
        for k in range(n):
            ar = diag_r[k] + djr + deph[k] * szj
            ai = diag_i[k] + dji
            xr = Vr[k]
            xi = Vi[k]
            Or[k] = ar * xr - ai * xi
            Oi[k] = ar * xi + ai * xr
        # spin flip from the left
        _fma_vec(Or[:m_half], Oi[:m_half], flip_r[:m_half], flip_i[:m_half], Vr[m_half:], Vi[m_half:])
        _fma_vec(Or[m_half:], Oi[m_half:], flip_r[m_half:], flip_i[m_half:], Vr[:m_half], Vi[:m_half])
        # spin flip from the right
        src = n * (j + m_half if j < m_half else j - m_half)
        _fma_scalar(Or, Oi, cflip_r[j], cflip_i[j], yr[src:src + n], yi[src:src + n])
        for l in range(strides.size):
            s = strides[l]
            # left coupling, b^dag and b on rows
            _fma_vec(Or[s:], Oi[s:], dn_r[l, s:], dn_i[l, s:], Vr[:n - s], Vi[:n - s])
            _fma_vec(Or[:n - s], Oi[:n - s], up_r[l, :n - s], up_i[l, :n - s], Vr[s:], Vi[s:])
            # right coupling, whole shifted columns
            ar = cdn_r[l, j]
            ai = cdn_i[l, j]
            if ar != 0.0 or ai != 0.0:
                src = o - n * s
                _fma_scalar(Or, Oi, ar, ai, yr[src:src + n], yi[src:src + n])
            ar = cup_r[l, j]
            ai = cup_i[l, j]
            if ar != 0.0 or ai != 0.0:
                src = o + n * s
                _fma_scalar(Or, Oi, ar, ai, yr[src:src + n], yi[src:src + n])
            # jump b rho b^dag: rows and columns both shifted up
            b = cjump[l, j]
            if b != 0.0:
                src = o + n * s + s
                Jw = jump[l, :n - s]
                Xr = yr[src:src + n - s]
                Xi = yi[src:src + n - s]
                Pr = Or[:n - s]
                Pi = Oi[:n - s]
                for k in range(n - s):
                    w = b * Jw[k]
                    Pr[k] += w * Xr[k]
                    Pi[k] += w * Xi[k]
    return out


def stencil_tables(h_s, couplings, xis, lams, dims, dephasing_rate):
    """Coefficient tables consumed by :func:`pseudomode_rhs`.

    ``h_s`` is the 2x2 system Hamiltonian; the coupling operator is ``sigma_z``.
    The enlarged Hamiltonian enters as ``-i K rho + i rho K`` with the same
    (complex-symmetric) ``K`` on both sides.
    """
    dims = tuple(int(d) for d in dims)
    m_total = int(np.prod(dims)) if dims else 1
    n = 2 * m_total
    idx = np.arange(n)
    spin = idx // m_total
    n_modes = len(dims)
    occ = np.zeros((n_modes, n), dtype=np.int64)
    strides = np.zeros(n_modes, dtype=np.int64)
    rem = idx % m_total
    stride = m_total
    for l, d in enumerate(dims):
        stride //= d
        strides[l] = stride
        occ[l] = (rem // stride) % d
    xis = np.asarray(xis, dtype=float).reshape(n_modes)
    lams = np.asarray(lams, dtype=float).reshape(n_modes)
    g = np.asarray(couplings, dtype=complex).reshape(n_modes)
    dims_a = np.asarray(dims, dtype=np.int64).reshape(n_modes)
    h_s = np.asarray(h_s, dtype=complex)
    sz = np.where(spin == 0, 1.0, -1.0)

    free = (occ * xis[:, None]).sum(axis=0)
    damp = (occ * lams[:, None]).sum(axis=0)
    hdiag = h_s[spin, spin]
    k_left = hdiag + free - 1j * damp - 1j * dephasing_rate
    k_right = hdiag + free + 1j * damp + 1j * dephasing_rate

    sq_m = np.sqrt(occ.astype(float))
    sq_m1 = np.sqrt(occ + 1.0)
    not_bottom = occ > 0
    not_top = occ + 1 < dims_a[:, None]
    # (b^dag rho)[m] = sqrt(m) rho[m-1];  (b rho)[m] = sqrt(m+1) rho[m+1]
    tables = {
        "diag": -1j * k_left,
        "flip": -1j * h_s[spin, 1 - spin],
        "dn": np.where(not_bottom, -1j * g[:, None] * sz * sq_m, 0.0),
        "up": np.where(not_top, -1j * g[:, None] * sz * sq_m1, 0.0),
        "cdiag": 1j * k_right,
        "cflip": 1j * h_s[1 - spin, spin],
        "cdn": np.where(not_bottom, 1j * g[:, None] * sz * sq_m, 0.0),
        "cup": np.where(not_top, 1j * g[:, None] * sz * sq_m1, 0.0),
    }
    out = dict(n=n, m_half=m_total, strides=strides, gd2_on=bool(dephasing_rate != 0.0))
    for key, val in tables.items():
        val = np.asarray(val, dtype=complex)
        out[key + "_r"] = np.ascontiguousarray(val.real)
        out[key + "_i"] = np.ascontiguousarray(val.imag)
    out["deph"] = 2.0 * float(dephasing_rate) * sz
    out["jump"] = np.ascontiguousarray(np.where(not_top, 2.0 * lams[:, None] * sq_m1, 0.0))
    out["cjump"] = np.ascontiguousarray(np.where(not_top, sq_m1, 0.0))
    return out


_ARG_ORDER = ("n", "m_half", "diag_r", "diag_i", "deph", "flip_r", "flip_i", "dn_r", "dn_i", "up_r", "up_i",
              "jump", "cdiag_r", "cdiag_i", "cflip_r", "cflip_i", "cdn_r", "cdn_i", "cup_r", "cup_i", "cjump",
              "strides", "gd2_on")


def apply_split(tables, y, out=None):
    """``L`` on the split real vector ``[Re v, Im v]``."""
    if out is None:
        out = np.empty_like(y)
    return pseudomode_rhs(y, out, *(tables[k] for k in _ARG_ORDER))


def apply_stencil(tables, v):
    """``L`` on a complex column-stacked vector."""
    y = np.concatenate([v.real, v.imag])
    out = apply_split(tables, y)
    size = v.size
    return out[:size] + 1j * out[size:]
