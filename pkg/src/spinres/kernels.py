"""Numba kernels for the inner integration loop.

One macro step = `substeps` classical RK4 substeps on the damped precession
equation, renormalizing after every substep. State and stage buffers are
separate (ny, nx) component planes so the inner j-loops vectorize.

Stage passes write only cell (i, j) and read neighbors from the previous
stage buffer, so row-parallel execution is race-free and bitwise
reproducible for any thread count.
"""

import math

import numpy as np
from numba import njit, prange


@njit(inline="always")
def _cell_torque(yx, yy, yz, i, j, iu, idn, jl, jr,
                 pref, alpha, canis, dmask, cex, msd, hext, hdx):
    yxc = yx[i, j]
    yyc = yy[i, j]
    yzc = yz[i, j]
    hx = cex * (yx[iu, j] + yx[idn, j] + yx[i, jl] + yx[i, jr] - 4.0 * yxc) + dmask[i, j] * hdx
    hy = cex * (yy[iu, j] + yy[idn, j] + yy[i, jl] + yy[i, jr] - 4.0 * yyc)
    hz = (
        cex * (yz[iu, j] + yz[idn, j] + yz[i, jl] + yz[i, jr] - 4.0 * yzc)
        + (canis[i, j] - msd) * yzc
        + hext
    )
    # p = s x H, q = s x p
    px = yyc * hz - yzc * hy
    py = yzc * hx - yxc * hz
    pz = yxc * hy - yyc * hx
    qx = yyc * pz - yzc * py
    qy = yzc * px - yxc * pz
    qz = yxc * py - yyc * px
    g = pref[i, j]
    al = alpha[i, j]
    return g * (px + al * qx), g * (py + al * qy), g * (pz + al * qz)


@njit(parallel=True, fastmath=True, cache=True)
def _stage(
    yx, yy, yz,
    sx, sy, sz,
    ax, ay, az,
    ox, oy, oz,
    pref, alpha, canis, dmask,
    cex, msd, hext, hdx,
    cy, cw, dt6,
    init, final, renorm,
):
    """One RK4 stage: k = rhs(y).

    init:  acc  = k            (first stage)
    mid:   acc += cw * k
    both write o = s + cy * k (the next stage input).
    final: o = normalize(s + dt6 * (acc + k)); o may alias s.
    """
    ny, nx = yx.shape
    for i in prange(ny):
        iu = i - 1 if i > 0 else 0
        idn = i + 1 if i < ny - 1 else ny - 1
        if final:
            for j in range(nx):
                jl = j - 1 if j > 0 else 0
                jr = j + 1 if j < nx - 1 else nx - 1
                kx, ky, kz = _cell_torque(
                    yx, yy, yz, i, j, iu, idn, jl, jr,
                    pref, alpha, canis, dmask, cex, msd, hext, hdx,
                )
                ux = sx[i, j] + dt6 * (ax[i, j] + kx)
                uy = sy[i, j] + dt6 * (ay[i, j] + ky)
                uz = sz[i, j] + dt6 * (az[i, j] + kz)
                if renorm:
                    inv = 1.0 / math.sqrt(ux * ux + uy * uy + uz * uz)
                    ux *= inv
                    uy *= inv
                    uz *= inv
                ox[i, j] = ux
                oy[i, j] = uy
                oz[i, j] = uz
        elif init:
            for j in range(nx):
                jl = j - 1 if j > 0 else 0
                jr = j + 1 if j < nx - 1 else nx - 1
                kx, ky, kz = _cell_torque(
                    yx, yy, yz, i, j, iu, idn, jl, jr,
                    pref, alpha, canis, dmask, cex, msd, hext, hdx,
                )
                ax[i, j] = kx
                ay[i, j] = ky
                az[i, j] = kz
                ox[i, j] = sx[i, j] + cy * kx
                oy[i, j] = sy[i, j] + cy * ky
                oz[i, j] = sz[i, j] + cy * kz
        else:
            for j in range(nx):
                jl = j - 1 if j > 0 else 0
                jr = j + 1 if j < nx - 1 else nx - 1
                kx, ky, kz = _cell_torque(
                    yx, yy, yz, i, j, iu, idn, jl, jr,
                    pref, alpha, canis, dmask, cex, msd, hext, hdx,
                )
                ax[i, j] += cw * kx
                ay[i, j] += cw * ky
                az[i, j] += cw * kz
                ox[i, j] = sx[i, j] + cy * kx
                oy[i, j] = sy[i, j] + cy * ky
                oz[i, j] = sz[i, j] + cy * kz


@njit(cache=True)
def _set_drive(canis, ei, ej, value):
    for n in range(ei.shape[0]):
        canis[ei[n], ej[n]] = value


@njit(cache=True)
def rk4_macro_step(
    sx, sy, sz,
    pref, alpha, canis, dmask,
    cex, msd, hext,
    ei, ej, drive_canis, drive_hx,
    dt, renorm,
    yax, yay, yaz,
    ybx, yby, ybz,
    ax, ay, az,
):
    """Advance one macro step of `drive_canis.shape[0]` RK4 substeps.

    drive_canis[m] holds the scaled electrode anisotropy (2 Ku /(mu0 Ms))
    and drive_hx[m] the in-plane coupling field (A/m) at the three
    distinct stage times of substep m: t, t + dt/2, t + dt. The state
    planes are updated in place.
    """
    nsub = drive_canis.shape[0]
    half = 0.5 * dt
    dt6 = dt / 6.0
    for m in range(nsub):
        _set_drive(canis, ei, ej, drive_canis[m, 0])
        _stage(sx, sy, sz, sx, sy, sz, ax, ay, az, yax, yay, yaz,
               pref, alpha, canis, dmask, cex, msd, hext, drive_hx[m, 0],
               half, 0.0, 0.0, True, False, renorm)
        _set_drive(canis, ei, ej, drive_canis[m, 1])
        _stage(yax, yay, yaz, sx, sy, sz, ax, ay, az, ybx, yby, ybz,
               pref, alpha, canis, dmask, cex, msd, hext, drive_hx[m, 1],
               half, 2.0, 0.0, False, False, renorm)
        _stage(ybx, yby, ybz, sx, sy, sz, ax, ay, az, yax, yay, yaz,
               pref, alpha, canis, dmask, cex, msd, hext, drive_hx[m, 1],
               dt, 2.0, 0.0, False, False, renorm)
        _set_drive(canis, ei, ej, drive_canis[m, 2])
        _stage(yax, yay, yaz, sx, sy, sz, ax, ay, az, sx, sy, sz,
               pref, alpha, canis, dmask, cex, msd, hext, drive_hx[m, 2],
               0.0, 1.0, dt6, False, True, renorm)


def make_buffers(shape):
    """Stage buffers for rk4_macro_step: (ya, yb, acc) component planes."""
    return tuple(np.empty(shape, dtype=np.float64) for _ in range(9))
