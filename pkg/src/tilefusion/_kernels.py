"""Numba kernels for the per-voxel and per-ray inner loops.

Volume arrays are indexed [z, y, x] so the x axis is fastest in memory.
A subvolume with origin voxel ``ht`` (integer 3-vector, voxel units) and
``n`` voxels per side covers global voxel coordinates ht .. ht + n - 1;
the world position of global voxel g is ``voxel_size * g``.

Ray marching samples on a global lattice t_j = j * voxel_size anchored at
the camera center, with a coarse stride of whole fine steps.  Sample
positions along a ray therefore do not depend on which subvolume is being
marched, only on the camera ray itself.  Subvolumes that tile a region
with shared voxel values then reproduce the single-volume march on the
overlap bit for bit, which is what makes a tiling of small volumes
interchangeable with one large volume.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# fine stepping engages once |tsdf| drops below this fraction of truncation
NEAR_SURFACE_FRACTION = 0.99


@njit(cache=True, inline="always")
def _sample(tsdf, weight, n, qx, qy, qz):
    """Trilinear sample at voxel-local coordinates q.

    Returns (valid, value); valid requires the full 2x2x2 neighborhood to
    be inside the grid and observed (weight > 0 at all eight corners).
    """
    ix = int(math.floor(qx))
    iy = int(math.floor(qy))
    iz = int(math.floor(qz))
    if ix < 0 or iy < 0 or iz < 0 or ix > n - 2 or iy > n - 2 or iz > n - 2:
        return False, 0.0
    if (
        weight[iz, iy, ix] <= 0.0
        or weight[iz, iy, ix + 1] <= 0.0
        or weight[iz, iy + 1, ix] <= 0.0
        or weight[iz, iy + 1, ix + 1] <= 0.0
        or weight[iz + 1, iy, ix] <= 0.0
        or weight[iz + 1, iy, ix + 1] <= 0.0
        or weight[iz + 1, iy + 1, ix] <= 0.0
        or weight[iz + 1, iy + 1, ix + 1] <= 0.0
    ):
        return False, 0.0
    fx = qx - ix
    fy = qy - iy
    fz = qz - iz
    c000 = float(tsdf[iz, iy, ix])
    c100 = float(tsdf[iz, iy, ix + 1])
    c010 = float(tsdf[iz, iy + 1, ix])
    c110 = float(tsdf[iz, iy + 1, ix + 1])
    c001 = float(tsdf[iz + 1, iy, ix])
    c101 = float(tsdf[iz + 1, iy, ix + 1])
    c011 = float(tsdf[iz + 1, iy + 1, ix])
    c111 = float(tsdf[iz + 1, iy + 1, ix + 1])
    c00 = c000 * (1.0 - fx) + c100 * fx
    c10 = c010 * (1.0 - fx) + c110 * fx
    c01 = c001 * (1.0 - fx) + c101 * fx
    c11 = c011 * (1.0 - fx) + c111 * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return True, c0 * (1.0 - fz) + c1 * fz


@njit(cache=True)
def integrate_kernel(
    tsdf,
    weight,
    ht,
    voxel_size,
    depth,
    r_cw,
    t_cw,
    cam_center,
    fx,
    fy,
    cx,
    cy,
    tau,
    max_weight,
    sample_weight,
):
    """Fuse one depth frame into a subvolume (projective TSDF update).

    Every voxel is projected into the frame; the signed distance along the
    pixel ray is depth minus the voxel's ray-corrected distance from the
    camera center.  Updates behind the surface by more than the truncation
    band are skipped entirely so far-side voxels stay unobserved.
    """
    n = tsdf.shape[0]
    height, width = depth.shape
    for iz in range(n):
        gz = (iz + ht[2]) * voxel_size
        for iy in range(n):
            gy = (iy + ht[1]) * voxel_size
            for ix in range(n):
                gx = (ix + ht[0]) * voxel_size
                pcx = r_cw[0, 0] * gx + r_cw[0, 1] * gy + r_cw[0, 2] * gz + t_cw[0]
                pcy = r_cw[1, 0] * gx + r_cw[1, 1] * gy + r_cw[1, 2] * gz + t_cw[1]
                pcz = r_cw[2, 0] * gx + r_cw[2, 1] * gy + r_cw[2, 2] * gz + t_cw[2]
                if pcz <= 0.0:
                    continue
                u = fx * pcx / pcz + cx
                v = fy * pcy / pcz + cy
                ui = int(math.floor(u + 0.5))
                vi = int(math.floor(v + 0.5))
                if ui < 0 or ui >= width or vi < 0 or vi >= height:
                    continue
                d = depth[vi, ui]
                if d <= 0.0:
                    continue
                rx = (ui - cx) / fx
                ry = (vi - cy) / fy
                ray_scale = math.sqrt(rx * rx + ry * ry + 1.0)
                ddx = gx - cam_center[0]
                ddy = gy - cam_center[1]
                ddz = gz - cam_center[2]
                dist = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
                sdf = d - dist / ray_scale
                if sdf < -tau:
                    continue
                clamped = sdf if sdf < tau else tau
                w_old = float(weight[iz, iy, ix])
                v_old = float(tsdf[iz, iy, ix])
                w_sum = w_old + sample_weight
                tsdf[iz, iy, ix] = np.float32((w_old * v_old + sample_weight * clamped) / w_sum)
                weight[iz, iy, ix] = np.float32(min(w_sum, max_weight))


@njit(cache=True)
def _scan_crossing(
    tsdf,
    weight,
    n,
    ht,
    voxel_size,
    ox,
    oy,
    oz,
    dx,
    dy,
    dz,
    delta,
    scan_from,
    scan_end,
    sp_valid,
    sp_v,
):
    """Walk fine lattice points scan_from..scan_end for the first crossing.

    (sp_valid, sp_v) describe the sample at scan_from - 1.  A crossing is a
    consecutive valid pair going positive to non-positive; it is accepted
    when the interpolated hit lies in front of the camera, inside a fully
    observed cell, with a nonzero gradient.  Returns
    (found, t, hx, hy, hz, nx, ny, nz).
    """
    for k in range(scan_from, scan_end + 1):
        tk = k * delta
        kx = (ox + tk * dx) / voxel_size - ht[0]
        ky = (oy + tk * dy) / voxel_size - ht[1]
        kz = (oz + tk * dz) / voxel_size - ht[2]
        sv, s = _sample(tsdf, weight, n, kx, ky, kz)
        if sp_valid and sp_v > 0.0 and sv and s <= 0.0:
            ta = (k - 1) * delta
            tstar = ta + delta * (sp_v / (sp_v - s))
            if tstar >= 0.0:
                hx = ox + tstar * dx
                hy = oy + tstar * dy
                hz = oz + tstar * dz
                qx = hx / voxel_size - ht[0]
                qy = hy / voxel_size - ht[1]
                qz = hz / voxel_size - ht[2]
                cix = int(math.floor(qx))
                ciy = int(math.floor(qy))
                ciz = int(math.floor(qz))
                if (
                    cix >= 0
                    and ciy >= 0
                    and ciz >= 0
                    and cix <= n - 2
                    and ciy <= n - 2
                    and ciz <= n - 2
                    and weight[ciz, ciy, cix] > 0.0
                    and weight[ciz, ciy, cix + 1] > 0.0
                    and weight[ciz, ciy + 1, cix] > 0.0
                    and weight[ciz, ciy + 1, cix + 1] > 0.0
                    and weight[ciz + 1, ciy, cix] > 0.0
                    and weight[ciz + 1, ciy, cix + 1] > 0.0
                    and weight[ciz + 1, ciy + 1, cix] > 0.0
                    and weight[ciz + 1, ciy + 1, cix + 1] > 0.0
                ):
                    gfx = qx - cix
                    gfy = qy - ciy
                    gfz = qz - ciz
                    c000 = float(tsdf[ciz, ciy, cix])
                    c100 = float(tsdf[ciz, ciy, cix + 1])
                    c010 = float(tsdf[ciz, ciy + 1, cix])
                    c110 = float(tsdf[ciz, ciy + 1, cix + 1])
                    c001 = float(tsdf[ciz + 1, ciy, cix])
                    c101 = float(tsdf[ciz + 1, ciy, cix + 1])
                    c011 = float(tsdf[ciz + 1, ciy + 1, cix])
                    c111 = float(tsdf[ciz + 1, ciy + 1, cix + 1])
                    gx = (
                        (c100 - c000) * (1.0 - gfy) * (1.0 - gfz)
                        + (c110 - c010) * gfy * (1.0 - gfz)
                        + (c101 - c001) * (1.0 - gfy) * gfz
                        + (c111 - c011) * gfy * gfz
                    )
                    gy = (
                        (c010 - c000) * (1.0 - gfx) * (1.0 - gfz)
                        + (c110 - c100) * gfx * (1.0 - gfz)
                        + (c011 - c001) * (1.0 - gfx) * gfz
                        + (c111 - c101) * gfx * gfz
                    )
                    gz = (
                        (c001 - c000) * (1.0 - gfx) * (1.0 - gfy)
                        + (c011 - c010) * (1.0 - gfx) * gfy
                        + (c101 - c100) * gfx * (1.0 - gfy)
                        + (c111 - c110) * gfx * gfy
                    )
                    gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
                    if gnorm > 0.0:
                        if gx * dx + gy * dy + gz * dz > 0.0:
                            gx, gy, gz = -gx, -gy, -gz
                        return (
                            True,
                            tstar,
                            hx,
                            hy,
                            hz,
                            gx / gnorm,
                            gy / gnorm,
                            gz / gnorm,
                        )
        sp_valid = sv
        sp_v = s
    return False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0


@njit(cache=True, inline="always")
def _hit_wins(tstar, nxv, nyv, nzv, cur, cnx, cny, cnz):
    """Total order on hits: distance first, then the normal.

    Overlapping tiles can report the identical crossing with normals that
    differ in the last bits (their gradient stencils straddle different
    tile borders).  Breaking exact distance ties by the larger normal
    keeps the merged map independent of traversal order.
    """
    if tstar < cur:
        return True
    if tstar > cur:
        return False
    if nxv != cnx:
        return nxv > cnx
    if nyv != cny:
        return nyv > cny
    return nzv > cnz


@njit(cache=True)
def raycast_kernel(
    tsdf,
    weight,
    ht,
    voxel_size,
    tau,
    coarse_step,
    r_wc,
    cam_center,
    fx,
    fy,
    cx,
    cy,
    out_dist,
    out_vert,
    out_norm,
):
    """March every pixel ray through one subvolume, merging by min distance.

    A hit is the first positive-to-negative zero crossing between two
    fully-observed trilinear samples.  Marching runs at ``coarse_step``
    fine-lattice points per stride while the field is unobserved or near
    the truncation bound and drops to single steps near the surface; any
    stride that may have leapt a crossing is re-walked at single steps,
    including a final re-walk when the ray leaves the volume with points
    still skipped.  A hit overwrites a pixel only when it wins the
    distance-then-normal order against what a previous subvolume wrote.
    """
    n = tsdf.shape[0]
    height, width = out_dist.shape
    delta = voxel_size
    near_thresh = NEAR_SURFACE_FRACTION * tau
    bxmin = ht[0] * voxel_size
    bymin = ht[1] * voxel_size
    bzmin = ht[2] * voxel_size
    bxmax = (ht[0] + n - 1) * voxel_size
    bymax = (ht[1] + n - 1) * voxel_size
    bzmax = (ht[2] + n - 1) * voxel_size
    for py in range(height):
        for px in range(width):
            rx = (px - cx) / fx
            ry = (py - cy) / fy
            dx = r_wc[0, 0] * rx + r_wc[0, 1] * ry + r_wc[0, 2]
            dy = r_wc[1, 0] * rx + r_wc[1, 1] * ry + r_wc[1, 2]
            dz = r_wc[2, 0] * rx + r_wc[2, 1] * ry + r_wc[2, 2]
            dnorm = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx /= dnorm
            dy /= dnorm
            dz /= dnorm
            ox = cam_center[0]
            oy = cam_center[1]
            oz = cam_center[2]
            # slab intersection with the sampleable box
            t_lo = 0.0
            t_hi = 1.0e30
            miss = False
            for axis in range(3):
                if axis == 0:
                    o_a, d_a, mn, mx = ox, dx, bxmin, bxmax
                elif axis == 1:
                    o_a, d_a, mn, mx = oy, dy, bymin, bymax
                else:
                    o_a, d_a, mn, mx = oz, dz, bzmin, bzmax
                if abs(d_a) < 1.0e-15:
                    if o_a < mn or o_a > mx:
                        miss = True
                        break
                else:
                    t1 = (mn - o_a) / d_a
                    t2 = (mx - o_a) / d_a
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > t_lo:
                        t_lo = t1
                    if t2 < t_hi:
                        t_hi = t2
            if miss or t_lo > t_hi:
                continue
            j = int(math.ceil(t_lo / delta))
            if j < 0:
                j = 0
            j_end = int(math.floor(t_hi / delta))
            prev_has = False
            prev_v = 0.0
            prev_j = -1
            last_j = j - 1  # last march-sampled fine point
            swept_j = j - 1  # rightmost fine point already re-walked
            finished = False
            while j <= j_end:
                t = j * delta
                wx = (ox + t * dx) / voxel_size - ht[0]
                wy = (oy + t * dy) / voxel_size - ht[1]
                wz = (oz + t * dz) / voxel_size - ht[2]
                valid, value = _sample(tsdf, weight, n, wx, wy, wz)
                do_scan = False
                if (not valid) or value <= 0.0:
                    if prev_has and prev_v > 0.0:
                        do_scan = True
                    elif swept_j < j - 1 and (valid or coarse_step > 2):
                        # a crossing can hide in a skipped run only when its
                        # negative side was sampled here or the run is wide
                        # enough to contain both sides
                        do_scan = True
                if do_scan:
                    scan_from = prev_j if prev_j > swept_j else swept_j
                    scan_from += 1
                    k0 = scan_from - 1
                    if prev_has and k0 == prev_j:
                        sp_valid = True
                        sp_v = prev_v
                    else:
                        tk = k0 * delta
                        kx = (ox + tk * dx) / voxel_size - ht[0]
                        ky = (oy + tk * dy) / voxel_size - ht[1]
                        kz = (oz + tk * dz) / voxel_size - ht[2]
                        sp_valid, sp_v = _sample(tsdf, weight, n, kx, ky, kz)
                    found, tstar, hx, hy, hz, nxv, nyv, nzv = _scan_crossing(
                        tsdf, weight, n, ht, voxel_size,
                        ox, oy, oz, dx, dy, dz,
                        delta, scan_from, j, sp_valid, sp_v,
                    )
                    swept_j = j
                    if found:
                        if _hit_wins(
                            tstar, nxv, nyv, nzv,
                            out_dist[py, px],
                            out_norm[py, px, 0],
                            out_norm[py, px, 1],
                            out_norm[py, px, 2],
                        ):
                            out_dist[py, px] = tstar
                            out_vert[py, px, 0] = hx
                            out_vert[py, px, 1] = hy
                            out_vert[py, px, 2] = hz
                            out_norm[py, px, 0] = nxv
                            out_norm[py, px, 1] = nyv
                            out_norm[py, px, 2] = nzv
                        finished = True
                        break
                last_j = j
                if valid:
                    prev_has = True
                    prev_v = value
                    prev_j = j
                    if abs(value) < near_thresh:
                        j += 1
                    else:
                        j = (j // coarse_step + 1) * coarse_step
                else:
                    j = (j // coarse_step + 1) * coarse_step
            if not finished:
                # the exit stride may have skipped points still inside the
                # volume; a crossing there is visible to no later march
                scan_from = last_j if last_j > swept_j else swept_j
                scan_from += 1
                if scan_from <= j_end:
                    k0 = scan_from - 1
                    if prev_has and k0 == prev_j:
                        sp_valid = True
                        sp_v = prev_v
                    else:
                        tk = k0 * delta
                        kx = (ox + tk * dx) / voxel_size - ht[0]
                        ky = (oy + tk * dy) / voxel_size - ht[1]
                        kz = (oz + tk * dz) / voxel_size - ht[2]
                        sp_valid, sp_v = _sample(tsdf, weight, n, kx, ky, kz)
                    found, tstar, hx, hy, hz, nxv, nyv, nzv = _scan_crossing(
                        tsdf, weight, n, ht, voxel_size,
                        ox, oy, oz, dx, dy, dz,
                        delta, scan_from, j_end, sp_valid, sp_v,
                    )
                    if found and _hit_wins(
                        tstar, nxv, nyv, nzv,
                        out_dist[py, px],
                        out_norm[py, px, 0],
                        out_norm[py, px, 1],
                        out_norm[py, px, 2],
                    ):
                        out_dist[py, px] = tstar
                        out_vert[py, px, 0] = hx
                        out_vert[py, px, 1] = hy
                        out_vert[py, px, 2] = hz
                        out_norm[py, px, 0] = nxv
                        out_norm[py, px, 1] = nyv
                        out_norm[py, px, 2] = nzv


@njit(cache=True)
def extract_bound(tsdf, weight):
    """Upper bound on extractable vertices (observed sign-change voxels)."""
    n = tsdf.shape[0]
    count = 0
    for iz in range(n):
        for iy in range(n):
            for ix in range(n):
                if weight[iz, iy, ix] <= 0.0:
                    continue
                v0 = tsdf[iz, iy, ix]
                pos0 = v0 > 0.0
                found = False
                if ix + 1 < n and weight[iz, iy, ix + 1] > 0.0:
                    if (tsdf[iz, iy, ix + 1] > 0.0) != pos0:
                        found = True
                if not found and iy + 1 < n and weight[iz, iy + 1, ix] > 0.0:
                    if (tsdf[iz, iy + 1, ix] > 0.0) != pos0:
                        found = True
                if not found and iz + 1 < n and weight[iz + 1, iy, ix] > 0.0:
                    if (tsdf[iz + 1, iy, ix] > 0.0) != pos0:
                        found = True
                if found:
                    count += 1
    return count


@njit(cache=True)
def extract_kernel(tsdf, weight, ht, voxel_size, out_verts, out_norms):
    """Emit at most one surface vertex per voxel.

    A voxel emits when the sign of its value differs from an observed
    +x/+y/+z neighbor; among such axes the crossing closest to the voxel
    center is kept.  The normal is the normalized finite-difference
    gradient at the voxel (central where both neighbors are observed).
    Returns the number of vertices written.
    """
    n = tsdf.shape[0]
    count = 0
    for iz in range(n):
        for iy in range(n):
            for ix in range(n):
                if weight[iz, iy, ix] <= 0.0:
                    continue
                v0 = float(tsdf[iz, iy, ix])
                pos0 = v0 > 0.0
                best_alpha = 2.0
                best_axis = -1
                if ix + 1 < n and weight[iz, iy, ix + 1] > 0.0:
                    v1 = float(tsdf[iz, iy, ix + 1])
                    if (v1 > 0.0) != pos0:
                        alpha = v0 / (v0 - v1)
                        if alpha < best_alpha:
                            best_alpha = alpha
                            best_axis = 0
                if iy + 1 < n and weight[iz, iy + 1, ix] > 0.0:
                    v1 = float(tsdf[iz, iy + 1, ix])
                    if (v1 > 0.0) != pos0:
                        alpha = v0 / (v0 - v1)
                        if alpha < best_alpha:
                            best_alpha = alpha
                            best_axis = 1
                if iz + 1 < n and weight[iz + 1, iy, ix] > 0.0:
                    v1 = float(tsdf[iz + 1, iy, ix])
                    if (v1 > 0.0) != pos0:
                        alpha = v0 / (v0 - v1)
                        if alpha < best_alpha:
                            best_alpha = alpha
                            best_axis = 2
                if best_axis < 0:
                    continue
                # finite-difference gradient, one-sided at grid or data edges
                gx = 0.0
                gy = 0.0
                gz = 0.0
                for axis in range(3):
                    if axis == 0:
                        im = ix - 1 >= 0 and weight[iz, iy, ix - 1] > 0.0
                        ip = ix + 1 < n and weight[iz, iy, ix + 1] > 0.0
                        vm = float(tsdf[iz, iy, ix - 1]) if im else 0.0
                        vp = float(tsdf[iz, iy, ix + 1]) if ip else 0.0
                    elif axis == 1:
                        im = iy - 1 >= 0 and weight[iz, iy - 1, ix] > 0.0
                        ip = iy + 1 < n and weight[iz, iy + 1, ix] > 0.0
                        vm = float(tsdf[iz, iy - 1, ix]) if im else 0.0
                        vp = float(tsdf[iz, iy + 1, ix]) if ip else 0.0
                    else:
                        im = iz - 1 >= 0 and weight[iz - 1, iy, ix] > 0.0
                        ip = iz + 1 < n and weight[iz + 1, iy, ix] > 0.0
                        vm = float(tsdf[iz - 1, iy, ix]) if im else 0.0
                        vp = float(tsdf[iz + 1, iy, ix]) if ip else 0.0
                    if im and ip:
                        g = (vp - vm) * 0.5
                    elif ip:
                        g = vp - v0
                    elif im:
                        g = v0 - vm
                    else:
                        g = 0.0
                    if axis == 0:
                        gx = g
                    elif axis == 1:
                        gy = g
                    else:
                        gz = g
                gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
                if gnorm == 0.0:
                    continue
                vx = (ix + ht[0]) * voxel_size
                vy = (iy + ht[1]) * voxel_size
                vz = (iz + ht[2]) * voxel_size
                if best_axis == 0:
                    vx += best_alpha * voxel_size
                elif best_axis == 1:
                    vy += best_alpha * voxel_size
                else:
                    vz += best_alpha * voxel_size
                out_verts[count, 0] = vx
                out_verts[count, 1] = vy
                out_verts[count, 2] = vz
                out_norms[count, 0] = gx / gnorm
                out_norms[count, 1] = gy / gnorm
                out_norms[count, 2] = gz / gnorm
                count += 1
    return count
