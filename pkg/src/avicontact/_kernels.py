"""Compiled inner loops for the certificate table.

Rescheduling touches every pair of a kicked body, a few hundred rows per
event, where per-call numpy overhead would dominate the run time.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def reschedule_rows(rows, live, ia, ib, plane, w, off_a, off_b, q, qdot,
                    now, cap, expiry, seq, next_seq, cached_min):
    """Recompute expiries of the live ``rows`` in place.

    Returns the next free sequence number and the updated cached earliest
    row, -1 when the cache has to be rebuilt.
    """
    dim = q.shape[1]
    best = -1
    for k in range(rows.shape[0]):
        r = rows[k]
        if not live[r]:
            continue
        a = ia[r]
        b = ib[r]
        xa = 0.0
        va = 0.0
        xb = 0.0
        vb = 0.0
        for j in range(dim):
            xa += q[a, j] * w[r, j]
            va += qdot[a, j] * w[r, j]
            xb += q[b, j] * w[r, j]
            vb += qdot[b, j] * w[r, j]
        t = math.inf
        if va < 0.0:
            t = max(xa - off_a[r], 0.0) / -va
        if not plane[r] and vb > 0.0:
            tb = max(off_b[r] - xb, 0.0) / vb
            if tb < t:
                t = tb
        t = min(now + t, cap)
        expiry[r] = t
        seq[r] = next_seq
        next_seq += 1
        if r == cached_min:
            cached_min = -2
        if best < 0 or t < expiry[best]:
            best = r
    if cached_min == -2:
        cached_min = -1
    elif cached_min >= 0 and best >= 0:
        if expiry[best] < expiry[cached_min] or (
                expiry[best] == expiry[cached_min] and seq[best] < seq[cached_min]):
            cached_min = best
    return next_seq, cached_min


def warm_up():
    """Compile the kernels ahead of the first event."""
    z = np.zeros(1, dtype=np.int64)
    reschedule_rows(z, np.zeros(1, dtype=np.bool_), z, z, np.zeros(1, dtype=np.bool_),
                    np.zeros((1, 2)), np.zeros(1), np.zeros(1), np.zeros((1, 2)),
                    np.zeros((1, 2)), 0.0, 1.0, np.zeros(1), z.copy(), 0, -1)


@njit(cache=True)
def penalty_event(q, qdot, inv_mass, a, b, radius_sum, plane, plane_normal,
                  two_thickness, stiffness, e, h, n_out):
    """Evaluate one penalty layer and kick the pair if it is compressed.

    Writes the contact normal (from ``b`` towards ``a``) into ``n_out`` and
    returns ``(gap, normal velocity, dV/dgap)``; the gap is NaN when the
    centres coincide.
    """
    dim = q.shape[1]
    if plane:
        d = 0.0
        for j in range(dim):
            n_out[j] = plane_normal[j]
            d += (q[a, j] - q[b, j]) * plane_normal[j]
        d -= radius_sum
    else:
        dist2 = 0.0
        for j in range(dim):
            dx = q[a, j] - q[b, j]
            n_out[j] = dx
            dist2 += dx * dx
        dist = math.sqrt(dist2)
        if dist < 1e-12:
            return math.nan, 0.0, 0.0
        for j in range(dim):
            n_out[j] /= dist
        d = dist - radius_sum
    vn = 0.0
    for j in range(dim):
        vn += (qdot[a, j] - qdot[b, j]) * n_out[j]
    g = d - two_thickness
    if g >= 0.0:
        return g, vn, 0.0
    s = e if vn > 0.0 else 1.0
    dv = 2.0 * s * stiffness * g
    for j in range(dim):
        grad = dv * n_out[j]
        qdot[a, j] -= h * inv_mass[a] * grad
        if not plane:
            qdot[b, j] += h * inv_mass[b] * grad
    return g, vn, dv
