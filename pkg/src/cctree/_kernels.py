"""Compiled inner loops shared by the geometry, distance and bound modules.

Everything here works on raw float64 arrays of shape (m, d). The public
wrappers in the sibling modules do validation and bookkeeping.
"""
import math

import numpy as np
from numba import njit

# parameter-space slack when comparing free-interval endpoints
PARAM_SLACK = 1e-12
# relative slack (w.r.t. eps^2) before a negative discriminant counts as a miss
TANGENT_SLACK = 1e-12
EMPTY = 2.0
# relative nudge applied to critical-value candidates before testing them
CRITICAL_NUDGE = 1e-13
# relative guard on box/stabbing bound components against round-off
BOUND_ROUNDING = 1e-14
# relative margin added to alpha in the traversal race (see traversal_race)
RACE_MARGIN = 1e-10


@njit(cache=True)
def sqdist(a, b):
    s = 0.0
    for k in range(a.shape[0]):
        t = a[k] - b[k]
        s += t * t
    return s


@njit(cache=True)
def dist(a, b):
    return math.sqrt(sqdist(a, b))


@njit(cache=True)
def point_segment_dist(p, a, b):
    dd = 0.0
    w = 0.0
    for k in range(p.shape[0]):
        s = b[k] - a[k]
        dd += s * s
        w += (p[k] - a[k]) * s
    if dd == 0.0:
        return dist(p, a)
    t = w / dd
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    s2 = 0.0
    for k in range(p.shape[0]):
        x = a[k] + t * (b[k] - a[k]) - p[k]
        s2 += x * x
    return math.sqrt(s2)


@njit(cache=True)
def free_interval(a, b, p, eps2):
    """Parameters t in [0, 1] with |a + t(b - a) - p|^2 <= eps2."""
    dd = 0.0
    w = 0.0
    for k in range(p.shape[0]):
        s = b[k] - a[k]
        dd += s * s
        w += (p[k] - a[k]) * s
    if dd == 0.0:
        # edge shorter than float resolution: treat it as a point
        if sqdist(a, p) <= eps2:
            return 0.0, 1.0
        return EMPTY, -1.0
    tc = w / dd
    perp2 = 0.0
    for k in range(p.shape[0]):
        x = a[k] + tc * (b[k] - a[k]) - p[k]
        perp2 += x * x
    rem = eps2 - perp2
    if rem < 0.0:
        if rem < -TANGENT_SLACK * eps2:
            return EMPTY, -1.0
        rem = 0.0
    h = math.sqrt(rem / dd)
    lo = tc - h
    hi = tc + h
    if lo < 0.0:
        lo = 0.0
    if hi > 1.0:
        hi = 1.0
    if lo > hi + PARAM_SLACK:
        return EMPTY, -1.0
    return lo, hi


@njit(cache=True)
def decide(P, Q, eps):
    """Free-space reachability: True iff the Frechet distance is <= eps."""
    n = P.shape[0]
    m = Q.shape[0]
    eps2 = eps * eps
    if sqdist(P[0], Q[0]) > eps2 or sqdist(P[n - 1], Q[m - 1]) > eps2:
        return False
    # reachable intervals on the left edges of the current column (one per Q segment)
    lr_lo = np.empty(m - 1)
    lr_hi = np.empty(m - 1)
    chain = True
    for j in range(m - 1):
        if chain:
            lo, hi = free_interval(Q[j], Q[j + 1], P[0], eps2)
            if lo <= PARAM_SLACK and lo <= hi + PARAM_SLACK:
                lr_lo[j] = 0.0
                lr_hi[j] = hi
                chain = hi >= 1.0 - PARAM_SLACK
            else:
                lr_lo[j] = EMPTY
                lr_hi[j] = -1.0
                chain = False
        else:
            lr_lo[j] = EMPTY
            lr_hi[j] = -1.0
    bottom_chain = True
    b_lo = EMPTY
    b_hi = -1.0
    for i in range(n - 1):
        # bottom boundary of cell (i, 0): reachable only along the diagram's lower edge
        if bottom_chain:
            lo, hi = free_interval(P[i], P[i + 1], Q[0], eps2)
            if lo <= PARAM_SLACK and lo <= hi + PARAM_SLACK:
                b_lo = 0.0
                b_hi = hi
                bottom_chain = hi >= 1.0 - PARAM_SLACK
            else:
                b_lo = EMPTY
                b_hi = -1.0
                bottom_chain = False
        else:
            b_lo = EMPTY
            b_hi = -1.0
        for j in range(m - 1):
            left_ok = lr_lo[j] <= 1.0
            bottom_ok = b_lo <= 1.0
            # right edge: P[i + 1] against Q segment j
            flo, fhi = free_interval(Q[j], Q[j + 1], P[i + 1], eps2)
            if flo > 1.0 or not (left_ok or bottom_ok):
                nlo = EMPTY
                nhi = -1.0
            elif bottom_ok:
                nlo = flo
                nhi = fhi
            else:
                nlo = max(flo, lr_lo[j])
                nhi = fhi
                if nlo > nhi + PARAM_SLACK:
                    nlo = EMPTY
                    nhi = -1.0
            # top edge: Q[j + 1] against P segment i
            tlo, thi = free_interval(P[i], P[i + 1], Q[j + 1], eps2)
            if tlo > 1.0 or not (left_ok or bottom_ok):
                b_lo = EMPTY
                b_hi = -1.0
            elif left_ok:
                b_lo = tlo
                b_hi = thi
            else:
                b_lo = max(tlo, b_lo)
                b_hi = thi
                if b_lo > b_hi + PARAM_SLACK:
                    b_lo = EMPTY
                    b_hi = -1.0
            lr_lo[j] = nlo
            lr_hi[j] = nhi
    return lr_lo[m - 2] <= 1.0 or b_lo <= 1.0


@njit(cache=True)
def critical_values(P, Q):
    """Candidate values for the exact distance (endpoint, vertex-edge, bisector-edge)."""
    n = P.shape[0]
    m = Q.shape[0]
    d = P.shape[1]
    cap = 2 + n * (m - 1) + m * (n - 1) + (n * (n - 1) // 2) * (m - 1) + (m * (m - 1) // 2) * (n - 1)
    out = np.empty(cap)
    c = 0
    out[c] = dist(P[0], Q[0])
    c += 1
    out[c] = dist(P[n - 1], Q[m - 1])
    c += 1
    for side in range(2):
        A = P if side == 0 else Q
        B = Q if side == 0 else P
        na = A.shape[0]
        nb = B.shape[0]
        for j in range(nb - 1):
            a = B[j]
            b = B[j + 1]
            for i in range(na):
                out[c] = point_segment_dist(A[i], a, b)
                c += 1
        for j in range(nb - 1):
            a = B[j]
            b = B[j + 1]
            for k in range(na - 1):
                for l in range(k + 1, na):
                    # point of segment ab equidistant from A[k] and A[l]
                    num = 0.0
                    den = 0.0
                    for t in range(d):
                        w = A[l, t] - A[k, t]
                        mid = 0.5 * (A[l, t] + A[k, t])
                        num += (mid - a[t]) * w
                        den += (b[t] - a[t]) * w
                    if den == 0.0:
                        continue
                    s = num / den
                    if s < 0.0 or s > 1.0:
                        continue
                    r2 = 0.0
                    for t in range(d):
                        x = a[t] + s * (b[t] - a[t]) - A[k, t]
                        r2 += x * x
                    out[c] = math.sqrt(r2)
                    c += 1
    return out[:c]


@njit(cache=True)
def search_sorted_values(P, Q, vals):
    """Smallest entry of the sorted array vals for which decide holds.

    Candidates are computed in floating point and can land an ulp below the
    value they stand for, so each one is tested with a relative nudge.
    """
    lo = 0
    hi = vals.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if decide(P, Q, vals[mid] * (1.0 + CRITICAL_NUDGE)):
            hi = mid
        else:
            lo = mid + 1
    v = vals[lo]
    if decide(P, Q, v):
        return v
    return v * (1.0 + CRITICAL_NUDGE)


@njit(cache=True)
def bisect_decide(P, Q, lo, hi, tol):
    """Shrink [lo, hi] around the distance; decide(hi) is assumed true."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if decide(P, Q, mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


@njit(cache=True)
def discrete_frechet(P, Q):
    n = P.shape[0]
    m = Q.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    prev[0] = dist(P[0], Q[0])
    for j in range(1, m):
        prev[j] = max(prev[j - 1], dist(P[0], Q[j]))
    for i in range(1, n):
        cur[0] = max(prev[0], dist(P[i], Q[0]))
        for j in range(1, m):
            best = min(prev[j], prev[j - 1], cur[j - 1])
            cur[j] = max(best, dist(P[i], Q[j]))
        prev, cur = cur, prev
    return prev[m - 1]


# ---------------------------------------------------------------------------
# bounds


@njit(cache=True)
def _gap(alo, ahi, blo, bhi):
    if ahi < blo:
        return blo - ahi
    if bhi < alo:
        return alo - bhi
    return 0.0


@njit(cache=True)
def box_facet_lb(plo, phi, qlo, qhi):
    """Max distance between corresponding axis-orthogonal faces of two boxes."""
    d = plo.shape[0]
    best = 0.0
    for i in range(d):
        rest = 0.0
        for k in range(d):
            if k != i:
                g = _gap(plo[k], phi[k], qlo[k], qhi[k])
                rest += g * g
        a = plo[i] - qlo[i]
        b = phi[i] - qhi[i]
        v = math.sqrt(a * a + rest)
        if v > best:
            best = v
        v = math.sqrt(b * b + rest)
        if v > best:
            best = v
    return best


@njit(cache=True)
def box_coord_lb(plo, phi, qlo, qhi):
    best = 0.0
    for i in range(plo.shape[0]):
        a = abs(plo[i] - qlo[i])
        b = abs(phi[i] - qhi[i])
        if a > best:
            best = a
        if b > best:
            best = b
    return best


@njit(cache=True)
def box_corner_ub(plo, phi, qlo, qhi):
    """Largest distance between any corner of one box and any corner of the other."""
    s = 0.0
    for i in range(plo.shape[0]):
        a = max(abs(phi[i] - qlo[i]), abs(qhi[i] - plo[i]))
        s += a * a
    return math.sqrt(s)


@njit(cache=True)
def joint_box_ub(plo, phi, qlo, qhi):
    s = 0.0
    for i in range(plo.shape[0]):
        a = max(phi[i], qhi[i]) - min(plo[i], qlo[i])
        s += a * a
    return math.sqrt(s)


@njit(cache=True)
def lb_bb_kernel(plo, phi, qlo, qhi, prot, qrot):
    """prot/qrot: (r, 2, d) rotated boxes (r = 0 when unused)."""
    d = plo.shape[0]
    if d > 3:
        return box_coord_lb(plo, phi, qlo, qhi)
    best = box_facet_lb(plo, phi, qlo, qhi)
    for r in range(prot.shape[0]):
        v = box_facet_lb(prot[r, 0], prot[r, 1], qrot[r, 0], qrot[r, 1])
        if v > best:
            best = v
    return best


@njit(cache=True)
def ub_bb_kernel(plo, phi, qlo, qhi, prot, qrot):
    d = plo.shape[0]
    if d > 2:
        return joint_box_ub(plo, phi, qlo, qhi)
    best = box_corner_ub(plo, phi, qlo, qhi)
    for r in range(prot.shape[0]):
        v = box_corner_ub(prot[r, 0], prot[r, 1], qrot[r, 0], qrot[r, 1])
        if v < best:
            best = v
    return best


@njit(cache=True)
def adf_forward(P, Q):
    n = P.shape[0]
    m = Q.shape[0]
    i = 0
    j = 0
    worst = dist(P[0], Q[0])
    while i < n - 1 or j < m - 1:
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        else:
            dd = dist(P[i + 1], Q[j + 1])
            di = dist(P[i + 1], Q[j])
            dj = dist(P[i], Q[j + 1])
            if dd <= di and dd <= dj:
                i += 1
                j += 1
            elif di < dj:
                i += 1
            elif dj < di:
                j += 1
            elif n - 1 - i >= m - 1 - j:
                i += 1
            else:
                j += 1
        v = dist(P[i], Q[j])
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def adf_reverse(P, Q):
    n = P.shape[0]
    m = Q.shape[0]
    i = n - 1
    j = m - 1
    worst = dist(P[i], Q[j])
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            dd = dist(P[i - 1], Q[j - 1])
            di = dist(P[i - 1], Q[j])
            dj = dist(P[i], Q[j - 1])
            if dd <= di and dd <= dj:
                i -= 1
                j -= 1
            elif di < dj:
                i -= 1
            elif dj < di:
                j -= 1
            elif i >= j:
                i -= 1
            else:
                j -= 1
        v = dist(P[i], Q[j])
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def adf_diagonal(P, Q):
    n = P.shape[0]
    m = Q.shape[0]
    worst = dist(P[0], Q[0])
    if n >= m:
        for i in range(2, n + 1):
            j = -(-(m * i) // n)
            v = dist(P[i - 1], Q[j - 1])
            if v > worst:
                worst = v
    else:
        for j in range(2, m + 1):
            i = -(-(n * j) // m)
            v = dist(P[i - 1], Q[j - 1])
            if v > worst:
                worst = v
    return worst


@njit(cache=True)
def traversal_race(P, Q, alpha):
    """One orientation: True proves alpha < distance."""
    n = P.shape[0]
    m = Q.shape[0]
    # decide() tolerates tangencies and parameter round-off, so it can accept an eps a few
    # 1e-12 (relative) below the true distance; the race keeps a wider margin so a proof
    # here never contradicts a positive decision
    alpha = alpha * (1.0 + RACE_MARGIN)
    i = 0
    e = 0
    # edges 0 and m are the degenerate q_1q_1 and q_mq_m
    while i < n:
        if e > m:
            return True
        if e == 0:
            dv = dist(P[i], Q[0])
        elif e == m:
            dv = dist(P[i], Q[m - 1])
        else:
            dv = point_segment_dist(P[i], Q[e - 1], Q[e])
        if dv <= alpha:
            i += 1
        else:
            e += 1
    return False


@njit(cache=True)
def lb_tr_kernel(P, Q, alpha):
    return traversal_race(P, Q, alpha) or traversal_race(Q, P, alpha)


@njit(cache=True)
def ub_adf_kernel(P, Q):
    a = adf_forward(P, Q)
    b = adf_reverse(P, Q)
    c = adf_diagonal(P, Q)
    return min(a, b, c)


@njit(cache=True)
def lb_group_kernel(ps, pe, plo, phi, prot, pst_lo, pst_hi,
                    qs, qe, qlo, qhi, qrot, qst_lo, qst_hi):
    sev = max(dist(ps, qs), dist(pe, qe))
    bb = lb_bb_kernel(plo, phi, qlo, qhi, prot, qrot)
    st = max(pst_lo - qst_hi, qst_lo - pst_hi)
    st = max(0.0, 0.5 * st)
    # box and stabbing arithmetic can round a few ulps past the distance itself
    return max(sev, (bb if bb > st else st) * (1.0 - BOUND_ROUNDING))


@njit(cache=True)
def lb_group_batch(ids, starts, ends, los, his, rots, st_lo, st_hi,
                   qs, qe, qlo, qhi, qrot, qst_lo, qst_hi):
    out = np.empty(ids.shape[0])
    for t in range(ids.shape[0]):
        i = ids[t]
        out[t] = lb_group_kernel(starts[i], ends[i], los[i], his[i], rots[i], st_lo[i], st_hi[i],
                                 qs, qe, qlo, qhi, qrot, qst_lo, qst_hi)
    return out


@njit(cache=True)
def ub_group_kernel(P, Q, plo, phi, prot, qlo, qhi, qrot):
    ub = min(ub_bb_kernel(plo, phi, qlo, qhi, prot, qrot) * (1.0 + BOUND_ROUNDING), ub_adf_kernel(P, Q))
    # the endpoint distance is a lower bound; box corners can round one ulp below it
    sev = max(dist(P[0], Q[0]), dist(P[P.shape[0] - 1], Q[Q.shape[0] - 1]))
    return max(ub, sev)


@njit(cache=True)
def ub_group_batch(ids, verts, offs, los, his, rots, Q, qlo, qhi, qrot):
    out = np.empty(ids.shape[0])
    for t in range(ids.shape[0]):
        i = ids[t]
        P = verts[offs[i]:offs[i + 1]]
        out[t] = ub_group_kernel(P, Q, los[i], his[i], rots[i], qlo, qhi, qrot)
    return out
