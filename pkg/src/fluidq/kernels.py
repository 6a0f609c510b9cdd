"""History-dependent time-stepping kernels.

Each kernel exists twice: an explicit-loop version compiled by numba and a
numpy version that vectorizes the inner convolution.  Both consume the same
precomputed cell integrals and return the same arrays; ``backend`` picks one
(default from :mod:`fluidq._accel`).

Index conventions shared by the fluid kernels (``n`` steps of width ``dt``):

* ``A1[m] = I(m dt) - I((m-1) dt)`` and ``Ah[m] = G(m dt) - G((m-1) dt)`` for
  the service law, ``m = 1..n`` (``A1[0] = Ah[0] = 0``);
* ``thm[j]``, ``thh[j]``: mass and hazard integral of the initial age
  measure after shifting by ``t_j``;
* ``k[j]`` is the entry rate on ``[t_j, t_{j+1})``.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, njit, resolve

# single-class fluid


def _cell_partial_py(I0, I1, G0, G1, h, target):
    """``G(a) - G0`` where ``I(a) - I0 = target`` inside one patience cell.

    ``I`` is taken as the cubic Hermite interpolant with slopes ``1 - G`` at
    both ends, so the inverse is third-order accurate rather than linear.
    """
    delta = I1 - I0
    if delta <= 0.0 or target <= 0.0:
        return 0.0
    if target >= delta:
        return G1 - G0
    s0 = 1.0 - G0
    s1 = 1.0 - G1
    c2 = (3.0 * delta / h - 2.0 * s0 - s1) / h
    c3 = (s0 + s1 - 2.0 * delta / h) / (h * h)
    x = h * target / delta
    for _ in range(8):
        f = x * (s0 + x * (c2 + x * c3)) - target
        df = s0 + x * (2.0 * c2 + 3.0 * c3 * x)
        if df <= 0.0:
            break
        step = f / df
        x = min(max(x - step, 0.0), h)
        if abs(step) < 1e-15 * h:
            break
    slope = s0 + x * (2.0 * c2 + 3.0 * c3 * x)
    dg = s0 - slope
    lin = (G1 - G0) * target / delta
    if not (0.0 <= dg <= G1 - G0) or slope <= 0.0:
        return lin
    return dg


_cell_partial = njit(_cell_partial_py)


def _renege_generic_loop(Q, j, lam, h, Ir, Gr, w_eta, tail):
    if Q <= 0.0:
        return 0.0
    P = Ir.shape[0] - 1
    newmass = lam * Ir[j]
    if Q <= newmass:
        target = Q / lam
        lo = 0
        hi = j
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if Ir[mid] <= target:
                lo = mid
            else:
                hi = mid
        part = _cell_partial(Ir[lo], Ir[lo + 1], Gr[lo], Gr[lo + 1], h, target - Ir[lo])
        return lam * (Gr[lo] + part)
    rate = lam * Gr[j]
    rem = Q - newmass
    M = w_eta.shape[0]
    p = j
    while p < P:
        w = w_eta[p - j] if p - j < M else tail
        c = w * (Ir[p + 1] - Ir[p])
        dg = w * (Gr[p + 1] - Gr[p])
        if c >= rem and c > 0.0:
            return rate + w * _cell_partial(Ir[p], Ir[p + 1], Gr[p], Gr[p + 1], h, rem / w)
        rate += dg
        rem -= c
        p += 1
    return rate


def _fluid_loop(n, dt, lam, B0, Q0, A1, Ah, thm, thh, exp_rate, Ir, Gr, w_eta, tail,
                override, use_override):
    B = np.empty(n + 1)
    Q = np.empty(n + 1)
    K = np.zeros(n + 1)
    D = np.zeros(n + 1)
    R = np.zeros(n + 1)
    k = np.zeros(n)
    dep = np.empty(n + 1)
    ren = np.empty(n + 1)
    B[0] = B0
    Q[0] = Q0
    bad = -1
    for j in range(n):
        sh = thh[j]
        sm = thm[j + 1]
        for i in range(j):
            sh += k[i] * Ah[j - i]
            sm += k[i] * A1[j + 1 - i]
        dep[j] = sh
        if use_override:
            rj = override[j]
        elif exp_rate >= 0.0:
            rj = exp_rate * Q[j]
        else:
            rj = _renege_generic(Q[j], j, lam, dt, Ir, Gr, w_eta, tail)
        ren[j] = rj
        dR = min(rj * dt, Q[j])
        avail = Q[j] + lam * dt - dR
        fill = (1.0 - sm) * dt / A1[1]
        dK = min(max(fill, 0.0), avail)
        k[j] = dK / dt
        B[j + 1] = sm + k[j] * A1[1]
        Q[j + 1] = avail - dK
        K[j + 1] = K[j] + dK
        R[j + 1] = R[j] + dR
        D[j + 1] = D[j] + B[j] - B[j + 1] + dK
        if not (math.isfinite(B[j + 1]) and math.isfinite(Q[j + 1]) and math.isfinite(D[j + 1])):
            bad = j
            break
    sh = thh[n]
    for i in range(n):
        sh += k[i] * Ah[n - i]
    dep[n] = sh
    if use_override:
        ren[n] = override[n]
    elif exp_rate >= 0.0:
        ren[n] = exp_rate * Q[n]
    else:
        ren[n] = _renege_generic(Q[n], n, lam, dt, Ir, Gr, w_eta, tail)
    return B, Q, K, D, R, k, dep, ren, bad


def _renege_generic_np(Q, j, lam, h, Ir, Gr, w_eta, tail):
    if Q <= 0.0:
        return 0.0
    newmass = lam * Ir[j]
    if Q <= newmass:
        target = Q / lam
        lo = int(np.searchsorted(Ir[: j + 1], target, side="right")) - 1
        lo = min(max(lo, 0), j - 1)
        part = _cell_partial_py(Ir[lo], Ir[lo + 1], Gr[lo], Gr[lo + 1], h, target - Ir[lo])
        return lam * (Gr[lo] + part)
    rem = Q - newmass
    cnt = len(Ir) - 1 - j
    w = np.full(cnt, tail)
    m = min(len(w_eta), cnt)
    w[:m] = w_eta[:m]
    c = w * np.diff(Ir[j:])
    dg = w * np.diff(Gr[j:])
    cum = np.cumsum(c)
    p = int(np.searchsorted(cum, rem, side="left"))
    # skip zero-mass cells that tie with the running total
    while p < cnt and c[p] <= 0.0:
        p += 1
    if p >= cnt:
        return lam * Gr[j] + float(dg.sum())
    before = cum[p - 1] if p > 0 else 0.0
    q = j + p
    part = _cell_partial_py(Ir[q], Ir[q + 1], Gr[q], Gr[q + 1], h, (rem - before) / w[p])
    return lam * Gr[j] + float(dg[:p].sum()) + w[p] * part


def _fluid_numpy(n, dt, lam, B0, Q0, A1, Ah, thm, thh, exp_rate, Ir, Gr, w_eta, tail,
                 override, use_override):
    B = np.empty(n + 1)
    Q = np.empty(n + 1)
    K = np.zeros(n + 1)
    D = np.zeros(n + 1)
    R = np.zeros(n + 1)
    k = np.zeros(n)
    dep = np.empty(n + 1)
    ren = np.empty(n + 1)
    B[0] = B0
    Q[0] = Q0
    A1r = np.ascontiguousarray(A1[::-1])
    Ahr = np.ascontiguousarray(Ah[::-1])
    bad = -1

    def renege(q, j):
        if use_override:
            return override[j]
        if exp_rate >= 0.0:
            return exp_rate * q
        return _renege_generic_np(q, j, lam, dt, Ir, Gr, w_eta, tail)

    for j in range(n):
        kj = k[:j]
        sh = thh[j] + float(np.dot(kj, Ahr[n - j : n]))
        sm = thm[j + 1] + float(np.dot(kj, A1r[n - j - 1 : n - 1]))
        dep[j] = sh
        rj = renege(Q[j], j)
        ren[j] = rj
        dR = min(rj * dt, Q[j])
        avail = Q[j] + lam * dt - dR
        fill = (1.0 - sm) * dt / A1[1]
        dK = min(max(fill, 0.0), avail)
        k[j] = dK / dt
        B[j + 1] = sm + k[j] * A1[1]
        Q[j + 1] = avail - dK
        K[j + 1] = K[j] + dK
        R[j + 1] = R[j] + dR
        D[j + 1] = D[j] + B[j] - B[j + 1] + dK
        if not (np.isfinite(B[j + 1]) and np.isfinite(Q[j + 1]) and np.isfinite(D[j + 1])):
            bad = j
            break
    dep[n] = thh[n] + float(np.dot(k, Ahr[0:n]))
    ren[n] = renege(Q[n], n)
    return B, Q, K, D, R, k, dep, ren, bad


# multiclass fluid (exponential reneging, common service law)


def _multiclass_loop(n, dt, lam, theta, B0, Q0, A1, Ah, thm, thh):
    J = lam.shape[0]
    B = np.empty((J, n + 1))
    Q = np.empty((J, n + 1))
    K = np.zeros((J, n + 1))
    D = np.zeros((J, n + 1))
    R = np.zeros((J, n + 1))
    k = np.zeros((J, n))
    dep = np.empty((J, n + 1))
    C = np.empty(J)
    for c in range(J):
        B[c, 0] = B0[c]
        Q[c, 0] = Q0[c]
    bad = -1
    for j in range(n):
        ctot = 0.0
        for c in range(J):
            sh = thh[c, j]
            sm = thm[c, j + 1]
            for i in range(j):
                sh += k[c, i] * Ah[j - i]
                sm += k[c, i] * A1[j + 1 - i]
            dep[c, j] = sh
            C[c] = sm
            ctot += sm
        remaining = max((1.0 - ctot) * dt / A1[1], 0.0)
        for c in range(J):
            q = Q[c, j]
            dR = min(theta[c] * q * dt, q)
            avail = q + lam[c] * dt - dR
            dK = min(remaining, avail)
            remaining -= dK
            k[c, j] = dK / dt
            B[c, j + 1] = C[c] + k[c, j] * A1[1]
            Q[c, j + 1] = avail - dK
            K[c, j + 1] = K[c, j] + dK
            R[c, j + 1] = R[c, j] + dR
            D[c, j + 1] = D[c, j] + B[c, j] - B[c, j + 1] + dK
            if not (math.isfinite(B[c, j + 1]) and math.isfinite(Q[c, j + 1])):
                bad = j
        if bad >= 0:
            break
    for c in range(J):
        sh = thh[c, n]
        for i in range(n):
            sh += k[c, i] * Ah[n - i]
        dep[c, n] = sh
    return B, Q, K, D, R, k, dep, bad


def _multiclass_numpy(n, dt, lam, theta, B0, Q0, A1, Ah, thm, thh):
    J = lam.shape[0]
    B = np.empty((J, n + 1))
    Q = np.empty((J, n + 1))
    K = np.zeros((J, n + 1))
    D = np.zeros((J, n + 1))
    R = np.zeros((J, n + 1))
    k = np.zeros((J, n))
    dep = np.empty((J, n + 1))
    B[:, 0] = B0
    Q[:, 0] = Q0
    A1r = np.ascontiguousarray(A1[::-1])
    Ahr = np.ascontiguousarray(Ah[::-1])
    bad = -1
    for j in range(n):
        kj = k[:, :j]
        dep[:, j] = thh[:, j] + kj @ Ahr[n - j : n]
        C = thm[:, j + 1] + kj @ A1r[n - j - 1 : n - 1]
        remaining = max((1.0 - C.sum()) * dt / A1[1], 0.0)
        q = Q[:, j]
        dR = np.minimum(theta * q * dt, q)
        avail = q + lam * dt - dR
        for c in range(J):
            dK = min(remaining, avail[c])
            remaining -= dK
            k[c, j] = dK / dt
        dK = k[:, j] * dt
        B[:, j + 1] = C + k[:, j] * A1[1]
        Q[:, j + 1] = avail - dK
        K[:, j + 1] = K[:, j] + dK
        R[:, j + 1] = R[:, j] + dR
        D[:, j + 1] = D[:, j] + B[:, j] - B[:, j + 1] + dK
        if not (np.all(np.isfinite(B[:, j + 1])) and np.all(np.isfinite(Q[:, j + 1]))):
            bad = j
            break
    dep[:, n] = thh[:, n] + k @ Ahr[0:n]
    return B, Q, K, D, R, k, dep, bad


# renewal function by product integration


def _renewal_loop(G, alpha, beta):
    n = G.shape[0] - 1
    U = np.zeros(n + 1)
    denom = 1.0 - alpha[1]
    for t in range(1, n + 1):
        s = G[t] + beta[1] * U[t - 1]
        for m in range(2, t + 1):
            s += alpha[m] * U[t - m + 1] + beta[m] * U[t - m]
        U[t] = s / denom
    return U


def _renewal_numpy(G, alpha, beta):
    n = G.shape[0] - 1
    U = np.zeros(n + 1)
    denom = 1.0 - alpha[1]
    Ur = np.zeros(n + 1)  # Ur[n - i] = U[i], filled as we go
    for t in range(1, n + 1):
        # sum_{m=2..t} alpha[m] U[t-m+1] + beta[m] U[t-m]
        s = G[t] + beta[1] * U[t - 1]
        if t >= 2:
            s += float(np.dot(alpha[2 : t + 1], Ur[n - t + 1 : n]))
            s += float(np.dot(beta[2 : t + 1], Ur[n - t + 2 : n + 1]))
        U[t] = s / denom
        Ur[n - t] = U[t]
    return U


if HAVE_NUMBA:
    _renege_generic = njit(_renege_generic_loop)
    _fluid_jit = njit(_fluid_loop)
    _multiclass_jit = njit(_multiclass_loop)
    _renewal_jit = njit(_renewal_loop)
else:  # pragma: no cover
    _renege_generic = _renege_generic_loop
    _fluid_jit = _multiclass_jit = _renewal_jit = None


def fluid_kernel(*args, backend=None):
    if resolve(backend) == "numba":
        return _fluid_jit(*args)
    return _fluid_numpy(*args)


def multiclass_kernel(*args, backend=None):
    if resolve(backend) == "numba":
        return _multiclass_jit(*args)
    return _multiclass_numpy(*args)


def renewal_kernel(G, alpha, beta, backend=None):
    if resolve(backend) == "numba":
        return _renewal_jit(G, alpha, beta)
    return _renewal_numpy(G, alpha, beta)
