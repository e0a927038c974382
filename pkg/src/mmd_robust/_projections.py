"""Compiled inner loops for the LFD solver (simplex / ellipsoid / Dykstra)."""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def simplex_proj(v):
    n = v.size
    u = np.sort(v)[::-1]
    css = 0.0
    tau = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] > t:
            tau = t
    out = np.empty(n)
    for i in range(n):
        d = v[i] - tau
        out[i] = d if d > 0.0 else 0.0
    return out


@njit(**_JIT)
def quad(p, K, b, c):
    return p @ (K @ p) - 2.0 * (b @ p) + c


@njit(**_JIT)
def ellipsoid_proj(v, K, U, lam, bt, b, c, target):
    if quad(v, K, b, c) <= target:
        return v.copy()
    vt = U.T @ v
    n = v.size
    x = vt.copy()
    t = 0.0
    tol = 1e-15 * max(1.0, target)
    for _ in range(300):
        g = c - target
        for j in range(n):
            x[j] = (vt[j] + t * bt[j]) / (1.0 + t * lam[j])
            g += lam[j] * x[j] * x[j] - 2.0 * bt[j] * x[j]
        if g <= tol:
            break
        dg = 0.0
        for j in range(n):
            den = 1.0 + t * lam[j]
            dg += 2.0 * (lam[j] * x[j] - bt[j]) * (bt[j] - lam[j] * vt[j]) / (den * den)
        if dg >= 0.0:
            break
        t_new = t - g / dg
        if not t_new > t or t_new > 1e30:
            break
        small = (t_new - t) <= 1e-15 * t_new
        t = t_new
        if small:
            for j in range(n):
                x[j] = (vt[j] + t * bt[j]) / (1.0 + t * lam[j])
            break
    return U @ x


@njit(**_JIT)
def pull_inside(y, anchor, K, b, c, target):
    qy = quad(y, K, b, c)
    if qy <= target:
        return y
    d = anchor - y
    Kd = K @ d
    A = d @ Kd
    B = 2.0 * ((K @ y - b) @ d)
    C = qy - target
    if A <= 0.0:
        s = 1.0
        if B < 0.0:
            s = min(1.0, -C / B)
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            disc = 0.0
        s = (-B - math.sqrt(disc)) / (2.0 * A)
        if not (0.0 <= s <= 1.0):
            s = 1.0
    out = y + s * d
    tot = 0.0
    for i in range(out.size):
        if out[i] < 0.0:
            out[i] = 0.0
        tot += out[i]
    return out / tot


@njit(**_JIT)
def ball_simplex_proj(v, K, U, lam, bt, b, c, target, anchor, iters):
    """Dykstra between the simplex and the ellipsoid, then pulled strictly inside."""
    y = simplex_proj(v)
    if quad(y, K, b, c) <= target:
        return y
    x = v.copy()
    p = np.zeros_like(x)
    r = np.zeros_like(x)
    for _ in range(iters):
        y = simplex_proj(x + p)
        p = x + p - y
        x_new = ellipsoid_proj(y + r, K, U, lam, bt, b, c, target)
        r = y + r - x_new
        step = np.max(np.abs(x_new - x))
        x = x_new
        if step < 1e-12 and np.max(np.abs(y - x)) < 1e-10:
            break
    y = simplex_proj(x)
    return pull_inside(y, anchor, K, b, c, target)


@njit(**_JIT)
def subgradient_ascent(p0, p1,
                       K0, U0, lam0, bt0, b0, c0, tgt0, a0,
                       K1, U1, lam1, bt1, b1, c1, tgt1, a1,
                       step_c, max_iters, patience, tol, dykstra_iters, trace_every):
    n = p0.size
    best_val = 0.0
    for i in range(n):
        best_val += min(p0[i], p1[i])
    best_val *= 0.5
    best0 = p0.copy()
    best1 = p1.copy()
    ntrace = max_iters // trace_every + 1
    trace = np.empty(ntrace)
    trace[0] = best_val
    k = 1
    ref = best_val
    last_gain = 0
    converged = False
    d0 = np.empty(n)
    d1 = np.empty(n)
    t = 0
    for t in range(1, max_iters + 1):
        step = step_c / math.sqrt(t)
        for i in range(n):
            if p0[i] <= p1[i]:
                d0[i] = step
                d1[i] = 0.0
            else:
                d0[i] = 0.0
                d1[i] = step
        p0 = ball_simplex_proj(p0 + d0, K0, U0, lam0, bt0, b0, c0, tgt0, a0, dykstra_iters)
        p1 = ball_simplex_proj(p1 + d1, K1, U1, lam1, bt1, b1, c1, tgt1, a1, dykstra_iters)
        val = 0.0
        for i in range(n):
            val += min(p0[i], p1[i])
        val *= 0.5
        if val > best_val:
            best_val = val
            best0[:] = p0
            best1[:] = p1
        if best_val - ref > tol:
            ref = best_val
            last_gain = t
        if t % trace_every == 0 and k < ntrace:
            trace[k] = best_val
            k += 1
        if t - last_gain >= patience:
            converged = True
            break
    return best0, best1, best_val, t, converged, trace[:k]


@njit(**_JIT)
def minimise_quad(K, b, c, lipschitz, iters):
    """FISTA with adaptive restart for ``min q`` over the simplex."""
    n = b.size
    step = 1.0 / lipschitz
    x = np.full(n, 1.0 / n)
    y = x.copy()
    tk = 1.0
    fx = quad(x, K, b, c)
    for _ in range(iters):
        grad = 2.0 * (K @ y - b)
        x_new = simplex_proj(y - step * grad)
        f_new = quad(x_new, K, b, c)
        if f_new > fx:
            tk = 1.0
            y = x.copy()
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / t_new) * (x_new - x)
        done = np.max(np.abs(x_new - x)) < 1e-13
        x = x_new
        fx = f_new
        tk = t_new
        if done:
            break
    return x
