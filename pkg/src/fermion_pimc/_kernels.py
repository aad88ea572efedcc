"""Compiled per-sample kernels.

Conventions shared by all kernels:

* ``x0`` has shape ``(n, d)``; ``bridge`` has shape ``(n, M+1, d)`` and holds
  standard unit-interval bridges (zero at both ends).
* Path of particle ``k`` towards endpoint ``ell`` at node ``m``:
  ``sqrt(beta) * bridge[k, m] + (1 - s) * x0[k] + s * x0[ell]`` with ``s = m / M``.
* Quadrature is the trapezoid rule on the unit interval; the physical
  integral over ``[0, beta]`` contributes the extra factor ``beta``.
* The external potential is ``sum_c omega_sq[c] y_c^2 / 2 + quartic |y|^4
  - sum_j Z_j / |y - X_j|``.
* A return value of ``False`` (or a flag of 1) marks a degenerate sample,
  i.e. a Coulomb distance below ``SINGULAR``.
"""

import math

import numpy as np
from numba import njit

SINGULAR = 1e-12
COND_LIMIT = 1e12


@njit(cache=True, inline="always")
def _node_weight(m, steps):
    if m == 0 or m == steps:
        return 0.5 / steps
    return 1.0 / steps


@njit(cache=True)
def external_value_grad_dot(y, direction, omega_sq, quartic, nuc_pos, nuc_z):
    """External potential at ``y`` and its gradient dotted with ``direction``."""
    d = y.shape[0]
    r2 = 0.0
    value = 0.0
    gdot = 0.0
    ydot = 0.0
    for c in range(d):
        r2 += y[c] * y[c]
        value += 0.5 * omega_sq[c] * y[c] * y[c]
        gdot += omega_sq[c] * y[c] * direction[c]
        ydot += y[c] * direction[c]
    if quartic != 0.0:
        value += quartic * r2 * r2
        gdot += 4.0 * quartic * r2 * ydot
    for j in range(nuc_z.shape[0]):
        q2 = 0.0
        qdot = 0.0
        for c in range(d):
            diff = y[c] - nuc_pos[j, c]
            q2 += diff * diff
            qdot += diff * direction[c]
        q = math.sqrt(q2)
        if q < SINGULAR:
            return value, gdot, False
        value -= nuc_z[j] / q
        gdot += nuc_z[j] * qdot / (q2 * q)
    return value, gdot, True


@njit(cache=True)
def entry_logs(x0, bridge, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling, logw, dlogw):
    """Fill ``log W`` and ``d/dbeta log W`` for one sample; False if degenerate."""
    n, d = x0.shape
    steps = bridge.shape[1] - 1
    sb = math.sqrt(beta)
    y = np.empty(d)
    direction = np.empty(d)
    for k in range(n):
        for ell in range(n):
            r2 = 0.0
            for c in range(d):
                t = x0[k, c] - x0[ell, c]
                r2 += t * t
            gam = 0.0
            dgam = 0.0
            for m in range(steps + 1):
                s = m / steps
                for c in range(d):
                    y[c] = sb * bridge[k, m, c] + (1.0 - s) * x0[k, c] + s * x0[ell, c]
                    direction[c] = bridge[k, m, c]
                v, gd, ok = external_value_grad_dot(y, direction, omega_sq, quartic, nuc_pos, nuc_z)
                if not ok:
                    return False
                if coupling != 0.0:
                    for j in range(n):
                        if j == k:
                            continue
                        nu = k if j == ell else j
                        p2 = 0.0
                        pdot = 0.0
                        for c in range(d):
                            z = sb * bridge[j, m, c] + (1.0 - s) * x0[j, c] + s * x0[nu, c]
                            diff = y[c] - z
                            p2 += diff * diff
                            pdot += diff * (bridge[k, m, c] - bridge[j, m, c])
                        p = math.sqrt(p2)
                        if p < SINGULAR:
                            return False
                        v += 0.5 * coupling / p
                        gd -= 0.5 * coupling * pdot / (p2 * p)
                w = _node_weight(m, steps)
                gam += w * v
                dgam += w * (v + 0.5 * sb * gd)
            logw[k, ell] = -r2 / (2.0 * beta) - beta * gam
            dlogw[k, ell] = r2 / (2.0 * beta * beta) - dgam
    return True


@njit(cache=True)
def harmonic_entry_logs(x0, bridge, beta, omega_sq, logw, dlogw):
    """Same quadrature as :func:`entry_logs` for a pure (anisotropic) trap.

    The trapezoid sum of ``|y|^2`` along each path is expanded into
    per-particle bridge moments, so the cost is O(n M d + n^2 d).
    """
    n, d = x0.shape
    steps = bridge.shape[1] - 1
    sb = math.sqrt(beta)
    s_bb = np.zeros((n, d))
    s_b0 = np.zeros((n, d))
    s_b1 = np.zeros((n, d))
    t00 = 0.0
    t01 = 0.0
    t11 = 0.0
    for m in range(steps + 1):
        s = m / steps
        w = _node_weight(m, steps)
        t00 += w * (1.0 - s) * (1.0 - s)
        t01 += w * s * (1.0 - s)
        t11 += w * s * s
        for k in range(n):
            for c in range(d):
                bv = bridge[k, m, c]
                s_bb[k, c] += w * bv * bv
                s_b0[k, c] += w * (1.0 - s) * bv
                s_b1[k, c] += w * s * bv
    for k in range(n):
        for ell in range(n):
            r2 = 0.0
            yy = 0.0
            yb = 0.0
            for c in range(d):
                a = x0[k, c]
                b = x0[ell, c]
                t = a - b
                r2 += t * t
                sq = (beta * s_bb[k, c] + 2.0 * sb * (a * s_b0[k, c] + b * s_b1[k, c])
                      + a * a * t00 + 2.0 * a * b * t01 + b * b * t11)
                yy += omega_sq[c] * sq
                yb += omega_sq[c] * (sb * s_bb[k, c] + a * s_b0[k, c] + b * s_b1[k, c])
            gam = 0.5 * yy
            dgam = gam + 0.5 * sb * yb
            logw[k, ell] = -r2 / (2.0 * beta) - beta * gam
            dlogw[k, ell] = r2 / (2.0 * beta * beta) - dgam
    return True


@njit(cache=True)
def any_entry_logs(x0, bridge, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling, logw, dlogw):
    """Dispatch to the trap-only expansion when it applies."""
    if coupling == 0.0 and quartic == 0.0 and nuc_z.shape[0] == 0:
        return harmonic_entry_logs(x0, bridge, beta, omega_sq, logw, dlogw)
    return entry_logs(x0, bridge, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling, logw, dlogw)


@njit(cache=True)
def unit_bridges(increments, out):
    """Bridges ``W(s_m) - s_m W(1)`` from unit normals of shape ``(B, n, M, d)``.

    ``out`` has shape ``(B, n, M+1, d)``; both endpoints are set to exactly 0.
    """
    count, n, steps, d = increments.shape
    scale = math.sqrt(1.0 / steps)
    for i in range(count):
        for k in range(n):
            for c in range(d):
                acc = 0.0
                out[i, k, 0, c] = 0.0
                for m in range(steps):
                    acc += increments[i, k, m, c]
                    out[i, k, m + 1, c] = acc * scale
                end = out[i, k, steps, c]
                for m in range(1, steps):
                    out[i, k, m, c] -= (m / steps) * end
                out[i, k, steps, c] = 0.0


@njit(cache=True)
def lu_factor(a):
    """In-place partial-pivot LU. Returns (perm, sign, singular)."""
    n = a.shape[0]
    perm = np.arange(n)
    sign = 1.0
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best == 0.0:
            return perm, sign, True
        if piv != col:
            for c in range(n):
                tmp = a[col, c]
                a[col, c] = a[piv, c]
                a[piv, c] = tmp
            tmp_i = perm[col]
            perm[col] = perm[piv]
            perm[piv] = tmp_i
            sign = -sign
        inv = 1.0 / a[col, col]
        for r in range(col + 1, n):
            f = a[r, col] * inv
            a[r, col] = f
            if f != 0.0:
                for c in range(col + 1, n):
                    a[r, c] -= f * a[col, c]
    return perm, sign, False


@njit(cache=True)
def lu_det(w):
    n = w.shape[0]
    if n == 0:
        return 1.0
    a = w.copy()
    perm, sign, singular = lu_factor(a)
    if singular:
        return 0.0
    det = sign
    for i in range(n):
        det *= a[i, i]
    return det


@njit(cache=True)
def _lu_inverse(lu, perm):
    n = lu.shape[0]
    inv = np.zeros((n, n))
    col = np.empty(n)
    for j in range(n):
        for i in range(n):
            col[i] = 1.0 if perm[i] == j else 0.0
        for i in range(n):
            acc = col[i]
            for c in range(i):
                acc -= lu[i, c] * col[c]
            col[i] = acc
        for i in range(n - 1, -1, -1):
            acc = col[i]
            for c in range(i + 1, n):
                acc -= lu[i, c] * col[c]
            col[i] = acc / lu[i, i]
        for i in range(n):
            inv[i, j] = col[i]
    return inv


@njit(cache=True)
def _norm1(a):
    n = a.shape[0]
    best = 0.0
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc += abs(a[i, j])
        if acc > best:
            best = acc
    return best


@njit(cache=True)
def cofactor_adjugate(w):
    """Adjugate by explicit minors, each determinant via LU."""
    n = w.shape[0]
    adj = np.empty((n, n))
    if n == 1:
        adj[0, 0] = 1.0
        return adj
    minor = np.empty((n - 1, n - 1))
    for i in range(n):
        for j in range(n):
            ri = 0
            for r in range(n):
                if r == i:
                    continue
                ci = 0
                for c in range(n):
                    if c == j:
                        continue
                    minor[ri, ci] = w[r, c]
                    ci += 1
                ri += 1
            sgn = 1.0 if (i + j) % 2 == 0 else -1.0
            adj[j, i] = sgn * lu_det(minor)
    return adj


@njit(cache=True)
def det_adjugate(w):
    """Return (det, adjugate, used_fallback).

    Uses det * inverse when the 1-norm condition number is below
    ``COND_LIMIT``, otherwise the cofactor expansion.
    """
    n = w.shape[0]
    a = w.copy()
    perm, sign, singular = lu_factor(a)
    det = 0.0
    if not singular:
        det = sign
        for i in range(n):
            det *= a[i, i]
    if not singular and det != 0.0:
        inv = _lu_inverse(a, perm)
        cond = _norm1(w) * _norm1(inv)
        if cond < COND_LIMIT:
            return det, det * inv, False
    return det, cofactor_adjugate(w), True


@njit(cache=True)
def det_and_jacobi_trace(w, dw):
    """Determinant and ``Tr(adj(w) @ dw)``."""
    det, adj, _ = det_adjugate(w)
    n = w.shape[0]
    tr = 0.0
    for i in range(n):
        for j in range(n):
            tr += adj[i, j] * dw[j, i]
    return det, tr


@njit(cache=True)
def combine_groups(logw, dlogw, groups, n_groups):
    """Product of per-group determinants and its beta-derivative, log-shifted.

    Returns (scaled_det, scaled_derivative, log_shift) with
    ``det = scaled_det * exp(log_shift)``.
    """
    n = logw.shape[0]
    prod = 1.0
    dprod = 0.0
    log_shift = 0.0
    for g in range(n_groups):
        size = 0
        for i in range(n):
            if groups[i] == g:
                size += 1
        if size == 0:
            continue
        idx = np.empty(size, dtype=np.int64)
        t = 0
        for i in range(n):
            if groups[i] == g:
                idx[t] = i
                t += 1
        shift = -np.inf
        for a in range(size):
            for b in range(size):
                if logw[idx[a], idx[b]] > shift:
                    shift = logw[idx[a], idx[b]]
        w = np.empty((size, size))
        dw = np.empty((size, size))
        for a in range(size):
            for b in range(size):
                w[a, b] = math.exp(logw[idx[a], idx[b]] - shift)
                dw[a, b] = w[a, b] * dlogw[idx[a], idx[b]]
        det, tr = det_and_jacobi_trace(w, dw)
        dprod = dprod * det + prod * tr
        prod = prod * det
        log_shift += size * shift
    return prod, dprod, log_shift


@njit(cache=True)
def pair_block(x0s, bridges, log_p, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling,
               groups, n_groups, out_a, out_b, out_flag):
    """Numerator/denominator samples ``A_i``, ``B_i`` for a block of draws."""
    count, n, d = x0s.shape
    logw = np.empty((n, n))
    dlogw = np.empty((n, n))
    kinetic = d * n / (2.0 * beta)
    for i in range(count):
        ok = any_entry_logs(x0s[i], bridges[i], beta, omega_sq, quartic, nuc_pos, nuc_z,
                            coupling, logw, dlogw)
        if not ok:
            out_a[i] = 0.0
            out_b[i] = 0.0
            out_flag[i] = 1
            continue
        prod, dprod, log_shift = combine_groups(logw, dlogw, groups, n_groups)
        scale = math.exp(log_shift - log_p[i])
        out_b[i] = prod * scale
        out_a[i] = -(dprod - kinetic * prod) * scale
        out_flag[i] = 0


@njit(cache=True)
def tensor_block(x0s, bridges, log_p, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling,
                 perms, signs, out_a, out_b, out_flag):
    """Signed permutation sum with exact pairwise interactions for a block.

    ``perms`` has shape ``(P, n)``; ``signs`` holds the statistics weight of
    each permutation. Every particle ``k`` follows its bridge from
    ``x0[k]`` to ``x0[perms[p, k]]``.
    """
    count, n, d = x0s.shape
    steps = bridges.shape[2] - 1
    n_perm = perms.shape[0]
    sb = math.sqrt(beta)
    kinetic = d * n / (2.0 * beta)
    pts = np.empty((n, d))
    log_terms = np.empty(n_perm)
    dlog_terms = np.empty(n_perm)
    direction = np.empty(d)
    for i in range(count):
        x0 = x0s[i]
        bb = bridges[i]
        ok = True
        for p in range(n_perm):
            r2 = 0.0
            for k in range(n):
                tgt = perms[p, k]
                for c in range(d):
                    t = x0[k, c] - x0[tgt, c]
                    r2 += t * t
            gam = 0.0
            dgam = 0.0
            for m in range(steps + 1):
                s = m / steps
                for k in range(n):
                    tgt = perms[p, k]
                    for c in range(d):
                        pts[k, c] = sb * bb[k, m, c] + (1.0 - s) * x0[k, c] + s * x0[tgt, c]
                v = 0.0
                gd = 0.0
                for k in range(n):
                    for c in range(d):
                        direction[c] = bb[k, m, c]
                    ev, eg, eok = external_value_grad_dot(pts[k], direction, omega_sq, quartic,
                                                          nuc_pos, nuc_z)
                    if not eok:
                        ok = False
                        break
                    v += ev
                    gd += eg
                    if coupling != 0.0:
                        for j in range(n):
                            if j == k:
                                continue
                            p2 = 0.0
                            pdot = 0.0
                            for c in range(d):
                                diff = pts[k, c] - pts[j, c]
                                p2 += diff * diff
                                pdot += diff * (bb[k, m, c] - bb[j, m, c])
                            q = math.sqrt(p2)
                            if q < SINGULAR:
                                ok = False
                                break
                            v += 0.5 * coupling / q
                            gd -= 0.5 * coupling * pdot / (p2 * q)
                        if not ok:
                            break
                if not ok:
                    break
                w = _node_weight(m, steps)
                gam += w * v
                dgam += w * (v + 0.5 * sb * gd)
            if not ok:
                break
            log_terms[p] = -r2 / (2.0 * beta) - beta * gam
            dlog_terms[p] = r2 / (2.0 * beta * beta) - dgam
        if not ok:
            out_a[i] = 0.0
            out_b[i] = 0.0
            out_flag[i] = 1
            continue
        shift = -np.inf
        for p in range(n_perm):
            if log_terms[p] > shift:
                shift = log_terms[p]
        total = 0.0
        dtotal = 0.0
        for p in range(n_perm):
            e = signs[p] * math.exp(log_terms[p] - shift)
            total += e
            dtotal += e * dlog_terms[p]
        scale = math.exp(shift - log_p[i])
        out_b[i] = total * scale
        out_a[i] = -(dtotal - kinetic * total) * scale
        out_flag[i] = 0


@njit(cache=True)
def perturbed_entry_logs(x0, bridge, xi, beta, omega_sq, quartic, nuc_pos, nuc_z, coupling,
                         shift_scale, per_entry, logw):
    """``log W~`` for one sample; the interaction factor is averaged over xi.

    ``xi`` has shape ``(Q, n, d)`` when shared across entries, or
    ``(n * n * Q, n, d)`` in per-entry mode where entry ``(k, ell)`` uses
    rows ``(k * n + ell) * Q .. + Q``. Partner ``j`` of a path is shifted
    by ``s * shift_scale * xi[q, j]``.
    """
    n, d = x0.shape
    steps = bridge.shape[1] - 1
    sb = math.sqrt(beta)
    n_xi = xi.shape[0] // (n * n) if per_entry else xi.shape[0]
    y = np.empty(d)
    direction = np.zeros(d)
    inner = np.empty(n_xi)
    for k in range(n):
        for ell in range(n):
            base = (k * n + ell) * n_xi if per_entry else 0
            r2 = 0.0
            for c in range(d):
                t = x0[k, c] - x0[ell, c]
                r2 += t * t
            ext = 0.0
            for q in range(n_xi):
                inner[q] = 0.0
            for m in range(steps + 1):
                s = m / steps
                w = _node_weight(m, steps)
                for c in range(d):
                    y[c] = sb * bridge[k, m, c] + (1.0 - s) * x0[k, c] + s * x0[ell, c]
                v, _, ok = external_value_grad_dot(y, direction, omega_sq, quartic, nuc_pos, nuc_z)
                if not ok:
                    return False
                ext += w * v
                if coupling == 0.0:
                    continue
                for j in range(n):
                    if j == k:
                        continue
                    nu = k if j == ell else j
                    for q in range(n_xi):
                        p2 = 0.0
                        for c in range(d):
                            z = (sb * bridge[j, m, c] + (1.0 - s) * x0[j, c] + s * x0[nu, c]
                                 + s * shift_scale * xi[base + q, j, c])
                            diff = y[c] - z
                            p2 += diff * diff
                        p = math.sqrt(p2)
                        if p < SINGULAR:
                            return False
                        inner[q] += w * 0.5 * coupling / p
            log_mean = 0.0
            if coupling != 0.0:
                top = -np.inf
                for q in range(n_xi):
                    if -beta * inner[q] > top:
                        top = -beta * inner[q]
                acc = 0.0
                for q in range(n_xi):
                    acc += math.exp(-beta * inner[q] - top)
                log_mean = top + math.log(acc / n_xi)
            logw[k, ell] = -r2 / (2.0 * beta) - beta * ext + log_mean
    return True


@njit(cache=True)
def perturbed_block(x0s, bridges, xis, log_p, beta, omega_sq, quartic, nuc_pos, nuc_z,
                    coupling, shift_scale, per_entry, out_b, out_flag):
    """``det(W~) / p`` for a block; ``xis[i]`` is the xi panel of sample ``i``."""
    count, n, d = x0s.shape
    logw = np.empty((n, n))
    for i in range(count):
        ok = perturbed_entry_logs(x0s[i], bridges[i], xis[i], beta, omega_sq, quartic,
                                  nuc_pos, nuc_z, coupling, shift_scale, per_entry, logw)
        if not ok:
            out_b[i] = 0.0
            out_flag[i] = 1
            continue
        shift = -np.inf
        for a in range(n):
            for b in range(n):
                if logw[a, b] > shift:
                    shift = logw[a, b]
        w = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                w[a, b] = math.exp(logw[a, b] - shift)
        out_b[i] = lu_det(w) * math.exp(n * shift - log_p[i])
        out_flag[i] = 0
