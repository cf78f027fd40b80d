"""Compiled inner loops: partial products, Metropolis sweeps, local estimators.

Conventions (0-based sites, chain length N):
    L[k] = A(x_0)...A(x_{k-1}),   R[k] = A(x_{N-k})...A(x_{N-1}),   L[0] = R[0] = 1
    environment of site i:  E_i = R[N-1-i] @ L[i],  so  <x|rho> = tr(A(x_i) E_i)
    d<x|rho>/dA(s)_{uv} = sum_{i: x_i = s} (E_i)_{vu}

All kernels release the GIL so chains can run on a thread pool.
"""

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True)


@_jit
def matmul(a, b, out):
    n = a.shape[0]
    m = b.shape[1]
    for i in range(n):
        for j in range(m):
            out[i, j] = 0.0
        for k in range(a.shape[1]):
            aik = a[i, k]
            if aik != 0.0:
                for j in range(m):
                    out[i, j] += aik * b[k, j]


@_jit
def trace_product(a, b):
    """tr(a @ b)."""
    acc = 0.0j
    n = a.shape[0]
    for u in range(n):
        for v in range(n):
            acc += a[u, v] * b[v, u]
    return acc


@_jit
def set_identity(m):
    n = m.shape[0]
    for i in range(n):
        for j in range(n):
            m[i, j] = 1.0 if i == j else 0.0


@_jit
def build_left(a, x, left):
    set_identity(left[0])
    for k in range(x.shape[0]):
        matmul(left[k], a[x[k]], left[k + 1])


@_jit
def build_right(a, x, right):
    n = x.shape[0]
    set_identity(right[0])
    for k in range(n):
        matmul(a[x[n - 1 - k]], right[k], right[k + 1])


@_jit
def trace(m):
    acc = 0.0j
    for i in range(m.shape[0]):
        acc += m[i, i]
    return acc


@_jit
def _accept(q, qn, r):
    # r < |qn/q|^2 without dividing; q == 0 accepts any non-zero proposal
    return r * (q.real * q.real + q.imag * q.imag) < qn.real * qn.real + qn.imag * qn.imag


@_jit
def sweep_right(a, x, left, right, rand_u, rand_p, env):
    """Rightward sequential Metropolis sweep. Needs ``right`` for x; refreshes ``left``.

    Returns (q, n_accepted) with q the incrementally tracked amplitude.
    """
    n = x.shape[0]
    q = trace(right[n])
    acc = 0
    set_identity(left[0])
    for j in range(n):
        matmul(right[n - 1 - j], left[j], env)
        xn = (x[j] + 1 + rand_p[j]) % 4
        qn = trace_product(a[xn], env)
        if _accept(q, qn, rand_u[j]):
            x[j] = xn
            q = qn
            acc += 1
        matmul(left[j], a[x[j]], left[j + 1])
    return q, acc


@_jit
def sweep_left(a, x, left, right, rand_u, rand_p, env):
    """Leftward mirror of :func:`sweep_right`. Needs ``left`` for x; refreshes ``right``."""
    n = x.shape[0]
    q = trace(left[n])
    acc = 0
    set_identity(right[0])
    for j in range(n - 1, -1, -1):
        k = n - 1 - j
        matmul(right[k], left[j], env)
        xn = (x[j] + 1 + rand_p[k]) % 4
        qn = trace_product(a[xn], env)
        if _accept(q, qn, rand_u[k]):
            x[j] = xn
            q = qn
            acc += 1
        matmul(a[x[j]], right[k], right[k + 1])
    return q, acc


@_jit
def run_sweeps(a, x, left, right, direction, rand_u, rand_p, env, out_cfg, out_q):
    """Apply ``len(rand_u)`` alternating sweeps; optionally record configurations.

    ``out_cfg`` has shape (n_sweeps, N) or (0, N) to skip recording. After the
    call both partial-product sets are valid for the final x. Returns the new
    direction (0 = rightward next), total accepted moves and the index of the
    first sweep that ended with vanishing amplitude (-1 if none).
    """
    acc = 0
    record = out_cfg.shape[0] > 0
    for t in range(rand_u.shape[0]):
        if direction == 0:
            q, k = sweep_right(a, x, left, right, rand_u[t], rand_p[t], env)
            build_right(a, x, right)
        else:
            q, k = sweep_left(a, x, left, right, rand_u[t], rand_p[t], env)
            build_left(a, x, left)
        direction = 1 - direction
        acc += k
        if record:
            for j in range(x.shape[0]):
                out_cfg[t, j] = x[j]
            out_q[t] = q
        if abs(q) < 1e-300:
            return direction, acc, t
    return direction, acc, -1


@_jit
def nonlocal_diagonal(x, coup, gamma_col):
    n = x.shape[0]
    e = 0.0
    for i in range(n):
        ki = 1 - 2 * (x[i] >> 1)
        bi = 1 - 2 * (x[i] & 1)
        for j in range(i + 1, n):
            c = coup[i, j]
            if c != 0.0:
                kj = 1 - 2 * (x[j] >> 1)
                bj = 1 - 2 * (x[j] & 1)
                e += c * (ki * kj - bi * bj)
    out = -1j * e
    if gamma_col != 0.0:
        m = 0
        for i in range(n):
            m += (1 - 2 * (x[i] >> 1)) - (1 - 2 * (x[i] & 1))
        out += -0.5 * gamma_col * m * m
    return out


@_jit
def _add_transposed(dst, src, coef):
    n = src.shape[0]
    for u in range(n):
        for v in range(n):
            dst[u, v] += coef * src[v, u]


@_jit
def splice_grad(a, x, left, right, p1, m1, p2, m2, nmod, s1, s2, coef, out, lb, rb, tmp):
    """Add ``coef * d tr(product)/dA`` for x with up to two site matrices replaced.

    Site ``p1`` carries matrix ``m1`` (and ``p2`` carries ``m2`` when nmod == 2).
    Unmodified sites accumulate into ``out[x_i]``; modified sites accumulate into
    ``out[s1]`` / ``out[s2]``, or are skipped when the slot is negative. The
    cached partials of x are reused outside the modified window.
    """
    n = x.shape[0]
    first = p1
    last = p1
    if nmod == 2:
        first = min(p1, p2)
        last = max(p1, p2)
    # lb[k] valid for k > first, rb[k] valid for k > n-1-last
    for k in range(first, n):
        src = left[first] if k == first else lb[k]
        if k == p1:
            mat = m1
        elif nmod == 2 and k == p2:
            mat = m2
        else:
            mat = a[x[k]]
        matmul(src, mat, lb[k + 1])
    lo = n - 1 - last
    for k in range(lo, n):
        site = n - 1 - k
        src = right[lo] if k == lo else rb[k]
        if site == p1:
            mat = m1
        elif nmod == 2 and site == p2:
            mat = m2
        else:
            mat = a[x[site]]
        matmul(mat, src, rb[k + 1])
    for i in range(n):
        if i == p1:
            slot = s1
        elif nmod == 2 and i == p2:
            slot = s2
        else:
            slot = x[i]
        if slot < 0:
            continue
        lmat = left[i] if i <= first else lb[i]
        kr = n - 1 - i
        rmat = right[kr] if kr <= lo else rb[kr]
        matmul(rmat, lmat, tmp)
        _add_transposed(out[slot], tmp, coef)


@_jit
def _pair_amplitude(a, x, left, right, i, k, t1, t2, tmp, tmp2):
    """Amplitude of x with sites i -> t1 and k -> t2 (k == i+1, or the wrap bond)."""
    n = x.shape[0]
    if k == i + 1:
        matmul(right[n - 2 - i], left[i], tmp)
        matmul(a[t2], tmp, tmp2)
        return trace_product(a[t1], tmp2)
    # wrap bond (N-1, 0): tr(A(y_0) P A(y_{N-1})) with P = A(x_1)...A(x_{N-2})
    lo = min(i, k)
    hi = max(i, k)
    tlo = t1 if i == lo else t2
    thi = t2 if k == hi else t1
    set_identity(tmp)
    for s in range(lo + 1, hi):
        matmul(tmp, a[x[s]], tmp2)
        tmp[:, :] = tmp2
    matmul(a[tlo], tmp, tmp2)
    return trace_product(tmp2, a[thi])


@_jit
def local_estimate(a, x, left, right, l1, l2, bonds, coup, gamma_col, shortcut, need_grad,
                   g_out, dg_out, env, lb, rb, tmp, tmp2, bmat):
    """Local estimator of the Lindbladian for configuration x.

    Returns (<x|rho>, <x|L|rho>); L_loc is their ratio. When ``need_grad`` is
    set, ``g_out`` receives d<x|rho>/dA and ``dg_out`` receives
    sum_y <x|L|y> d<y|rho>/dA, both still to be divided by the amplitude.
    """
    n = x.shape[0]
    for i in range(n):
        matmul(right[n - 1 - i], left[i], env[i])
    amp = trace(left[n])
    if need_grad:
        g_out[:, :, :] = 0.0
        dg_out[:, :, :] = 0.0
        for i in range(n):
            _add_transposed(g_out[x[i]], env[i], 1.0)
    diag = nonlocal_diagonal(x, coup, gamma_col)
    off = 0.0j
    chi = a.shape[1]
    for i in range(n):
        xi = x[i]
        if shortcut:
            diag += l1[xi, xi]
        bmat[:, :] = 0.0
        has_off = False
        for t in range(4):
            c = l1[xi, t]
            if c == 0.0 or (shortcut and t == xi):
                continue
            off += c * trace_product(a[t], env[i])
            if need_grad:
                has_off = True
                for u in range(chi):
                    for v in range(chi):
                        bmat[u, v] += c * a[t, u, v]
                _add_transposed(dg_out[t], env[i], c)
        if need_grad and has_off:
            splice_grad(a, x, left, right, i, bmat, i, bmat, 1, -1, -1, 1.0, dg_out, lb, rb, tmp)
    for b in range(bonds.shape[0]):
        i = bonds[b, 0]
        k = bonds[b, 1]
        big = 4 * x[i] + x[k]
        if shortcut:
            diag += l2[big, big]
        for col in range(16):
            c = l2[big, col]
            if c == 0.0 or (shortcut and col == big):
                continue
            t1 = col // 4
            t2 = col % 4
            off += c * _pair_amplitude(a, x, left, right, i, k, t1, t2, tmp, tmp2)
            if need_grad:
                splice_grad(a, x, left, right, i, a[t1], k, a[t2], 2, t1, t2, c, dg_out, lb, rb, tmp)
    if need_grad:
        for s in range(4):
            for u in range(chi):
                for v in range(chi):
                    dg_out[s, u, v] += diag * g_out[s, u, v]
    return amp, diag * amp + off


@_jit
def run_chain(a, x, left, right, direction, rand_u, rand_p, l1, l2, bonds, coup, gamma_col,
              out_lloc, out_amp, out_delta, out_dl, env, lb, rb, tmp, tmp2, bmat, g, dg):
    """Draw ``len(rand_u)`` samples (one sweep each) and evaluate per-sample estimators.

    Returns (direction, accepted, bad) where ``bad`` is the index of the first
    sample with vanishing amplitude (-1 if none); outputs past it are unset.
    """
    acc = 0
    chi = a.shape[1]
    one = np.zeros((1, x.shape[0]), dtype=np.int64)
    oneq = np.zeros(1, dtype=np.complex128)
    for t in range(rand_u.shape[0]):
        direction, k, bad = run_sweeps(a, x, left, right, direction, rand_u[t:t + 1],
                                       rand_p[t:t + 1], env[0], one[:0], oneq)
        acc += k
        if bad >= 0:
            return direction, acc, t
        amp, num = local_estimate(a, x, left, right, l1, l2, bonds, coup, gamma_col, True, True,
                                  g, dg, env, lb, rb, tmp, tmp2, bmat)
        if abs(amp) < 1e-300:
            return direction, acc, t
        inv = 1.0 / amp
        out_lloc[t] = num * inv
        out_amp[t] = amp
        p = 0
        for s in range(4):
            for u in range(chi):
                for v in range(chi):
                    out_delta[t, p] = g[s, u, v] * inv
                    out_dl[t, p] = dg[s, u, v] * inv
                    p += 1
    return direction, acc, -1
