"""Numba-compiled versions of the hot loops (see ``_kernels_numpy``)."""
import numpy as np
from numba import njit

OK, NONPOSITIVE, NONFINITE = 0, 1, 2


@njit(cache=True, nogil=True)
def conv2d(a, b):
    R, C = a.shape
    out = np.zeros_like(a)
    for k in range(R):
        for j in range(C):
            akj = a[k, j]
            if akj == 0:
                continue
            for n in range(R):
                nk = n - k
                if nk < 0:
                    nk += R
                for m in range(C):
                    mj = m - j
                    if mj < 0:
                        mj += C
                    out[n, m] += akj * b[nk, mj]
    return out


@njit(cache=True, nogil=True)
def factor_sgd_run(a0, b0, c, lr, asgd, gamma, interleave):
    n, M = c.shape
    A = np.empty((n + 1, M))
    B = np.empty((n + 1, M))
    a = a0.copy()
    b = b0.copy()
    A[0] = a
    B[0] = b
    w = np.empty(M)
    for t in range(n):
        for j in range(M):
            e = c[t, j] - a[j] * b[j]
            an = a[j] + 2.0 * lr * b[j] * e
            if asgd:
                e = c[t, j] - an * b[j]
                b[j] = b[j] + 2.0 * lr * an * e
            else:
                b[j] = b[j] + 2.0 * lr * a[j] * e
            a[j] = an
        if gamma > 0.0 and (t + 1) % interleave == 0:
            bb = 0.0
            for j in range(M):
                bb += b[j] * b[j]
            bb /= M
            mom = 0.0
            for j in range(M):
                w[j] = b[j] * b[j] / bb - 1.0
                mom += a[j] * a[j] * w[j]
            mom /= M
            for j in range(M):
                a[j] = a[j] - gamma * 4.0 * mom * w[j] * a[j] / M
        status = OK
        for j in range(M):
            A[t + 1, j] = a[j]
            B[t + 1, j] = b[j]
            if not (np.isfinite(a[j]) and np.isfinite(b[j])):
                status = NONFINITE
            elif status == OK and (a[j] <= 0.0 or b[j] <= 0.0):
                status = NONPOSITIVE
        if status != OK:
            return A, B, status, t + 1
    return A, B, OK, n


@njit(cache=True, nogil=True)
def ctgd_rk4(a0, b0, c, h, n):
    A = np.empty(n + 1)
    B = np.empty(n + 1)
    a = a0
    b = b0
    A[0] = a
    B[0] = b
    for t in range(n):
        r = 2.0 * (c - a * b)
        k1a = b * r
        k1b = a * r
        x = a + 0.5 * h * k1a
        y = b + 0.5 * h * k1b
        r = 2.0 * (c - x * y)
        k2a = y * r
        k2b = x * r
        x = a + 0.5 * h * k2a
        y = b + 0.5 * h * k2b
        r = 2.0 * (c - x * y)
        k3a = y * r
        k3b = x * r
        x = a + h * k3a
        y = b + h * k3b
        r = 2.0 * (c - x * y)
        k4a = y * r
        k4b = x * r
        a = a + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        A[t + 1] = a
        B[t + 1] = b
        if not (np.isfinite(a) and np.isfinite(b)):
            return A, B, NONFINITE, t + 1
    return A, B, OK, n


@njit(cache=True, nogil=True)
def _reg_step(inner, outer, gamma, out):
    F = inner.shape[0]
    p = 0.0
    for f in range(1, F):
        p += inner[f].real ** 2 + inner[f].imag ** 2
    p /= F - 1
    mom = 0.0
    for f in range(1, F):
        w = (inner[f].real ** 2 + inner[f].imag ** 2) / p - 1.0
        mom += (outer[f].real ** 2 + outer[f].imag ** 2) * w
    mom /= F - 1
    out[0] = outer[0]
    for f in range(1, F):
        w = (inner[f].real ** 2 + inner[f].imag ** 2) / p - 1.0
        out[f] = outer[f] - gamma * 4.0 * mom * w * outer[f] / (F - 1)


@njit(cache=True, nogil=True)
def fourier_sgd_chunk(K1, K2, target, noise_re, noise_im, lr, gamma, interleave,
                      t0, symmetric):
    nb, T, F = noise_re.shape
    H1 = np.empty((nb, T, F), dtype=np.complex128)
    H2 = np.empty((nb, T, F), dtype=np.complex128)
    k1 = K1.copy()
    k2 = K2.copy()
    tmp1 = np.empty(F, dtype=np.complex128)
    tmp2 = np.empty(F, dtype=np.complex128)
    for t in range(T):
        do_reg = gamma > 0.0 and (t0 + t + 1) % interleave == 0
        for i in range(nb):
            for f in range(F):
                c = target[f] + complex(noise_re[i, t, f], noise_im[i, t, f])
                x1 = k1[i, f]
                x2 = k2[i, f]
                e = c - x1 * x2
                k1[i, f] = x1 + 2.0 * lr * np.conj(x2) * e
                k2[i, f] = x2 + 2.0 * lr * np.conj(x1) * e
            if do_reg:
                _reg_step(k1[i], k2[i], gamma, tmp2)
                if symmetric:
                    _reg_step(k2[i], k1[i], gamma, tmp1)
                    k1[i, :] = tmp1
                k2[i, :] = tmp2
        bad = False
        for i in range(nb):
            for f in range(F):
                H1[i, t, f] = k1[i, f]
                H2[i, t, f] = k2[i, f]
                if not (np.isfinite(k1[i, f].real) and np.isfinite(k1[i, f].imag)
                        and np.isfinite(k2[i, f].real) and np.isfinite(k2[i, f].imag)):
                    bad = True
        if bad:
            return H1, H2, NONFINITE, t + 1
    return H1, H2, OK, T
