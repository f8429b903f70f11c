"""Pure-numpy implementations of the hot loops.

Each function mirrors the signature of its counterpart in
``_kernels_numba``.  Loops over time stay in Python; everything else is
vectorized over the batch/coordinate axes.
"""
import numpy as np

OK, NONPOSITIVE, NONFINITE = 0, 1, 2


def conv2d(a, b):
    out = np.zeros_like(a)
    for k, j in zip(*np.nonzero(a)):
        out += a[k, j] * np.roll(b, (k, j), axis=(0, 1))
    return out


def _status(a, b):
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return NONFINITE
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        return NONPOSITIVE
    return OK


def factor_sgd_run(a0, b0, c, lr, asgd, gamma, interleave):
    n, m = c.shape
    A = np.empty((n + 1, m))
    B = np.empty((n + 1, m))
    a = a0.astype(np.float64).copy()
    b = b0.astype(np.float64).copy()
    A[0], B[0] = a, b
    for t in range(n):
        e = c[t] - a * b
        an = a + 2.0 * lr * b * e
        if asgd:
            e = c[t] - an * b
            b = b + 2.0 * lr * an * e
        else:
            b = b + 2.0 * lr * a * e
        a = an
        if gamma > 0.0 and (t + 1) % interleave == 0:
            w = b * b / np.mean(b * b) - 1.0
            mom = np.mean(a * a * w)
            a = a - gamma * 4.0 * mom * w * a / m
        A[t + 1], B[t + 1] = a, b
        status = _status(a, b)
        if status:
            return A, B, status, t + 1
    return A, B, OK, n


def ctgd_rk4(a0, b0, c, h, n):
    A = np.empty(n + 1)
    B = np.empty(n + 1)
    a, b = float(a0), float(b0)
    A[0], B[0] = a, b

    def flow(x, y):
        r = 2.0 * (c - x * y)
        return y * r, x * r

    for t in range(n):
        k1a, k1b = flow(a, b)
        k2a, k2b = flow(a + 0.5 * h * k1a, b + 0.5 * h * k1b)
        k3a, k3b = flow(a + 0.5 * h * k2a, b + 0.5 * h * k2b)
        k4a, k4b = flow(a + h * k3a, b + h * k3b)
        a = a + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        A[t + 1], B[t + 1] = a, b
        if not (np.isfinite(a) and np.isfinite(b)):
            return A, B, NONFINITE, t + 1
    return A, B, OK, n


def _reg_step(inner, outer, gamma):
    # gradient step of <|outer|^2 (|inner|^2/<|inner|^2> - 1)>^2 w.r.t. outer, bins 1..F-1
    p = np.abs(inner[:, 1:]) ** 2
    w = p / p.mean(axis=1, keepdims=True) - 1.0
    mom = np.mean(np.abs(outer[:, 1:]) ** 2 * w, axis=1, keepdims=True)
    out = outer.copy()
    out[:, 1:] -= gamma * 4.0 * mom * w * outer[:, 1:] / (outer.shape[1] - 1)
    return out


def fourier_sgd_chunk(K1, K2, target, noise_re, noise_im, lr, gamma, interleave,
                      t0, symmetric):
    # overflow on the way to divergence is reported through the status code
    with np.errstate(over="ignore", invalid="ignore"):
        return _fourier_sgd_chunk(K1, K2, target, noise_re, noise_im, lr, gamma, interleave, t0, symmetric)


def _fourier_sgd_chunk(K1, K2, target, noise_re, noise_im, lr, gamma, interleave, t0, symmetric):
    nb, T, F = noise_re.shape
    H1 = np.empty((nb, T, F), dtype=np.complex128)
    H2 = np.empty((nb, T, F), dtype=np.complex128)
    k1 = K1.copy()
    k2 = K2.copy()
    for t in range(T):
        c = target + noise_re[:, t] + 1j * noise_im[:, t]
        e = c - k1 * k2
        k1, k2 = k1 + 2.0 * lr * np.conj(k2) * e, k2 + 2.0 * lr * np.conj(k1) * e
        if gamma > 0.0 and (t0 + t + 1) % interleave == 0:
            new2 = _reg_step(k1, k2, gamma)
            if symmetric:
                k1 = _reg_step(k2, k1, gamma)
            k2 = new2
        H1[:, t] = k1
        H2[:, t] = k2
        if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))):
            return H1, H2, NONFINITE, t + 1
    return H1, H2, OK, T
