"""Gradient dynamics of two-factor least squares ``|c - a b|^2``.

Continuous-time gradient flow (CTGD), SGD, asynchronous SGD (ASGD), the
Fourier-domain SGD of a convolution pair and the SDR regularizer.  Under
the flow the drift statistic ``L = a^2 - b^2`` is conserved; one SGD step
multiplies it by ``1 - 4 lr^2 e^2`` with ``e = c - a b``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateError, DivergenceError, PositivityError, ShapeError
from .genericity import sdr_diag
from .models import ConvPairModel
from .rng import make_rng
from .spectral import as_grid, dft

TRAJECTORY_COLUMNS = ("iter", "a", "b", "loss", "L", "rho", "cosdist")


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    sigma: float = 0.0
    c0: float = 1.0
    iterations: int = 1000
    seed: int = 0
    algorithm: str = "sgd"
    ctgd_step: float = 1e-3

    def __post_init__(self):
        if self.algorithm not in ("ctgd", "sgd", "asgd"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.lr < 0 or self.sigma < 0 or self.ctgd_step <= 0 or self.iterations < 0:
            raise ValueError("lr, sigma and iterations must be non-negative, ctgd_step positive")


@dataclass(frozen=True)
class SdrRegConfig:
    gamma: float = 0.0
    interleave: int = 1
    symmetric: bool = False

    def __post_init__(self):
        if self.gamma < 0 or self.interleave < 1:
            raise ValueError("gamma must be >= 0 and interleave >= 1")


@dataclass
class TrajectoryRecord:
    """Per-iteration optimizer state; optional columns are ``None`` when absent."""

    iters: np.ndarray
    a: np.ndarray
    b: np.ndarray
    loss: np.ndarray
    L: np.ndarray
    rho: np.ndarray | None = None
    cosdist: np.ndarray | None = None
    moduli: dict | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iters)

    def truncated(self, n_rows):
        cut = lambda x: None if x is None else x[:n_rows]
        mod = None if self.moduli is None else {k: v[:n_rows] for k, v in self.moduli.items()}
        return TrajectoryRecord(self.iters[:n_rows], cut(self.a), cut(self.b), cut(self.loss),
                                cut(self.L), cut(self.rho), cut(self.cosdist), mod, dict(self.meta))

    def rows(self):
        cols = [self.iters, _scalar(self.a), _scalar(self.b), self.loss, self.L, self.rho, self.cosdist]
        for i in range(len(self.iters)):
            yield [int(self.iters[i])] + [None if c is None else float(c[i]) for c in cols[1:]]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + ["" if v is None else repr(v) for v in row[1:]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _scalar(x):
    # vector-valued states are summarized by their root mean square
    x = np.asarray(x)
    return x if x.ndim == 1 else np.sqrt(np.mean(np.abs(x) ** 2, axis=1))


# ---------------------------------------------------------------------------
# single steps

def _check_sample(c):
    if not np.all(np.isfinite(c)):
        raise ValueError("non-finite target sample")


def sgd_step(a, b, c, lr):
    """One SGD step on ``|c - a b|^2``; both gradients use the current point."""
    _check_sample(c)
    e = c - a * b
    return a + 2.0 * lr * b * e, b + 2.0 * lr * a * e


def asgd_step(a, b, c, lr):
    """Asynchronous step: update ``a``, then ``b`` using the updated ``a``."""
    _check_sample(c)
    a1 = a + 2.0 * lr * b * (c - a * b)
    return a1, b + 2.0 * lr * a1 * (c - a1 * b)


def drift_factor(a, b, c, lr):
    """Exact one-step SGD multiplier of ``L = a^2 - b^2``."""
    e = c - a * b
    return 1.0 - 4.0 * lr ** 2 * e ** 2


# ---------------------------------------------------------------------------
# scalar and diagonal runs

def _record(A, B, c0, iters=None, meta=None, with_rho=False):
    A = np.asarray(A)
    B = np.asarray(B)
    iters = np.arange(len(A)) if iters is None else iters
    if A.ndim == 1:
        loss = (c0 - A * B) ** 2
        L = A ** 2 - B ** 2
        rho = None
    else:
        loss = np.mean((np.asarray(c0) - A * B) ** 2, axis=1)
        L = np.mean(A ** 2 - B ** 2, axis=1)
        rho = np.array([sdr_diag(a, b) for a, b in zip(A, B)]) if with_rho else None
    return TrajectoryRecord(iters, A, B, loss, L, rho, None, None, dict(meta or {}))


def ctgd_integrate(config: OptimizerConfig, a0: float, b0: float, t_end: float | None = None,
                   backend=None) -> TrajectoryRecord:
    """RK4 integration of ``da/dt = 2b(c-ab)``, ``db/dt = 2a(c-ab)``.

    Integrates ``config.iterations`` steps of size ``config.ctgd_step``, or up
    to time ``t_end`` when given.
    """
    if not (a0 > 0 and b0 > 0):
        raise ValueError("initial state must be positive")
    h = config.ctgd_step
    n = config.iterations if t_end is None else int(round(t_end / h))
    A, B, status, steps = kernels.get_backend(backend).ctgd_rk4(float(a0), float(b0), float(config.c0), h, n)
    meta = {"algorithm": "ctgd", "step": h, "c0": config.c0}
    if status != kernels.OK:
        rec = _record(A[:steps + 1], B[:steps + 1], config.c0, meta=meta)
        raise DivergenceError(f"CTGD diverged at step {steps}", steps, rec)
    return _record(A, B, config.c0, meta=meta)


def draw_targets(config: OptimizerConfig, m: int = 1, c0=None) -> np.ndarray:
    """Target samples ``c_n ~ Normal(c0, sigma^2)``, shape ``(iterations, m)``."""
    c0 = config.c0 if c0 is None else c0
    rng = make_rng(config.seed, 0)
    return np.asarray(c0, dtype=float) + config.sigma * rng.standard_normal((config.iterations, m))


def run_stochastic(config: OptimizerConfig, a0, b0, sdr_reg: SdrRegConfig | None = None,
                   c_samples=None, backend=None) -> TrajectoryRecord:
    """SGD or ASGD on a scalar or diagonal two-factor problem.

    ``a0``/``b0`` may be scalars or vectors of equal length; in the vector
    case ``config.c0`` may be a per-coordinate target and the optional SDR
    regularizer acts on the outer factor ``a``.  ``c_samples`` overrides the
    seeded target draws.
    """
    if config.algorithm == "ctgd":
        return ctgd_integrate(config, a0, b0, backend=backend)
    scalar = np.ndim(a0) == 0
    a = np.atleast_1d(np.asarray(a0, dtype=float)).copy()
    b = np.atleast_1d(np.asarray(b0, dtype=float)).copy()
    if a.shape != b.shape:
        raise ShapeError("a0 and b0 differ in length")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("initial state must be positive")
    c0 = np.broadcast_to(np.asarray(config.c0, dtype=float), a.shape)
    if c_samples is None:
        c = draw_targets(config, a.size, c0)
    else:
        c = np.asarray(c_samples, dtype=float).reshape(config.iterations, a.size)
    _check_sample(c)
    gamma, every = (0.0, 1) if sdr_reg is None else (sdr_reg.gamma, sdr_reg.interleave)
    if gamma > 0 and a.size < 2:
        raise ValueError("SDR regularization needs at least two coordinates")
    A, B, status, steps = kernels.get_backend(backend).factor_sgd_run(
        a, b, np.ascontiguousarray(c), float(config.lr), config.algorithm == "asgd", float(gamma), int(every))
    if scalar:
        A, B = A[:, 0], B[:, 0]
    if status != kernels.OK:
        A, B = A[:steps + 1], B[:steps + 1]
    meta = {k: v for k, v in asdict(config).items()}
    if sdr_reg is not None:
        meta.update({"gamma": gamma, "interleave": every})
    rec = _record(A, B, c0[0] if scalar else c0, meta=meta, with_rho=not scalar)
    if status == kernels.NONPOSITIVE:
        raise PositivityError(f"state left the positive orthant at iteration {steps}", steps, rec)
    if status == kernels.NONFINITE:
        raise DivergenceError(f"non-finite state at iteration {steps}", steps, rec)
    return rec


# ---------------------------------------------------------------------------
# one-step drift contraction

@dataclass(frozen=True)
class DriftEstimate:
    ratio: float
    stderr: float
    ci_low: float
    ci_high: float
    max_identity_error: float
    n_mc: int


def drift_contraction_estimate(a0, b0, sigma_p, c0, sigma, lr, n_mc, seed=0,
                               confidence: float = 0.99) -> DriftEstimate:
    """Monte Carlo estimate of ``E[L1] / E[L0]`` for one SGD step.

    The initial state is ``(a0, b0)`` on the hyperbola ``a b = c0`` perturbed
    by independent ``Normal(0, sigma_p^2)`` noise; targets are drawn from
    ``Normal(c0, sigma^2)``.  The interval uses the delta method.
    """
    if abs(a0 * b0 - c0) > 1e-9 * max(1.0, abs(c0)):
        raise ValueError(f"(a0, b0) = ({a0}, {b0}) is not on the solution set a*b = {c0}")
    if sigma_p == 0 and a0 == b0:
        raise DegenerateError("L0 is identically zero (balanced start without perturbation)")
    rng = make_rng(seed, 2)
    A0 = a0 + sigma_p * rng.standard_normal(n_mc)
    B0 = b0 + sigma_p * rng.standard_normal(n_mc)
    C = c0 + sigma * rng.standard_normal(n_mc)
    A1, B1 = sgd_step(A0, B0, C, lr)
    L0 = A0 ** 2 - B0 ** 2
    L1 = A1 ** 2 - B1 ** 2
    ident = np.max(np.abs(L1 - L0 * drift_factor(A0, B0, C, lr)))
    m0, m1 = L0.mean(), L1.mean()
    if m0 == 0:
        raise DegenerateError("sample mean of L0 is zero")
    r = m1 / m0
    if lr == 0:
        se = 0.0
    else:
        cov = np.cov(np.vstack([L1, L0]))
        se = math.sqrt(max(cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1], 0.0) / n_mc) / abs(m0)
    z = _normal_quantile(0.5 + confidence / 2)
    return DriftEstimate(float(r), float(se), float(r - z * se), float(r + z * se), float(ident), n_mc)


def _normal_quantile(p):
    # bisection on erf; only called with a handful of confidence levels
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# SDR regularizer

def _nondc(x, include_dc):
    x = as_grid(np.asarray(x))
    return x.ravel() if include_dc else x.ravel()[1:]


def sdr_reg_value_grad(K1, K2, include_dc: bool = False):
    """Regularizer ``<|K2|^2 (|K1|^2 / <|K1|^2> - 1)>^2`` and its gradient in ``K2``.

    The gradient is returned as ``dR/dRe K2 + 1j * dR/dIm K2`` in the shape
    of ``K2``; the zero-frequency entry is 0 unless ``include_dc``.
    """
    K2 = np.asarray(K2)
    P1 = np.abs(_nondc(K1, include_dc)) ** 2
    z2 = _nondc(K2, include_dc)
    p = P1.mean()
    if not p > 0:
        raise DegenerateError("k1 has zero energy")
    w = P1 / p - 1.0
    m = float(np.mean(np.abs(z2) ** 2 * w))
    g = 4.0 * m * w * z2 / P1.size
    grad = np.zeros(as_grid(K2).size, dtype=complex)
    if include_dc:
        grad[:] = g
    else:
        grad[1:] = g
    return m * m, grad.reshape(K2.shape)


def sdr_reg_value_ratio_form(K1, K2, include_dc: bool = False) -> float:
    """The same regularizer written as ``(rho - 1)^2 <|K2|^2>^2``."""
    P1 = np.abs(_nondc(K1, include_dc)) ** 2
    P2 = np.abs(_nondc(K2, include_dc)) ** 2
    rho = np.mean(P1 * P2) / (P1.mean() * P2.mean())
    return float((rho - 1.0) ** 2 * P2.mean() ** 2)


# ---------------------------------------------------------------------------
# Fourier-domain SGD on a convolution pair

def half_spectrum_index(shape) -> np.ndarray:
    """Flat indices of one representative per conjugate pair, DC first.

    A bin is kept when its flat index is smaller than that of its mirror
    ``(-u, -v)``; for a single-row grid these are positions ``0..d-1``.
    """
    rows, cols = shape
    r, c = np.indices(shape)
    flat = (r * cols + c).ravel()
    mirror = (((-r) % rows) * cols + (-c) % cols).ravel()
    return flat[flat <= mirror]


@dataclass
class FourierRunResult:
    """Per-seed statistics of a batch of Fourier SGD runs."""

    iters: np.ndarray
    a: np.ndarray
    b: np.ndarray
    loss: np.ndarray
    L: np.ndarray
    rho: np.ndarray
    cosdist: np.ndarray
    mod1: np.ndarray | None
    mod2: np.ndarray | None
    truth_rho: float
    meta: dict

    def trajectory(self, i: int = 0) -> TrajectoryRecord:
        mod = None if self.mod1 is None else {"k1": self.mod1[i], "k2": self.mod2[i]}
        return TrajectoryRecord(self.iters, self.a[i], self.b[i], self.loss[i], self.L[i],
                                self.rho[i], self.cosdist[i], mod, dict(self.meta, seed=self.meta["seeds"][i]))


def normalized_truth(truth: ConvPairModel) -> ConvPairModel:
    """Scale each kernel to unit energy."""
    return truth.replace(k1=truth.k1 / np.linalg.norm(truth.k1), k2=truth.k2 / np.linalg.norm(truth.k2), notes=())


def fourier_init(truth: ConvPairModel, seed: int, init_noise: float):
    """Initial spatial kernels: truth plus ``Uniform[0, init_noise]`` per entry."""
    rng = make_rng(seed, 0)
    k1 = truth.k1 + init_noise * rng.random(truth.shape)
    k2 = truth.k2 + init_noise * rng.random(truth.shape)
    return k1, k2


class _NoiseStreams:
    # one generator per (seed, bin, real/imag part), drawn chunk by chunk
    def __init__(self, seeds, nbins, sigma, complex_noise):
        self.sigma = sigma
        self.complex_noise = complex_noise
        self.re = [[make_rng(s, 1, j, 0) for j in range(nbins)] for s in seeds]
        self.im = [[make_rng(s, 1, j, 1) for j in range(nbins)] for s in seeds]

    def draw(self, T):
        nb, F = len(self.re), len(self.re[0])
        re = np.zeros((nb, T, F))
        im = np.zeros((nb, T, F))
        if self.sigma == 0:
            return re, im
        for i in range(nb):
            for j in range(F):
                re[i, :, j] = self.sigma * self.re[i][j].standard_normal(T)
                if self.complex_noise and j > 0:
                    im[i, :, j] = self.sigma * self.im[i][j].standard_normal(T)
        return re, im


def _fourier_stats(H1, H2, target, T1, T2, N):
    # H1, H2: (B, T, F) half spectra with DC at index 0
    P1 = np.abs(H1[..., 1:]) ** 2
    P2 = np.abs(H2[..., 1:]) ** 2
    a = np.sqrt(P1.mean(-1))
    b = np.sqrt(P2.mean(-1))
    E = np.abs(target - H1 * H2) ** 2
    loss = (E[..., 0] + 2.0 * E[..., 1:].sum(-1)) / N
    L = (P1 - P2).mean(-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (P1 * P2).mean(-1) / (P1.mean(-1) * P2.mean(-1))

    def cosd(H, T):
        inner = (np.conj(T[0]) * H[..., 0]).real + 2.0 * (np.conj(T[1:]) * H[..., 1:]).real.sum(-1)
        nh = np.abs(H[..., 0]) ** 2 + 2.0 * (np.abs(H[..., 1:]) ** 2).sum(-1)
        nt = np.abs(T[0]) ** 2 + 2.0 * (np.abs(T[1:]) ** 2).sum(-1)
        return 1.0 - np.abs(inner) / np.sqrt(nh * nt)

    cos = 0.5 * (cosd(H1, T1) + cosd(H2, T2))
    return a, b, loss, L, rho, cos


def fourier_sgd_batch(truth: ConvPairModel, seeds, lr: float, sigma: float, iterations: int,
                      sdr_reg: SdrRegConfig | None = None, init_noise: float = 1.0,
                      normalize: bool = True, init=None, complex_noise: bool = True,
                      record_every: int = 1, keep_moduli: bool = False, chunk: int = 2000,
                      backend=None) -> FourierRunResult:
    """Per-frequency SGD of ``|c - K1 K2|^2`` for a batch of seeds.

    The latent is a Dirac at the origin, so the squared spatial error equals
    ``(1/N) sum_u |c(u) - K1(u) K2(u)|^2`` and each conjugate pair of bins is
    an independent complex two-factor problem.  Targets are the truth's
    product spectrum plus Gaussian noise of standard deviation ``sigma`` on
    the real and imaginary parts.  ``init`` optionally fixes the initial
    spatial kernels ``(k1, k2)`` for every seed; otherwise each seed starts
    from the (normalized) truth plus uniform noise.
    """
    seeds = [int(s) for s in seeds]
    if normalize:
        truth = normalized_truth(truth)
    idx = half_spectrum_index(truth.shape)
    N = truth.k1.size
    T1 = truth.K1.ravel()[idx]
    T2 = truth.K2.ravel()[idx]
    target = T1 * T2
    K1 = np.empty((len(seeds), idx.size), dtype=complex)
    K2 = np.empty_like(K1)
    for i, s in enumerate(seeds):
        k1, k2 = init if init is not None else fourier_init(truth, s, init_noise)
        K1[i] = dft(as_grid(k1)).ravel()[idx]
        K2[i] = dft(as_grid(k2)).ravel()[idx]
    noise = _NoiseStreams(seeds, idx.size, sigma, complex_noise)
    gamma, every, sym = (0.0, 1, False) if sdr_reg is None else (sdr_reg.gamma, sdr_reg.interleave, sdr_reg.symmetric)
    be = kernels.get_backend(backend)

    rec_iters = np.arange(0, iterations + 1, record_every)
    stats = [np.empty((len(seeds), rec_iters.size)) for _ in range(6)]
    mods = [np.empty((len(seeds), rec_iters.size, idx.size)) for _ in range(2)] if keep_moduli else None

    def store(H1, H2, t_first):
        # H[:, k] is the state after iteration t_first + k
        sel = np.nonzero((np.arange(t_first, t_first + H1.shape[1]) % record_every) == 0)[0]
        if sel.size == 0:
            return
        rows = (t_first + sel) // record_every
        vals = _fourier_stats(H1[:, sel], H2[:, sel], target, T1, T2, N)
        for arr, v in zip(stats, vals):
            arr[:, rows] = v
        if keep_moduli:
            mods[0][:, rows] = np.abs(H1[:, sel])
            mods[1][:, rows] = np.abs(H2[:, sel])

    store(K1[:, None], K2[:, None], 0)
    t = 0
    while t < iterations:
        T = min(chunk, iterations - t)
        nre, nim = noise.draw(T)
        H1, H2, status, steps = be.fourier_sgd_chunk(K1, K2, target, nre, nim, float(lr), float(gamma),
                                                     int(every), t, sym)
        if status != kernels.OK:
            raise DivergenceError(f"Fourier SGD diverged at iteration {t + steps}", t + steps)
        store(H1, H2, t + 1)
        K1, K2 = H1[:, -1].copy(), H2[:, -1].copy()
        t += T
    truth_rho = float(_fourier_stats(T1[None, None], T2[None, None], target, T1, T2, N)[4][0, 0])
    meta = {"lr": lr, "sigma": sigma, "iterations": iterations, "gamma": gamma, "interleave": every,
            "symmetric": sym, "init_noise": init_noise, "normalize": normalize, "seeds": seeds,
            "record_every": record_every, "complex_noise": complex_noise}
    return FourierRunResult(rec_iters, *stats, *(mods or (None, None)), truth_rho, meta)


def sgd_fourier_convpair(truth: ConvPairModel, config: OptimizerConfig,
                         sdr_reg: SdrRegConfig | None = None, **kw) -> TrajectoryRecord:
    """Single-seed Fourier SGD trajectory with per-frequency moduli."""
    res = fourier_sgd_batch(truth, [config.seed], config.lr, config.sigma, config.iterations,
                            sdr_reg, keep_moduli=True, **kw)
    return res.trajectory(0)


# ---------------------------------------------------------------------------
# aggregation

def aggregate(iters, stats: dict):
    """Rows ``(iter, stat, mean, stderr)`` over the seed axis, stats in the given order."""
    rows = []
    for name, arr in stats.items():
        arr = np.asarray(arr, dtype=float)
        n = arr.shape[0]
        mean = arr.mean(axis=0)
        se = arr.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
        for t, m, s in zip(iters, mean, se):
            rows.append((int(t), name, float(m), float(s)))
    rows.sort(key=lambda r: r[0])
    return rows


def write_aggregate_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "stat", "mean", "stderr"])
        for t, name, m, s in rows:
            w.writerow([t, name, repr(m), repr(s)])


# ---------------------------------------------------------------------------
# infinite-dimension limit of the diagonal SDR

@dataclass(frozen=True)
class BalancedLimitResult:
    rho_prime: float
    moment_ratio: float
    analytic: float
    n: int


def balanced_lognormal_sdr(n: int, seed: int = 0, sigma: float = 1.0) -> BalancedLimitResult:
    """SDR of the balanced solution ``A = B = sqrt(a* b*)`` for log-normal truths.

    ``moment_ratio`` is the sample ``E[c^2]/E[c]^2`` with ``c = a* b*`` and
    ``analytic`` its population value ``exp(2 sigma^2)``.
    """
    rng = make_rng(seed, 3)
    a_star = rng.lognormal(0.0, sigma, n)
    b_star = rng.lognormal(0.0, sigma, n)
    c = a_star * b_star
    A = B = np.sqrt(c)
    return BalancedLimitResult(sdr_diag(A, B), float(np.mean(c ** 2) / np.mean(c) ** 2),
                       math.exp(2 * sigma ** 2), n)
