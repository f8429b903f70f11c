"""Two-mechanism generative models X = f2(f1(Z)).

``ConvPairModel`` is the two-layer circular convolution network with a
one-hot latent; ``DiagonalModel`` is its diagonal surrogate
``X = diag(a) diag(b) Z``, where ``b`` plays the role of the inner
mechanism ``f1`` and ``a`` the outer one ``f2``.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import (
    InvalidModelError,
    NotInSolutionSetError,
    NotInvertibleError,
    ShapeError,
)
from .spectral import StretchGroup, as_grid, dft, idft, real_if_close

INVERTIBILITY_TOL = 1e-12


class OverlapWarning(UserWarning):
    """The two eye copies of an eye generator overlap."""


# ---------------------------------------------------------------------------
# value types

@dataclass(frozen=True, eq=False)
class LatentDistribution:
    """Probability of the single active latent pixel at each grid position."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(as_grid(np.asarray(self.pi, dtype=float)))
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        failures = []
        if np.any(pi < 0):
            failures.append("pi has negative entries")
        if not np.isfinite(pi).all() or abs(pi.sum() - 1.0) > 1e-12:
            failures.append(f"pi sums to {pi.sum()!r}, not 1")
        if failures:
            raise InvalidModelError(failures)

    @classmethod
    def uniform(cls, shape):
        return cls(np.full(shape, 1.0 / np.prod(shape)))

    @classmethod
    def dirac(cls, shape, pos=(0, 0)):
        return cls(spectral.dirac(shape, pos))

    @property
    def shape(self):
        return self.pi.shape

    def has_nonvanishing_dft(self, tol: float = INVERTIBILITY_TOL) -> bool:
        return spectral.nonzero_spectrum(self.pi, tol)


@dataclass(frozen=True, eq=False)
class ConvPairModel:
    """Model 1: ``X = k2 * k1 * Z`` with circular convolutions.

    Kernels are stored as 2D grids of shape ``(2*d2 - 1, 2*d - 1)``; a 1D
    model has a single row.  ``notes`` carries non-fatal warnings raised
    while building the model.
    """

    k1: np.ndarray
    k2: np.ndarray
    latent: LatentDistribution = None
    notes: tuple = field(default=())

    def __post_init__(self):
        k1 = _frozen_grid(self.k1)
        k2 = _frozen_grid(self.k2)
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        failures = []
        if k1.shape != k2.shape:
            raise ShapeError(f"k1 shape {k1.shape} differs from k2 shape {k2.shape}")
        for n, name in zip(k1.shape, ("vertical", "horizontal")):
            if n % 2 == 0:
                failures.append(f"{name} length {n} is even")
        latent = self.latent
        if latent is None:
            latent = LatentDistribution.uniform(k1.shape)
        elif not isinstance(latent, LatentDistribution):
            latent = LatentDistribution(latent)
        object.__setattr__(self, "latent", latent)
        if latent.shape != k1.shape:
            failures.append(f"pi shape {latent.shape} differs from kernel shape {k1.shape}")
        for name, k in (("k1", k1), ("k2", k2)):
            if not np.isfinite(k).all():
                failures.append(f"{name} has non-finite entries")
            elif not spectral.nonzero_spectrum(k, INVERTIBILITY_TOL):
                failures.append(f"{name} is not invertible (vanishing DFT coefficient)")
        if failures:
            raise InvalidModelError(failures)

    @property
    def shape(self):
        return self.k1.shape

    @property
    def d(self) -> int:
        return spectral.half_extent(self.shape[1])

    @property
    def d2(self) -> int:
        return spectral.half_extent(self.shape[0])

    @functools.cached_property
    def K1(self) -> np.ndarray:
        return _frozen(dft(self.k1))

    @functools.cached_property
    def K2(self) -> np.ndarray:
        return _frozen(dft(self.k2))

    @functools.cached_property
    def product_spectrum(self) -> np.ndarray:
        return _frozen(self.K1 * self.K2)

    def replace(self, **kw) -> "ConvPairModel":
        args = dict(k1=self.k1, k2=self.k2, latent=self.latent, notes=self.notes)
        args.update(kw)
        return ConvPairModel(**args)


@dataclass(frozen=True, eq=False)
class DiagonalModel:
    """Model 2: ``X = diag(a) diag(b) Z`` with strictly positive factors."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        b = np.array(self.b, dtype=float).ravel()
        failures = []
        if a.shape != b.shape:
            raise ShapeError(f"a has length {a.size}, b has length {b.size}")
        for name, v in (("a", a), ("b", b)):
            if not np.isfinite(v).all():
                failures.append(f"{name} has non-finite entries")
            elif np.any(v <= 0):
                failures.append(f"{name} has non-positive entries")
        if failures:
            raise InvalidModelError(failures)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.a.size + 1

    @property
    def product(self) -> np.ndarray:
        return self.a * self.b


@dataclass(frozen=True)
class EquivalenceVerdict:
    equivalent: bool
    lam: object
    max_residual: float
    method: str = "closed_form"
    experimental: bool = False


def _frozen(x):
    x = np.asarray(x)
    x.setflags(write=False)
    return x


def _frozen_grid(k):
    k = np.array(as_grid(np.asarray(k)))
    if np.iscomplexobj(k):
        k = real_if_close(k)
    if not np.iscomplexobj(k):
        k = k.astype(float)
    return _frozen(k)


# ---------------------------------------------------------------------------
# construction

def eye_overlap(shape, eye_shape, offset) -> bool:
    """True when the two eye copies placed at ``(0,0)`` and ``offset`` overlap."""
    rows, cols = shape
    h, w = eye_shape
    dr = offset[0] % rows
    dc = offset[1] % cols
    dr = min(dr, rows - dr)
    dc = min(dc, cols - dc)
    return dr < h and dc < w


def make_eye_generator(d: int, d2: int, eye, offset, latent=None) -> ConvPairModel:
    """Eye generator: ``k1`` has unit pixels at ``(0,0)`` and ``offset``.

    ``eye`` is placed with its top-left corner at the origin of ``k2``.  If
    the two eye copies overlap a :class:`OverlapWarning` is issued and
    recorded in ``model.notes``; the model is still returned.
    """
    shape = spectral.grid_shape(d, d2)
    eye = as_grid(np.asarray(eye, dtype=float))
    h, w = eye.shape
    if w >= d or (h > 1 and h >= d2):
        raise ShapeError(f"eye of shape {eye.shape} does not fit a kernel of shape {shape}")
    off = (int(offset[0]), int(offset[1]))
    if off[0] % shape[0] == 0 and off[1] % shape[1] == 0:
        raise ShapeError("offset must differ from the origin")
    k1 = spectral.dirac(shape) + spectral.dirac(shape, off)
    k2 = np.zeros(shape)
    k2[:h, :w] = eye
    notes = ()
    if eye_overlap(shape, (h, w), off):
        msg = f"eye copies of size {h}x{w} overlap at offset {off}; genericity is not guaranteed"
        warnings.warn(msg, OverlapWarning, stacklevel=2)
        notes = (msg,)
    return ConvPairModel(k1, k2, latent, notes)


def random_invertible_kernel(rng, shape, min_modulus: float = 0.1, max_tries: int = 100):
    """Gaussian kernel whose DFT moduli all exceed ``min_modulus``."""
    for _ in range(max_tries):
        k = rng.standard_normal(shape)
        if np.min(np.abs(dft(k))) > min_modulus:
            return k
    raise NotInvertibleError("could not draw a well-conditioned kernel")


# ---------------------------------------------------------------------------
# forward passes and sampling

def forward(model: ConvPairModel, z) -> np.ndarray:
    """``k2 * (k1 * z)`` for a one-hot latent ``z``."""
    z = as_grid(np.asarray(z))
    if z.shape != model.shape:
        raise ShapeError(f"latent shape {z.shape} differs from model shape {model.shape}")
    if np.count_nonzero(z) != 1 or z[np.nonzero(z)][0] != 1:
        raise ShapeError("latent must be one-hot (a single entry equal to 1)")
    v = spectral.circular_convolve(model.k1, z)
    return spectral.circular_convolve(model.k2, v)


def forward_diag(model: DiagonalModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != model.a.shape:
        raise ShapeError(f"latent length {z.size} differs from model length {model.a.size}")
    return model.a * (model.b * z)


def one_hot(shape, pos) -> np.ndarray:
    return spectral.dirac(shape, pos)


def sample_latent(latent, rng) -> np.ndarray:
    """Draw a one-hot latent with pixel probabilities ``latent.pi``."""
    if not isinstance(latent, LatentDistribution):
        latent = LatentDistribution(latent)
    flat = latent.pi.ravel()
    i = rng.choice(flat.size, p=flat / flat.sum())
    z = np.zeros(flat.size)
    z[i] = 1.0
    return z.reshape(latent.shape)


def all_one_hot(shape):
    """Iterate over every one-hot latent of ``shape`` in row-major order."""
    for pos in np.ndindex(*shape):
        yield one_hot(shape, pos)


# ---------------------------------------------------------------------------
# composed over-parameterization

def inverse_kernel(omega) -> np.ndarray:
    W = dft(as_grid(omega))
    if np.min(np.abs(W)) <= INVERTIBILITY_TOL:
        raise NotInvertibleError("omega has a vanishing DFT coefficient")
    return real_if_close(idft(1.0 / W))


def compose_omega(model, omega):
    """Insert ``omega`` and its inverse between the two mechanisms.

    Model 1: ``(omega^-1 * k1, k2 * omega)``.  Model 2: ``(a*omega, b/omega)``
    entrywise.  The observational distribution is unchanged.
    """
    if isinstance(model, DiagonalModel):
        w = np.asarray(omega, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise NotInvertibleError("diagonal omega must be strictly positive")
        return DiagonalModel(model.a * w, model.b / w)
    omega = as_grid(np.asarray(omega))
    if omega.shape != model.shape:
        raise ShapeError(f"omega shape {omega.shape} differs from model shape {model.shape}")
    W = dft(omega)
    if np.min(np.abs(W)) <= INVERTIBILITY_TOL:
        raise NotInvertibleError("omega has a vanishing DFT coefficient")
    k1 = real_if_close(idft(model.K1 / W))
    k2 = real_if_close(idft(model.K2 * W))
    return model.replace(k1=k1, k2=k2, notes=())


def lambda_multiplier(shape, lam) -> np.ndarray:
    """Spectral multiplier equal to ``lam`` on positive horizontal frequencies.

    Negative horizontal frequencies get ``conj(lam)`` and the zero-frequency
    column gets 1, so the multiplier is conjugate symmetric.
    """
    rows, cols = shape
    u = spectral.signed_indices(cols)
    row = np.where(u > 0, lam, np.where(u < 0, np.conj(lam), 1.0)).astype(complex)
    return np.tile(row, (rows, 1))


def lambda_scaled(model: ConvPairModel, lam) -> ConvPairModel:
    """Solution with spectra ``(K1/lam, lam*K2)`` on positive frequencies.

    A real ``lam`` with a real model scales the spatial kernels directly.
    """
    if np.isrealobj(lam) and not np.iscomplexobj(model.k1) and not np.iscomplexobj(model.k2):
        if lam == 0:
            raise NotInvertibleError("lam must be nonzero")
        return model.replace(k1=model.k1 / lam, k2=model.k2 * lam, notes=())
    M = lambda_multiplier(model.shape, lam)
    return compose_omega(model, real_if_close(idft(M)))


def recover_omega(candidate: ConvPairModel, truth: ConvPairModel) -> np.ndarray:
    """``omega`` with ``compose_omega(truth, omega) == candidate``."""
    _require_same_set(candidate, truth, 1e-8)
    if np.min(np.abs(candidate.K1)) <= INVERTIBILITY_TOL:
        raise NotInvertibleError("candidate k1 is not invertible")
    return real_if_close(idft(truth.K1 / candidate.K1))


def same_solution_set(candidate, truth, tol: float = 1e-8) -> bool:
    """Whether both models induce the same observational distribution.

    With a shared latent distribution this holds exactly when the product
    spectra (Model 1) or the products ``a*b`` (Model 2) agree, compared
    relative to the largest modulus of the truth's product.
    """
    if isinstance(candidate, DiagonalModel) != isinstance(truth, DiagonalModel):
        raise TypeError("cannot compare a diagonal model with a convolutional one")
    if isinstance(truth, DiagonalModel):
        if candidate.a.shape != truth.a.shape:
            raise ShapeError("dimension mismatch")
        P, Q = candidate.product, truth.product
    else:
        if candidate.shape != truth.shape:
            raise ShapeError(f"dimension mismatch: {candidate.shape} vs {truth.shape}")
        if not np.allclose(candidate.latent.pi, truth.latent.pi, rtol=0, atol=1e-12):
            return False
        P, Q = candidate.product_spectrum, truth.product_spectrum
    scale = max(float(np.max(np.abs(Q))), np.finfo(float).tiny)
    return bool(np.max(np.abs(P - Q)) <= tol * scale)


def _require_same_set(candidate, truth, tol):
    if not same_solution_set(candidate, truth, tol):
        raise NotInSolutionSetError("models do not produce the same observational distribution")


# ---------------------------------------------------------------------------
# G-equivalence

def positive_bins(n: int) -> np.ndarray:
    """Positions of strictly positive signed indices on a length-``n`` axis."""
    return np.arange(1, (n + 1) // 2)


def _proportional(cand, ref, tol):
    # least-squares lam with cand ~ lam*ref along the last axis
    lam = np.sum(np.conj(ref) * cand, axis=-1) / np.sum(np.abs(ref) ** 2, axis=-1)
    res = np.abs(cand - lam[..., None] * ref)
    scale = np.maximum(np.max(np.abs(cand), axis=-1), np.finfo(float).tiny)
    return lam, np.max(res / scale[..., None])


def g_equivalent(candidate, truth, group=None, tol: float = 1e-8, axes: str = "horizontal",
                 method: str = "closed_form") -> EquivalenceVerdict:
    """Decide whether ``candidate`` generates the same extrapolated class as ``truth``.

    ``method="closed_form"`` tests proportionality of the inner-mechanism
    spectra on strictly positive frequencies; ``"definitional"`` compares the
    multisets ``{(g.K1) * K2 : g in G}`` directly.  2D convolution models
    use one proportionality factor per frequency line along the stretched
    axis and are flagged ``experimental``.
    """
    if method not in ("closed_form", "definitional"):
        raise ValueError(f"unknown method {method!r}")
    _require_same_set(candidate, truth, tol)
    if isinstance(truth, DiagonalModel):
        if method == "definitional":
            return _definitional_diag(candidate, truth, tol)
        lam, res_b = _proportional(candidate.b, truth.b, tol)
        lam = float(np.real(lam))
        res_a = float(np.max(np.abs(candidate.a - truth.a / lam)) / np.max(np.abs(candidate.a)))
        res = max(float(res_b), res_a)
        return EquivalenceVerdict(bool(lam > 0 and res <= tol), lam, res, method)
    if method == "definitional":
        return _definitional_conv(candidate, truth, group, tol, axes)
    if axes not in ("horizontal", "vertical"):
        # no closed form for the product group
        return _definitional_conv(candidate, truth, group, tol, axes)
    K1c, K2c, K1t, K2t = candidate.K1, candidate.K2, truth.K1, truth.K2
    if axes == "vertical":
        K1c, K2c, K1t, K2t = K1c.T, K2c.T, K1t.T, K2t.T
    pos = positive_bins(K1t.shape[1])
    lam, res2 = _proportional(K2c[:, pos], K2t[:, pos], tol)
    res1 = np.max(np.abs(K1c[:, pos] - K1t[:, pos] / lam[:, None])) / np.max(np.abs(K1c[:, pos]))
    res = float(max(res2, res1))
    experimental = K1t.shape[0] > 1
    lam_out = complex(lam[0]) if not experimental else lam
    ok = res <= tol and bool(np.all(np.abs(lam) > 0))
    return EquivalenceVerdict(bool(ok), lam_out, res, method, experimental)


def _multiset_match(A, B, tol):
    """Greedy tolerance matching of two lists of arrays; returns (ok, worst)."""
    scale = max(max(float(np.max(np.abs(x))) for x in B), np.finfo(float).tiny)
    free = list(range(len(B)))
    worst = 0.0
    for x in A:
        dists = [float(np.max(np.abs(x - B[j]))) / scale for j in free]
        i = int(np.argmin(dists))
        if dists[i] > tol:
            return False, dists[i]
        worst = max(worst, dists[i])
        free.pop(i)
    return True, worst


def _definitional_conv(candidate, truth, group, tol, axes):
    if group is None:
        group = StretchGroup(truth.shape, axes)
    axes = group.axes
    A = [spectral.act_stretch_spectrum(g, candidate.K1, axes) * candidate.K2 for g in group.elements]
    B = [spectral.act_stretch_spectrum(g, truth.K1, axes) * truth.K2 for g in group.elements]
    ok, worst = _multiset_match(A, B, tol)
    return EquivalenceVerdict(ok, None, worst, "definitional", truth.shape[0] > 1)


def diag_stretch(g, v) -> np.ndarray:
    """Stretch a vector indexed by ``1..d-1``: ``(g.v)(u) = v(u/g mod d)``."""
    v = np.asarray(v)
    d = v.size + 1
    ginv = spectral.CyclicGroup(d).inverse(g)
    u = np.arange(1, d)
    return v[(u * ginv) % d - 1]


def _definitional_diag(candidate, truth, tol):
    G = spectral.CyclicGroup(truth.d)
    A = [diag_stretch(g, candidate.b) * candidate.a for g in G.enumerate()]
    B = [diag_stretch(g, truth.b) * truth.a for g in G.enumerate()]
    ok, worst = _multiset_match(A, B, tol)
    return EquivalenceVerdict(ok, None, worst, "definitional")


def extrapolated_class(model: ConvPairModel, group=None, axes: str = "horizontal"):
    """Models with ``k1`` replaced by ``g.k1``, in the order of ``group.elements``."""
    if group is None:
        group = StretchGroup(model.shape, axes)
    return [model.replace(k1=spectral.act_stretch(g, model.k1, group.axes), notes=())
            for g in group.elements]


# ---------------------------------------------------------------------------
# model files

def format_model(model: ConvPairModel) -> str:
    parts = []
    for name, arr in (("pi", model.latent.pi), ("k1", model.k1), ("k2", model.k2)):
        parts.append(f"[{name}]\n" + spectral.format_grid(arr))
    return "".join(parts)


def parse_model(text: str) -> ConvPairModel:
    """Parse a ``[pi]/[k1]/[k2]`` container; invariant failures are collected."""
    sections = spectral.grid_sections(text)
    missing = [s for s in ("pi", "k1", "k2") if s not in sections]
    if missing:
        raise InvalidModelError([f"missing section [{s}]" for s in missing])
    failures = []
    try:
        latent = LatentDistribution(sections["pi"])
    except InvalidModelError as exc:
        failures.extend(exc.failures)
        latent = LatentDistribution.uniform(sections["pi"].shape)
    try:
        model = ConvPairModel(sections["k1"], sections["k2"], latent)
    except InvalidModelError as exc:
        failures.extend(exc.failures)
        model = None
    if failures:
        raise InvalidModelError(failures)
    return model


def save_model(path, model: ConvPairModel) -> None:
    with open(path, "w") as fh:
        fh.write(format_model(model))


def load_model(path) -> ConvPairModel:
    with open(path) as fh:
        return parse_model(fh.read())
