"""Cyclic-group algebra, DFTs, circular convolution and Haar analysis.

Array conventions used throughout mechlab
-----------------------------------------
A kernel on the signed grid is a 2D array of shape ``(2*d2 - 1, 2*d - 1)``:
axis 1 is the horizontal axis (half-extent ``d``), axis 0 the vertical one
(half-extent ``d2``; ``d2 = 1`` gives a 1D signal stored as a single row).
Positions are given as ``(row, col)``.  Entries are stored in FFT order:
signed index ``m`` lives at array position ``m mod n``, so index 0 is the
first element and negative indices wrap to the end.  Spectra use the same
layout, with the zero frequency at position ``(0, 0)``.
"""
from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GroupError, ShapeError


# ---------------------------------------------------------------------------
# grid helpers

def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % p for p in range(3, math.isqrt(n) + 1, 2))


def grid_shape(d: int, d2: int = 1) -> tuple[int, int]:
    """Array shape of a kernel with horizontal half-extent ``d``."""
    return (2 * d2 - 1, 2 * d - 1)


def half_extent(n: int) -> int:
    if n < 1 or n % 2 == 0:
        raise ShapeError(f"signed grid length must be odd and positive, got {n}")
    return (n + 1) // 2


def signed_indices(n: int) -> np.ndarray:
    """Signed index stored at each position of a length-``n`` axis."""
    p = np.arange(n)
    return np.where(p < (n + 1) // 2, p, p - n)


def as_grid(x) -> np.ndarray:
    """View 1D signals as single-row grids; pass 2D arrays through."""
    x = np.asarray(x)
    if x.ndim == 1:
        return x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 1D or 2D array, got shape {x.shape}")
    return x


def dirac(shape, pos=(0, 0), dtype=float) -> np.ndarray:
    """Unit impulse at signed position ``pos`` (row, col)."""
    out = np.zeros(shape, dtype=dtype)
    out[pos[0] % shape[0], pos[1] % shape[1]] = 1
    return out


# ---------------------------------------------------------------------------
# cyclic group

@dataclass(frozen=True)
class CyclicGroup:
    """Multiplicative group of nonzero integers modulo a prime ``d``."""

    modulus: int

    def __post_init__(self):
        if not isinstance(self.modulus, (int, np.integer)) or self.modulus < 3 or not is_prime(int(self.modulus)):
            raise GroupError(f"modulus must be a prime >= 3, got {self.modulus!r}")

    @property
    def order(self) -> int:
        return self.modulus - 1

    def check(self, g) -> int:
        g = int(g)
        if not 1 <= g < self.modulus:
            raise GroupError(f"{g} is not an element of the multiplicative group mod {self.modulus}")
        return g

    def multiply(self, g, h) -> int:
        return (self.check(g) * self.check(h)) % self.modulus

    def inverse(self, g) -> int:
        return pow(self.check(g), -1, self.modulus)

    def power(self, g, k: int) -> int:
        return pow(self.check(g), k, self.modulus)

    def enumerate(self) -> tuple[int, ...]:
        return tuple(range(1, self.modulus))

    @functools.cached_property
    def generator(self) -> int:
        """Smallest element whose powers cover the group."""
        q = self.order
        factors = {p for p in range(2, q + 1) if q % p == 0 and is_prime(p)}
        for g in range(2 if self.modulus > 3 else 2, self.modulus):
            if all(pow(g, q // p, self.modulus) != 1 for p in factors):
                return g
        raise AssertionError("prime modulus without primitive root")  # pragma: no cover

    def haar_sample(self, rng, size=None):
        """Draw from the normalized Haar measure (uniform on the group)."""
        return rng.integers(1, self.modulus, size=size)


AXES = ("horizontal", "vertical", "both")


@dataclass(frozen=True)
class StretchGroup:
    """Stretching group acting on selected axes of a kernel of ``shape``.

    Single-axis groups have integer elements; ``axes="both"`` uses the
    product group and its elements are ``(g_horizontal, g_vertical)`` pairs.
    """

    shape: tuple
    axes: str = "horizontal"

    def __post_init__(self):
        if self.axes not in AXES:
            raise GroupError(f"axes must be one of {AXES}, got {self.axes!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        self.factors  # validates primality

    @functools.cached_property
    def factors(self) -> tuple:
        rows, cols = self.shape
        out = []
        if self.axes in ("horizontal", "both"):
            out.append(CyclicGroup(_axis_modulus(cols, "horizontal")))
        if self.axes in ("vertical", "both"):
            out.append(CyclicGroup(_axis_modulus(rows, "vertical")))
        return tuple(out)

    @property
    def order(self) -> int:
        return math.prod(G.order for G in self.factors)

    @functools.cached_property
    def elements(self) -> tuple:
        if len(self.factors) == 1:
            return self.factors[0].enumerate()
        gh, gv = self.factors
        return tuple((a, b) for a in gh.enumerate() for b in gv.enumerate())

    @property
    def identity(self):
        return 1 if len(self.factors) == 1 else (1, 1)

    def _split(self, g):
        if len(self.factors) == 1:
            return (self.factors[0].check(g),)
        if np.ndim(g) != 1 or len(g) != 2:
            raise GroupError(f"axes='both' needs a (g_horizontal, g_vertical) pair, got {g!r}")
        return tuple(G.check(x) for G, x in zip(self.factors, g))

    def _join(self, parts):
        return parts[0] if len(parts) == 1 else tuple(parts)

    def multiply(self, g, h):
        return self._join([G.multiply(x, y) for G, x, y in zip(self.factors, self._split(g), self._split(h))])

    def inverse(self, g):
        return self._join([G.inverse(x) for G, x in zip(self.factors, self._split(g))])

    def haar_sample(self, rng):
        i = int(rng.integers(0, self.order))
        return self.elements[i]


def _axis_modulus(n: int, name: str) -> int:
    d = half_extent(n)
    if d < 3 or not is_prime(d):
        raise GroupError(f"{name} axis has half-extent {d}, which is not a prime >= 3")
    return d


# ---------------------------------------------------------------------------
# stretching action

@functools.lru_cache(maxsize=256)
def stretch_permutation(g: int, d: int) -> np.ndarray:
    """Source positions realizing ``out[m] = k[g*m]`` on a length ``2d-1`` axis.

    The product ``g*m`` is taken on signed indices: zero is fixed and
    ``m != 0`` maps to ``sign(m) * ((g*|m|) mod d)``.
    """
    n = 2 * d - 1
    m = signed_indices(n)
    target = np.sign(m) * ((g * np.abs(m)) % d)
    src = target % n
    src.setflags(write=False)
    return src


def _apply(k, g, axes, invert):
    k = np.asarray(k)
    grid = as_grid(k)
    group = StretchGroup(grid.shape, axes)
    parts = group._split(g)
    out = grid
    i = 0
    if axes in ("horizontal", "both"):
        G = group.factors[i]
        x = G.inverse(parts[i]) if invert else parts[i]
        out = out[:, stretch_permutation(x, G.modulus)]
        i += 1
    if axes in ("vertical", "both"):
        G = group.factors[i]
        x = G.inverse(parts[i]) if invert else parts[i]
        out = out[stretch_permutation(x, G.modulus), :]
    return out.reshape(k.shape)


def act_stretch(g, k, axes: str = "horizontal") -> np.ndarray:
    """Stretch kernel ``k`` by ``g``: ``(g.k)(m) = k(g m)`` on the selected axes."""
    return _apply(k, g, axes, invert=False)


def act_stretch_spectrum(g, K, axes: str = "horizontal") -> np.ndarray:
    """Frequency-domain stretch: ``(g.K)(u) = K(u / g)`` on the selected axes.

    This is the permutation representation on frequency bins in which
    strictly positive and strictly negative frequencies are permuted
    separately and the zero frequency is fixed.  It preserves conjugate
    symmetry, so real kernels stay real.
    """
    return _apply(K, g, axes, invert=True)


# ---------------------------------------------------------------------------
# DFT

@functools.lru_cache(maxsize=64)
def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix ``W[u, k] = exp(-2i pi u k / n)``."""
    uk = np.outer(np.arange(n), np.arange(n)) % n
    W = np.exp(-2j * np.pi * uk / n)
    W.setflags(write=False)
    return W


def dft(x) -> np.ndarray:
    """Forward DFT (no normalization) over the last one or two axes.

    1D input is transformed along its only axis; arrays with ``ndim >= 2``
    are transformed over their last two axes (leading axes are batch axes).
    """
    x = np.asarray(x)
    if x.ndim == 0 or x.size == 0:
        raise ShapeError("dft needs a non-empty array")
    if x.ndim == 1:
        return dft_matrix(x.shape[0]) @ x
    Wr = dft_matrix(x.shape[-2])
    Wc = dft_matrix(x.shape[-1])
    return Wr @ x @ Wc.T


def idft(X) -> np.ndarray:
    """Inverse of :func:`dft` (carries the ``1/N`` factor)."""
    X = np.asarray(X)
    if X.ndim == 0 or X.size == 0:
        raise ShapeError("idft needs a non-empty array")
    if X.ndim == 1:
        n = X.shape[0]
        return np.conj(dft_matrix(n)) @ X / n
    r, c = X.shape[-2:]
    return np.conj(dft_matrix(r)) @ X @ np.conj(dft_matrix(c)).T / (r * c)


def real_if_close(x, tol: float = 1e-9) -> np.ndarray:
    """Drop a negligible imaginary part (relative to the array scale)."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        scale = max(float(np.max(np.abs(x), initial=0.0)), 1.0)
        if np.max(np.abs(x.imag), initial=0.0) <= tol * scale:
            return x.real.copy()
    return x


# ---------------------------------------------------------------------------
# convolution and energy

def circular_convolve(a, b, backend=None) -> np.ndarray:
    """Circular convolution ``sum_{k,j} a[k,j] b[n-k, m-j]`` (indices modulo shape)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    dtype = np.result_type(a, b, np.float64)
    ga = np.ascontiguousarray(as_grid(a), dtype=dtype)
    gb = np.ascontiguousarray(as_grid(b), dtype=dtype)
    out = kernels.get_backend(backend).conv2d(ga, gb)
    return out.reshape(a.shape)


def parseval_energy(x) -> float:
    """Spatial-domain energy ``sum |x|^2``."""
    return float(np.sum(np.abs(np.asarray(x)) ** 2))


def spectral_energy(X) -> float:
    """Energy computed from a spectrum: ``(1/N) sum |X|^2``."""
    X = np.asarray(X)
    return float(np.sum(np.abs(X) ** 2) / X.size)


def nonzero_spectrum(k, tol: float = 1e-12) -> bool:
    """True when no DFT coefficient of ``k`` has modulus <= ``tol``."""
    return bool(np.min(np.abs(dft(as_grid(k)))) > tol)


# ---------------------------------------------------------------------------
# Haar wavelets

@dataclass(frozen=True)
class WaveletScaleReport:
    """Per-scale mean squared wavelet coefficients, scale 1 = coarsest.

    Scale 1 holds the final approximation band; scales ``2..levels+1`` hold
    the detail bands from the coarsest to the finest level.
    """

    mse: tuple
    counts: tuple

    @property
    def scales(self) -> tuple:
        return tuple(range(1, len(self.mse) + 1))

    @property
    def energies(self) -> tuple:
        return tuple(m * c for m, c in zip(self.mse, self.counts))

    @property
    def total_energy(self) -> float:
        return float(sum(self.energies))

    def pairs(self):
        return list(zip(self.scales, self.mse))


def _haar_step(x):
    # one orthonormal analysis level on the last two axes
    lo = (x[..., 0::2, :] + x[..., 1::2, :]) / np.sqrt(2.0)
    hi = (x[..., 0::2, :] - x[..., 1::2, :]) / np.sqrt(2.0)
    ll = (lo[..., 0::2] + lo[..., 1::2]) / np.sqrt(2.0)
    lh = (lo[..., 0::2] - lo[..., 1::2]) / np.sqrt(2.0)
    hl = (hi[..., 0::2] + hi[..., 1::2]) / np.sqrt(2.0)
    hh = (hi[..., 0::2] - hi[..., 1::2]) / np.sqrt(2.0)
    return ll, (lh, hl, hh)


def haar2d(img, levels: int):
    """Orthonormal 2D Haar decomposition.

    Returns ``(approx, details)`` where ``details[0]`` is the finest level.
    """
    x = np.asarray(img, dtype=float)
    _check_pow2_square(x.shape, levels)
    details = []
    for _ in range(levels):
        x, bands = _haar_step(x)
        details.append(bands)
    return x, details


def _check_pow2_square(shape, levels):
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ShapeError(f"Haar analysis needs a square image, got shape {shape}")
    side = shape[0]
    if side < 1 or side & (side - 1):
        raise ShapeError(f"image side {side} is not a power of two")
    if not 0 <= levels <= int(math.log2(side)):
        raise ShapeError(f"levels={levels} exceeds log2(side)={int(math.log2(side))}")


def haar_wavelet_mse_by_scale(img_a, img_b, levels: int) -> WaveletScaleReport:
    """Mean squared Haar coefficient of ``img_a - img_b`` at each scale."""
    a = np.asarray(img_a, dtype=float)
    b = np.asarray(img_b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    approx, details = haar2d(a - b, levels)
    mse = [float(np.mean(approx ** 2))]
    counts = [approx.size]
    for bands in reversed(details):
        n = sum(band.size for band in bands)
        mse.append(float(sum(np.sum(band ** 2) for band in bands) / n))
        counts.append(n)
    return WaveletScaleReport(tuple(mse), tuple(counts))


def pad_to_pow2(img) -> tuple[np.ndarray, tuple]:
    """Zero-pad symmetrically to the smallest power-of-two square."""
    img = np.asarray(img)
    side = 1 << max(0, (max(img.shape) - 1).bit_length())
    pads = []
    for n in img.shape:
        extra = side - n
        pads.append((extra // 2, extra - extra // 2))
    return np.pad(img, pads), tuple(pads)


# ---------------------------------------------------------------------------
# text grid format

def _fmt(v) -> str:
    if isinstance(v, complex) or np.iscomplexobj(v):
        v = complex(v)
        return f"{v.real!r},{v.imag!r}"
    return repr(float(v))


def format_grid(x) -> str:
    """Serialize a kernel: ``dims <width> <height>`` then row-major values."""
    g = as_grid(np.asarray(x))
    cplx = np.iscomplexobj(g)
    lines = [f"dims {g.shape[1]} {g.shape[0]}"]
    for row in g:
        lines.append(" ".join(_fmt(complex(v) if cplx else float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_grid(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ShapeError("empty grid text")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dims":
        raise ShapeError(f"bad grid header {lines[0]!r}")
    width, height = int(head[1]), int(head[2])
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != width * height:
        raise ShapeError(f"grid declares {width}x{height} values, found {len(tokens)}")
    if any("," in t for t in tokens):
        vals = [complex(*map(float, t.split(","))) if "," in t else complex(float(t)) for t in tokens]
        return np.array(vals, dtype=complex).reshape(height, width)
    return np.array([float(t) for t in tokens]).reshape(height, width)


def write_grid(path, x) -> None:
    with open(path, "w") as fh:
        fh.write(format_grid(x))


def read_grid(path) -> np.ndarray:
    with open(path) as fh:
        return parse_grid(fh.read())


def grid_sections(text: str) -> dict:
    """Split a ``[name]``-sectioned text container into grids."""
    out, name, buf = {}, None, io.StringIO()
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            if name is not None:
                out[name] = parse_grid(buf.getvalue())
            name, buf = s[1:-1], io.StringIO()
        elif s and not s.startswith("#"):
            if name is None:
                raise ShapeError("content before the first [section]")
            buf.write(line + "\n")
    if name is not None:
        out[name] = parse_grid(buf.getvalue())
    return out
