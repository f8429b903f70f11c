"""Contrasts, generic ratios and spectral density ratios (SDR).

Frequency averages ``<.>`` run over every DFT bin except the zero-frequency
bin ``(0, 0)`` unless ``include_dc=True`` is passed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import DegenerateError, NotInvertibleError, ShapeError
from .models import ConvPairModel, DiagonalModel, diag_stretch
from .spectral import StretchGroup, as_grid, dft, idft


@dataclass(frozen=True)
class GenericRatioReport:
    numerator: float
    haar_mean: float
    rho: float
    method: str
    group_order: int


def _freq_mean(x, include_dc):
    x = np.asarray(x)
    if include_dc:
        return float(np.mean(x))
    g = as_grid(x)
    if g.size == 1:
        raise ShapeError("a single bin has no non-constant frequencies")
    return float((np.sum(g) - g[0, 0]) / (g.size - 1))


def _ratio(num, den, what):
    if not den > 0:
        raise DegenerateError(f"{what}: zero denominator")
    return num / den


# ---------------------------------------------------------------------------
# contrasts

def power_spectra(model_or_K1, K2=None):
    if isinstance(model_or_K1, ConvPairModel):
        return model_or_K1.K1, model_or_K1.K2
    return as_grid(np.asarray(model_or_K1)), as_grid(np.asarray(K2))


def power_contrast(model, include_dc: bool = False) -> float:
    """Mean power ``<|K2 K1|^2>`` of the product spectrum."""
    K1, K2 = power_spectra(model)
    return _freq_mean(np.abs(K2 * K1) ** 2, include_dc)


def trace_contrast(model: DiagonalModel) -> float:
    """Normalized trace ``<a^2 b^2>`` of the squared diagonal product."""
    return float(np.mean(model.a ** 2 * model.b ** 2))


# ---------------------------------------------------------------------------
# generic ratio

def generic_ratio_bruteforce(model, contrast=None, group=None, axes: str = "horizontal",
                             include_dc: bool = False, action: str = "spectral") -> GenericRatioReport:
    """Contrast at ``model`` over its exact uniform average on the group orbit.

    For a :class:`ConvPairModel` the group stretches ``k1``; ``action``
    selects the frequency-bin permutation (``"spectral"``) or the index
    stretch of the spatial kernel (``"spatial"``).  For a
    :class:`DiagonalModel` the group permutes the entries of the inner factor
    ``b`` and the default contrast is the trace contrast.
    """
    if isinstance(model, DiagonalModel):
        G = spectral.CyclicGroup(model.d)
        phi = contrast or trace_contrast
        num = phi(model)
        vals = [phi(DiagonalModel(model.a, diag_stretch(g, model.b))) for g in G.enumerate()]
        den = float(np.mean(vals))
        return GenericRatioReport(num, den, _ratio(num, den, "generic ratio"), "brute_force", G.order)
    if action not in ("spectral", "spatial"):
        raise ValueError(f"unknown action {action!r}")
    if group is None:
        group = StretchGroup(model.shape, axes)
    if contrast is None:
        def contrast(K1, K2):
            return _freq_mean(np.abs(K2 * K1) ** 2, include_dc)
    K1, K2 = model.K1, model.K2
    num = contrast(K1, K2)
    vals = []
    for g in group.elements:
        if action == "spectral":
            K1g = spectral.act_stretch_spectrum(g, K1, group.axes)
        else:
            K1g = dft(spectral.act_stretch(g, model.k1, group.axes))
        vals.append(contrast(K1g, K2))
    den = float(np.mean(vals))
    return GenericRatioReport(num, den, _ratio(num, den, "generic ratio"), "brute_force", group.order)


def sdr_spectral(K1, K2, include_dc: bool = False) -> float:
    """SDR of two spectra: ``<|K2 K1|^2> / (<|K1|^2> <|K2|^2>)``."""
    P1 = np.abs(as_grid(np.asarray(K1))) ** 2
    P2 = np.abs(as_grid(np.asarray(K2))) ** 2
    if P1.shape != P2.shape:
        raise ShapeError(f"shape mismatch: {P1.shape} vs {P2.shape}")
    den = _freq_mean(P1, include_dc) * _freq_mean(P2, include_dc)
    if not den > 0:
        raise DegenerateError("zero-energy kernel")
    return _freq_mean(P1 * P2, include_dc) / den


def sdr_closed_form(k1, k2=None, include_dc: bool = False) -> float:
    """SDR of spatial kernels ``k1`` (inner) and ``k2`` (outer), or of a model."""
    if isinstance(k1, ConvPairModel):
        return sdr_spectral(k1.K1, k1.K2, include_dc)
    k1 = as_grid(np.asarray(k1))
    k2 = as_grid(np.asarray(k2))
    if k1.shape != k2.shape:
        raise ShapeError(f"shape mismatch: {k1.shape} vs {k2.shape}")
    return sdr_spectral(dft(k1), dft(k2), include_dc)


def sdr_diag(a, b) -> float:
    """Diagonal SDR ``<a^2 b^2> / (<a^2> <b^2>)``."""
    a2 = np.asarray(a, dtype=float) ** 2
    b2 = np.asarray(b, dtype=float) ** 2
    if a2.shape != b2.shape:
        raise ShapeError("a and b differ in length")
    den = a2.mean() * b2.mean()
    if not den > 0:
        raise DegenerateError("zero-energy factor")
    return float(np.mean(a2 * b2) / den)


def anticausal_sdr_spectra(K1, K2, include_dc: bool = False):
    """``(rho_causal, rho_anticausal)`` from the two mechanism spectra.

    The anticausal pair treats the output spectrum ``K2 K1`` as the cause
    and ``1/K2`` as the mechanism mapping it back to the hidden layer.
    """
    K1 = as_grid(np.asarray(K1))
    K2 = as_grid(np.asarray(K2))
    if np.min(np.abs(K2)) <= 1e-12:
        raise NotInvertibleError("k2 is not invertible")
    causal = sdr_spectral(K1, K2, include_dc)
    anti = sdr_spectral(K2 * K1, 1.0 / K2, include_dc)
    return causal, anti


def anticausal_sdr(model: ConvPairModel, include_dc: bool = False):
    return anticausal_sdr_spectra(model.K1, model.K2, include_dc)


# ---------------------------------------------------------------------------
# empirical SDR on activation batches

def upsample(x, s: int) -> np.ndarray:
    """Zero-interleave the last two axes by factor ``s``."""
    x = np.asarray(x)
    out = np.zeros(x.shape[:-2] + (x.shape[-2] * s, x.shape[-1] * s), dtype=x.dtype)
    out[..., ::s, ::s] = x
    return out


def sdr_empirical(batch, filt, s: int = 1, include_dc: bool = False) -> float:
    """Batch SDR of a filter against a set of input maps.

    ``batch`` holds ``B`` maps of shape ``(h, w)``; ``filt`` has shape
    ``(s*h, s*w)`` and acts after zero-interleaved up-sampling by ``s``.  The
    map spectrum at bin ``(u, v)`` of the up-sampled grid is the input
    spectrum at ``(u mod h, v mod w)``.  Numerator and denominator are batch
    averages taken separately.
    """
    X = np.asarray(batch, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[0] == 0:
        raise ShapeError("batch must be a non-empty stack of 2D maps")
    if int(s) != s or s < 1:
        raise ShapeError(f"up-sampling factor must be a positive integer, got {s!r}")
    s = int(s)
    F = np.asarray(filt)
    h, w = X.shape[1:]
    if F.shape != (s * h, s * w):
        raise ShapeError(f"filter shape {F.shape} incompatible with maps {(h, w)} at s={s}")
    psd = np.mean(np.abs(dft(X)) ** 2, axis=0)
    psd = np.tile(psd, (s, s))
    PF = np.abs(dft(F)) ** 2
    den = _freq_mean(PF, include_dc) * _freq_mean(psd, include_dc)
    if not den > 0:
        raise DegenerateError("zero-energy filter or input batch")
    return _freq_mean(PF * psd, include_dc) / den


# ---------------------------------------------------------------------------
# surrogate multi-channel nets

@dataclass(frozen=True, eq=False)
class ConvLayer:
    """Circular convolution layer with full-size kernels ``[out, in, H, W]``."""

    kernels: np.ndarray
    s: int = 1
    bias: np.ndarray = None
    nonlinearity: str = "linear"

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=float)
        if k.ndim != 4:
            raise ShapeError("kernels must have shape [out, in, H, W]")
        if not np.isfinite(k).all():
            raise ShapeError("kernels must be finite")
        if self.nonlinearity not in ("linear", "relu"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        bias = np.zeros(k.shape[0]) if self.bias is None else np.asarray(self.bias, dtype=float)
        if bias.shape != (k.shape[0],):
            raise ShapeError("bias length must match the output channels")
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "bias", bias)

    @property
    def channels(self):
        return self.kernels.shape[:2]

    def __call__(self, x):
        x = upsample(np.asarray(x, dtype=float), self.s)
        if x.shape[-2:] != self.kernels.shape[2:]:
            raise ShapeError(f"input maps {x.shape[-2:]} do not match kernels {self.kernels.shape[2:]}")
        Y = np.einsum("oiuv,biuv->bouv", dft(self.kernels), dft(x))
        y = idft(Y).real + self.bias[None, :, None, None]
        return np.maximum(y, 0.0) if self.nonlinearity == "relu" else y


@dataclass(frozen=True, eq=False)
class SurrogateConvNet:
    layers: tuple = field(default=())

    def __post_init__(self):
        layers = tuple(self.layers)
        for i in range(1, len(layers)):
            if layers[i].channels[1] != layers[i - 1].channels[0]:
                raise ShapeError(f"layer {i} expects {layers[i].channels[1]} channels, "
                                 f"layer {i - 1} produces {layers[i - 1].channels[0]}")
        object.__setattr__(self, "layers", layers)

    def activations(self, batch, upto=None):
        """Inputs to each layer: ``[batch, layer0(batch), ...]`` up to layer ``upto``."""
        acts = [np.asarray(batch, dtype=float)]
        stop = len(self.layers) if upto is None else upto
        for layer in self.layers[:stop]:
            acts.append(layer(acts[-1]))
        return acts

    def __call__(self, batch):
        return self.activations(batch)[-1]

    @classmethod
    def random(cls, rng, channels, size, s=None, nonlinearity="linear"):
        """Gaussian net with ``channels=[c0, c1, ...]`` and input maps ``size x size``."""
        s = s or [1] * (len(channels) - 1)
        layers = []
        side = size
        for i in range(len(channels) - 1):
            side *= s[i]
            k = rng.standard_normal((channels[i + 1], channels[i], side, side)) / np.sqrt(channels[i])
            layers.append(ConvLayer(k, s[i], None, nonlinearity))
        return cls(tuple(layers))


@dataclass(frozen=True)
class HistogramEntry:
    layer: int
    filter: int
    channel: int
    rho: float | None
    flag: str = ""


def sdr_histogram(net: SurrogateConvNet, batch, layer: int, include_dc: bool = False):
    """SDR of every (output filter, input channel) pair of ``net.layers[layer]``.

    Degenerate pairs get ``rho=None`` and a non-empty ``flag``.  Entries are
    ordered by (filter, channel).
    """
    if not 0 <= layer < len(net.layers):
        raise IndexError(f"layer {layer} out of range for a {len(net.layers)}-layer net")
    x = net.activations(batch, upto=layer)[-1]
    L = net.layers[layer]
    n_out, n_in = L.channels
    out = []
    for o in range(n_out):
        for i in range(n_in):
            f = L.kernels[o, i]
            if not np.any(f):
                out.append(HistogramEntry(layer, o, i, None, "zero_filter"))
                continue
            try:
                rho = sdr_empirical(x[:, i], f, L.s, include_dc)
            except DegenerateError:
                out.append(HistogramEntry(layer, o, i, None, "zero_input"))
                continue
            out.append(HistogramEntry(layer, o, i, float(rho), ""))
    return out


def write_histogram_csv(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "filter", "channel", "rho", "flag"])
        for e in entries:
            w.writerow([e.layer, e.filter, e.channel, "" if e.rho is None else repr(e.rho), e.flag])
