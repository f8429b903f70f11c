"""Interventions on the inner mechanism and extrapolation error reports."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import NotInSolutionSetError
from .models import ConvPairModel, forward, one_hot, same_solution_set
from .spectral import StretchGroup, WaveletScaleReport, idft, real_if_close


def intervene(model: ConvPairModel, g, axes: str = "horizontal", action: str = "spatial") -> ConvPairModel:
    """Replace ``k1`` by its stretch ``g.k1``; ``k2`` and the latent are kept.

    ``action="spatial"`` stretches kernel indices (``k1(g m)``), which moves
    each pixel of ``k1`` to a rescaled position.  ``action="spectral"``
    permutes the frequency bins instead (``K1(u/g)``).
    """
    if action == "spatial":
        k1 = spectral.act_stretch(g, model.k1, axes)
    elif action == "spectral":
        k1 = real_if_close(idft(spectral.act_stretch_spectrum(g, model.K1, axes)))
    else:
        raise ValueError(f"unknown action {action!r}")
    return model.replace(k1=k1, notes=())


@dataclass(frozen=True)
class ExtrapolationRow:
    g: object
    mse: float
    wavelet: WaveletScaleReport | None = None
    direct: float | None = None


@dataclass
class ExtrapolationReport:
    rows: list
    meta: dict = field(default_factory=dict)

    @property
    def mse(self) -> np.ndarray:
        return np.array([r.mse for r in self.rows])

    def max_mse(self) -> float:
        return float(self.mse.max())

    def write_csv(self, path) -> None:
        n_scales = max((len(r.wavelet.mse) for r in self.rows if r.wavelet is not None), default=0)
        direct = any(r.direct is not None for r in self.rows)
        header = ["g", "mse"] + [f"scale{i}" for i in range(1, n_scales + 1)]
        if direct:
            header.append("direct")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in self.rows:
                row = [format_element(r.g), repr(r.mse)]
                if n_scales:
                    row += [repr(v) for v in r.wavelet.mse] if r.wavelet else [""] * n_scales
                if direct:
                    row.append("" if r.direct is None else repr(r.direct))
                w.writerow(row)


def format_element(g) -> str:
    return ":".join(str(int(x)) for x in g) if isinstance(g, tuple) else str(int(g))


def _outputs(candidate, truth, g, z, axes, action):
    xc = forward(intervene(candidate, g, axes, action), z)
    xt = forward(intervene(truth, g, axes, action), z)
    return xc, xt


def compare_extrapolations(candidate: ConvPairModel, truth: ConvPairModel, group=None, z=None,
                           axes: str = "horizontal", action: str = "spatial", tol: float = 1e-8,
                           direct_baseline: bool = False) -> ExtrapolationReport:
    """Pixel MSE between extrapolated candidate and truth outputs for each group element.

    ``z`` defaults to the Dirac latent at the origin.  With
    ``direct_baseline`` an extra column compares the candidate's
    extrapolation with the truth's unintervened output stretched directly.
    """
    if not same_solution_set(candidate, truth, tol):
        raise NotInSolutionSetError("candidate and truth are not observationally equal")
    group = group or StretchGroup(truth.shape, axes)
    z = one_hot(truth.shape, (0, 0)) if z is None else z
    base = forward(truth, z) if direct_baseline else None
    rows = []
    for g in group.elements:
        xc, xt = _outputs(candidate, truth, g, z, group.axes, action)
        direct = None
        if direct_baseline:
            direct = float(np.mean((xc - spectral.act_stretch(g, base, group.axes)) ** 2))
        rows.append(ExtrapolationRow(g, float(np.mean((xc - xt) ** 2)), None, direct))
    return ExtrapolationReport(rows, {"axes": group.axes, "action": action})


def max_mse_over_latents(candidate, truth, group=None, axes="horizontal", action="spatial") -> float:
    """Largest report MSE over every one-hot latent."""
    worst = 0.0
    for pos in np.ndindex(*truth.shape):
        rep = compare_extrapolations(candidate, truth, group, one_hot(truth.shape, pos), axes, action)
        worst = max(worst, rep.max_mse())
    return worst


def wavelet_extrapolation_report(candidate: ConvPairModel, truth: ConvPairModel, group=None, z=None,
                                 levels: int | None = None, axes: str = "horizontal",
                                 action: str = "spatial", tol: float = 1e-8) -> ExtrapolationReport:
    """Pixel report with a per-scale Haar breakdown of each output difference.

    Outputs are zero-padded symmetrically to the next power-of-two square
    before the transform; the padding is recorded in ``meta['padding']``.
    ``levels`` defaults to the full depth.
    """
    rep = compare_extrapolations(candidate, truth, group, z, axes, action, tol)
    group = group or StretchGroup(truth.shape, axes)
    z = one_hot(truth.shape, (0, 0)) if z is None else z
    rows = []
    pads = None
    for row in rep.rows:
        xc, xt = _outputs(candidate, truth, row.g, z, group.axes, action)
        pc, pads = spectral.pad_to_pow2(xc)
        pt, _ = spectral.pad_to_pow2(xt)
        lv = int(math.log2(pc.shape[0])) if levels is None else levels
        rows.append(ExtrapolationRow(row.g, row.mse, spectral.haar_wavelet_mse_by_scale(pc, pt, lv)))
    meta = dict(rep.meta, padding=pads, padded_side=int(pc.shape[0]), output_shape=tuple(truth.shape))
    return ExtrapolationReport(rows, meta)


def eye_positions(k1) -> list:
    """Signed (row, col) positions of the nonzero pixels of ``k1``."""
    k1 = spectral.as_grid(np.asarray(k1))
    rows = spectral.signed_indices(k1.shape[0])
    cols = spectral.signed_indices(k1.shape[1])
    return sorted((int(rows[r]), int(cols[c])) for r, c in zip(*np.nonzero(k1)))
