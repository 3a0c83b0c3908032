"""Frequency-domain coefficient transform and partial directed coherence.

The lag matrices of a fitted VAR model are transformed to a complex matrix
over frequency; its column-normalized magnitudes give the partial directed
coherence ``P[i, j]``, the directed influence of channel j on channel i at a
given frequency (Baccala & Sameshima, 2001). The transform here keeps the
off-diagonal lag sums with a positive sign; PDC magnitudes are identical to
the subtractive convention either way.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .var import VarModel

__all__ = [
    "FrequencyGrid",
    "PdcSpectrum",
    "BandAverages",
    "DEFAULT_BANDS",
    "evaluate_transfer",
    "compute_pdc",
    "average_over_segments",
    "band_average",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_band_averages_json",
]

# Rhythm bands (Hz), inclusive edges.
DEFAULT_BANDS: dict[str, tuple[float, float]] = {
    "theta": (4.0, 7.5),
    "alpha": (8.0, 12.5),
    "beta1": (13.0, 20.5),
    "beta2": (21.0, 30.0),
}

_DEGENERATE_COLUMN_NORM = 1e-12


@dataclass(frozen=True)
class FrequencyGrid:
    """A strictly increasing set of physical frequencies below Nyquist."""

    freqs_hz: np.ndarray
    sampling_rate_hz: float

    def __post_init__(self):
        freqs = np.asarray(self.freqs_hz, dtype=float)
        if freqs.ndim != 1 or freqs.size == 0:
            raise ValueError("freqs_hz must be a non-empty 1-D array")
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("freqs_hz must be strictly increasing")
        nyquist = self.sampling_rate_hz / 2.0
        if freqs[0] < 0 or freqs[-1] > nyquist:
            raise ValueError(
                f"frequencies must lie in [0, {nyquist}] Hz, got [{freqs[0]}, {freqs[-1]}]"
            )
        object.__setattr__(self, "freqs_hz", freqs)
        object.__setattr__(self, "sampling_rate_hz", float(self.sampling_rate_hz))

    @classmethod
    def regular(cls, low_hz: float, high_hz: float, step_hz: float,
                sampling_rate_hz: float) -> "FrequencyGrid":
        """Evenly spaced grid from low to high inclusive."""
        if step_hz <= 0:
            raise ValueError(f"step_hz must be positive, got {step_hz}")
        if high_hz < low_hz:
            raise ValueError(f"high_hz {high_hz} below low_hz {low_hz}")
        count = int(round((high_hz - low_hz) / step_hz)) + 1
        freqs = low_hz + step_hz * np.arange(count)
        return cls(freqs_hz=freqs, sampling_rate_hz=sampling_rate_hz)

    @property
    def n_freqs(self) -> int:
        return self.freqs_hz.size


@dataclass(frozen=True)
class PdcSpectrum:
    """PDC values over a frequency grid.

    ``values[f, i, j]`` is the influence of source channel j on target
    channel i at grid frequency f, in [0, 1]. On a single-model spectrum the
    squared entries of every source column sum to 1 at every frequency;
    averaged spectra do not keep that normalization.
    """

    values: np.ndarray
    grid: FrequencyGrid
    channel_labels: tuple[str, ...]
    degenerate_columns: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m = len(self.channel_labels)
        expected = (self.grid.n_freqs, m, m)
        if vals.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {vals.shape}")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("PDC values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channel_labels", tuple(str(c) for c in self.channel_labels))
        object.__setattr__(self, "degenerate_columns",
                           tuple((int(f), int(j)) for f, j in self.degenerate_columns))


@dataclass(frozen=True)
class BandAverages:
    """PDC averaged within named frequency bands; entries in [0, 1]."""

    bands: dict
    band_edges_hz: dict
    channel_labels: tuple[str, ...]

    def __post_init__(self):
        if set(self.bands) != set(self.band_edges_hz):
            raise ValueError("bands and band_edges_hz must share the same names")
        for name, mat in self.bands.items():
            arr = np.asarray(mat, dtype=float)
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError(f"band {name!r} has values outside [0, 1]")
        object.__setattr__(self, "channel_labels", tuple(str(c) for c in self.channel_labels))


def evaluate_transfer(model: VarModel, f_hz: float, sampling_rate_hz: float) -> np.ndarray:
    """Transform the lag matrices to one complex M x M matrix at a frequency.

    With normalized frequency ``g = f_hz / sampling_rate_hz`` and lag sum
    ``S[i, j] = sum_r A(r)[i, j] * exp(-1j * 2 * pi * g * r)``, the result has
    ``1 - S[i, i]`` on the diagonal and ``S[i, j]`` off the diagonal.

    Raises
    ------
    ValueError
        If ``f_hz`` lies outside [0, Nyquist].
    """
    if not 0.0 <= f_hz <= sampling_rate_hz / 2.0:
        raise ValueError(
            f"frequency {f_hz} Hz outside [0, {sampling_rate_hz / 2.0}] Hz"
        )
    g = f_hz / sampling_rate_hz
    lags = np.arange(1, model.order_p + 1)
    phases = np.exp(-2j * np.pi * g * lags)
    lag_sum = np.tensordot(phases, model.coeff_matrices, axes=(0, 0))
    out = lag_sum.astype(complex)
    idx = np.arange(model.n_channels)
    out[idx, idx] = 1.0 - lag_sum[idx, idx]
    return out


def compute_pdc(model: VarModel, grid: FrequencyGrid) -> PdcSpectrum:
    """Partial directed coherence of a fitted model over a frequency grid.

    Per frequency and channel pair, ``P[i, j] = |T[i, j]| / ||T[:, j]||``
    where T is the transfer matrix from `evaluate_transfer`. A column whose
    norm falls below 1e-12 is zeroed and recorded in
    ``degenerate_columns`` instead of raising.

    A stable model (`check_stability`) is recommended but not enforced.
    """
    n_freqs = grid.n_freqs
    m = model.n_channels
    values = np.empty((n_freqs, m, m))
    degenerate = []
    for fi, f_hz in enumerate(grid.freqs_hz):
        transfer = evaluate_transfer(model, float(f_hz), grid.sampling_rate_hz)
        mags = np.abs(transfer)
        col_norms = np.sqrt((mags * mags).sum(axis=0))
        for j in np.nonzero(col_norms < _DEGENERATE_COLUMN_NORM)[0]:
            degenerate.append((fi, int(j)))
            col_norms[j] = 1.0  # column is zeroed below; avoid 0/0
            mags[:, j] = 0.0
        values[fi] = mags / col_norms
    np.clip(values, 0.0, 1.0, out=values)
    return PdcSpectrum(
        values=values,
        grid=grid,
        channel_labels=model.channel_labels,
        degenerate_columns=tuple(degenerate),
    )


def average_over_segments(spectra) -> PdcSpectrum:
    """Elementwise mean of per-segment spectra, per frequency and pair.

    All spectra must share the same grid and channel labels. The mean of
    normalized columns is generally not normalized, so the result's columns
    are not expected to satisfy the single-model invariant.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("no spectra to average")
    first = spectra[0]
    for s in spectra[1:]:
        if s.channel_labels != first.channel_labels:
            raise ValueError("spectra differ in channel labels")
        if s.grid.sampling_rate_hz != first.grid.sampling_rate_hz or not np.array_equal(
            s.grid.freqs_hz, first.grid.freqs_hz
        ):
            raise ValueError("spectra differ in frequency grid")
    mean = np.mean([s.values for s in spectra], axis=0)
    np.clip(mean, 0.0, 1.0, out=mean)
    degenerate = sorted({entry for s in spectra for entry in s.degenerate_columns})
    return PdcSpectrum(values=mean, grid=first.grid, channel_labels=first.channel_labels,
                       degenerate_columns=tuple(degenerate))


def band_average(spectrum: PdcSpectrum, bands=None) -> BandAverages:
    """Average a spectrum within named bands (edges inclusive on both ends).

    Parameters
    ----------
    spectrum : PdcSpectrum
    bands : mapping name -> (low_hz, high_hz), optional
        Defaults to the theta/alpha/beta1/beta2 rhythm bands.

    Raises
    ------
    ValueError
        If a band contains no grid frequency, naming the band.
    """
    if bands is None:
        bands = DEFAULT_BANDS
    freqs = spectrum.grid.freqs_hz
    matrices = {}
    edges = {}
    for name, (low, high) in bands.items():
        mask = (freqs >= low) & (freqs <= high)
        if not mask.any():
            raise ValueError(f"band {name!r} ({low}-{high} Hz) contains no grid frequency")
        matrices[name] = spectrum.values[mask].mean(axis=0)
        edges[name] = (float(low), float(high))
    return BandAverages(bands=matrices, band_edges_hz=edges,
                        channel_labels=spectrum.channel_labels)


def write_spectrum_csv(spectrum: PdcSpectrum, path) -> None:
    """Dump a spectrum as CSV rows (freq_hz, source, target, pdc)."""
    labels = spectrum.channel_labels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "source", "target", "pdc"])
        for fi, f_hz in enumerate(spectrum.grid.freqs_hz):
            for j, source in enumerate(labels):
                for i, target in enumerate(labels):
                    writer.writerow([repr(float(f_hz)), source, target,
                                     repr(float(spectrum.values[fi, i, j]))])


def read_spectrum_csv(path, sampling_rate_hz: float | None = None) -> PdcSpectrum:
    """Load a spectrum written by `write_spectrum_csv`.

    When the sampling rate is not given, it defaults to twice the highest
    frequency present (the minimal rate for which the grid is valid).
    """
    cells: dict[tuple[float, str, str], float] = {}
    labels: list[str] = []
    freqs: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"freq_hz", "source", "target", "pdc"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            f_hz = float(row["freq_hz"])
            source, target = row["source"], row["target"]
            if f_hz not in freqs:
                freqs.append(f_hz)
            for lab in (source, target):
                if lab not in labels:
                    labels.append(lab)
            cells[(f_hz, source, target)] = float(row["pdc"])
    if not cells:
        raise ValueError(f"{path}: no spectrum rows")
    freqs.sort()
    m = len(labels)
    values = np.empty((len(freqs), m, m))
    try:
        for fi, f_hz in enumerate(freqs):
            for j, source in enumerate(labels):
                for i, target in enumerate(labels):
                    values[fi, i, j] = cells[(f_hz, source, target)]
    except KeyError as exc:
        raise ValueError(f"{path}: incomplete spectrum table, missing {exc}") from None
    if sampling_rate_hz is None:
        sampling_rate_hz = 2.0 * max(freqs)
    grid = FrequencyGrid(freqs_hz=np.array(freqs), sampling_rate_hz=sampling_rate_hz)
    return PdcSpectrum(values=values, grid=grid, channel_labels=tuple(labels))


def write_band_averages_json(averages: BandAverages, path) -> None:
    """Dump band matrices as a JSON map band -> row-major matrix."""
    payload = {
        "channel_labels": list(averages.channel_labels),
        "band_edges_hz": {name: list(edges) for name, edges in averages.band_edges_hz.items()},
        "bands": {name: np.asarray(mat).tolist() for name, mat in averages.bands.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
