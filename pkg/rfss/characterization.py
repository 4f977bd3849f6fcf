"""
Signal statistics used to characterize corpus samples: PAPR, Welch PSD, 99% occupied bandwidth, envelope
histogram and an STFT spectrogram, plus CSV export for plotting.
"""
import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft, signal
from celery.utils.log import get_task_logger

from rfss.dsp import IqBuffer
from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

WELCH_SEGMENT = 4096
WELCH_OVERLAP = WELCH_SEGMENT // 2
OBW_FRACTION = 0.99
ENVELOPE_BINS = 256
# envelope histogram range, in multiples of the RMS amplitude; larger values land in the last bin
ENVELOPE_MAX_RMS = 5.0
SPECTROGRAM_FFT = 1024
SPECTROGRAM_HOP = 256
MIN_CHARACTERIZE_SAMPLES = WELCH_SEGMENT

CSV_FILES = ('papr.csv', 'psd.csv', 'envelope.csv', 'spectrogram.csv')


def papr_db(x: IqBuffer) -> float:
    power = np.abs(x.samples) ** 2
    mean = power.mean()
    if mean == 0:
        raise ParameterError('PAPR is undefined for an all-zero buffer')
    return float(10 * np.log10(power.max() / mean))


def welch_psd(x: IqBuffer):
    """Two-sided density, frequencies ascending from -rate/2."""
    freqs, psd = signal.welch(x.samples, fs=x.sample_rate_hz, window='hann', nperseg=WELCH_SEGMENT,
                              noverlap=WELCH_OVERLAP, return_onesided=False, detrend=False, scaling='density')
    return fft.fftshift(freqs), fft.fftshift(psd)


def occupied_bandwidth(freqs: np.ndarray, psd: np.ndarray, fraction: float = OBW_FRACTION) -> float:
    """Width between the (1 - fraction)/2 and (1 + fraction)/2 points of the cumulative PSD."""
    total = psd.sum()
    if total <= 0:
        raise ParameterError('Occupied bandwidth is undefined for a zero spectrum')
    cumulative = np.cumsum(psd) / total
    tail = (1 - fraction) / 2
    low = np.searchsorted(cumulative, tail)
    high = min(np.searchsorted(cumulative, 1 - tail), len(freqs) - 1)
    return float(freqs[high] - freqs[low])


def psd_centroid_hz(freqs: np.ndarray, psd: np.ndarray) -> float:
    return float(np.sum(freqs * psd) / np.sum(psd))


def envelope_histogram(x: IqBuffer, bins: int = ENVELOPE_BINS):
    """Density of |x| / rms(x) over [0, ENVELOPE_MAX_RMS]."""
    envelope = np.abs(x.samples) / np.sqrt(x.power)
    density, edges = np.histogram(np.minimum(envelope, ENVELOPE_MAX_RMS), bins=bins,
                                  range=(0.0, ENVELOPE_MAX_RMS), density=True)
    return edges, density


def spectrogram(x: IqBuffer):
    """Power spectrogram, rows are frequencies ascending from -rate/2, columns are frames."""
    freqs, times, sxx = signal.spectrogram(x.samples, fs=x.sample_rate_hz, window='hann', nperseg=SPECTROGRAM_FFT,
                                           noverlap=SPECTROGRAM_FFT - SPECTROGRAM_HOP, return_onesided=False,
                                           detrend=False, mode='psd')
    return fft.fftshift(freqs), times, fft.fftshift(sxx, axes=0)


@dataclass(frozen=True)
class SignalStats:
    papr_db: float
    psd_freqs_hz: np.ndarray
    psd: np.ndarray
    occupied_bw_hz: float
    envelope_edges: np.ndarray
    envelope_density: np.ndarray
    spectrogram_freqs_hz: np.ndarray
    spectrogram_times_s: np.ndarray
    spectrogram: np.ndarray

    @property
    def psd_centroid_hz(self) -> float:
        return psd_centroid_hz(self.psd_freqs_hz, self.psd)


def characterize(x: IqBuffer) -> SignalStats:
    if len(x) < MIN_CHARACTERIZE_SAMPLES:
        raise ParameterError(f'Characterization needs at least {MIN_CHARACTERIZE_SAMPLES} samples, got {len(x)}')
    freqs, psd = welch_psd(x)
    edges, density = envelope_histogram(x)
    sg_freqs, sg_times, sg = spectrogram(x)
    return SignalStats(papr_db=papr_db(x),
                       psd_freqs_hz=freqs,
                       psd=psd,
                       occupied_bw_hz=occupied_bandwidth(freqs, psd),
                       envelope_edges=edges,
                       envelope_density=density,
                       spectrogram_freqs_hz=sg_freqs,
                       spectrogram_times_s=sg_times,
                       spectrogram=sg)


@dataclass(frozen=True)
class AggregateStats:
    """Statistics pooled over many signals of one standard."""
    label: str
    count: int
    papr_db: list
    occupied_bw_hz: list
    mean: SignalStats

    @property
    def papr_summary(self) -> dict:
        return {'min': float(np.min(self.papr_db)),
                'median': float(np.median(self.papr_db)),
                'max': float(np.max(self.papr_db))}

    @property
    def occupied_bw_summary(self) -> dict:
        return {'min': float(np.min(self.occupied_bw_hz)),
                'median': float(np.median(self.occupied_bw_hz)),
                'max': float(np.max(self.occupied_bw_hz))}


def aggregate(label: str, stats: Sequence[SignalStats]) -> AggregateStats:
    """Mean PSD, mean spectrogram and pooled envelope density; PAPR and bandwidth kept per signal."""
    if not stats:
        raise ParameterError(f'Nothing to aggregate for {label}')
    first = stats[0]
    mean_psd = np.mean([s.psd for s in stats], axis=0)
    mean = SignalStats(papr_db=float(np.mean([s.papr_db for s in stats])),
                       psd_freqs_hz=first.psd_freqs_hz,
                       psd=mean_psd,
                       occupied_bw_hz=occupied_bandwidth(first.psd_freqs_hz, mean_psd),
                       envelope_edges=first.envelope_edges,
                       envelope_density=np.mean([s.envelope_density for s in stats], axis=0),
                       spectrogram_freqs_hz=first.spectrogram_freqs_hz,
                       spectrogram_times_s=first.spectrogram_times_s,
                       spectrogram=np.mean([s.spectrogram for s in stats], axis=0))
    return AggregateStats(label=label,
                          count=len(stats),
                          papr_db=[s.papr_db for s in stats],
                          occupied_bw_hz=[s.occupied_bw_hz for s in stats],
                          mean=mean)


def export_csv(stats: SignalStats, out_dir: str, papr_values: Sequence[float] = None) -> list:
    """Writes the four CSV files into out_dir and returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, name) for name in CSV_FILES]
    papr_path, psd_path, envelope_path, spectrogram_path = paths

    with open(papr_path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['index', 'papr_db'])
        for i, value in enumerate(papr_values if papr_values is not None else [stats.papr_db]):
            writer.writerow([i, f'{value:.6f}'])
    np.savetxt(psd_path, np.column_stack([stats.psd_freqs_hz, 10 * np.log10(stats.psd + 1e-30)]),
               delimiter=',', header='freq_hz,psd_db_per_hz', comments='', fmt='%.6f')
    centres = (stats.envelope_edges[:-1] + stats.envelope_edges[1:]) / 2
    np.savetxt(envelope_path, np.column_stack([centres, stats.envelope_density]),
               delimiter=',', header='envelope_over_rms,density', comments='', fmt='%.6g')
    # first row holds frame times, first column the frequencies
    grid = np.empty((stats.spectrogram.shape[0] + 1, stats.spectrogram.shape[1] + 1))
    grid[0, 0] = np.nan
    grid[0, 1:] = stats.spectrogram_times_s
    grid[1:, 0] = stats.spectrogram_freqs_hz
    grid[1:, 1:] = 10 * np.log10(stats.spectrogram + 1e-30)
    np.savetxt(spectrogram_path, grid, delimiter=',', fmt='%.6g')
    logger.debug(f'Characterization CSVs written to {out_dir}')
    return paths
