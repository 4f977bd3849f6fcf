"""
Classical single-channel separators.

FastICA works on a Hankel embedding of the mixture: 256-sample windows at hop 128, each flattened to 512 real
features (interleaved real and imaginary parts). A complex source occupies two real dimensions of that space,
so the data is whitened to 2 * num_sources dimensions, 2 * num_sources real components are extracted, and
components whose complex mixing vectors are collinear are paired into one estimate. Each component is brought
back to the time domain through its rank-one back-projection, de-interleaved and overlap-added with averaging.

NMF factors the magnitude STFT with Frobenius multiplicative updates, one basis per source, and rebuilds each
source with a Wiener-ratio mask applied to the complex mixture STFT.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, signal
from celery.utils.log import get_task_logger

from rfss.dsp import IqBuffer, SeedContext, StreamTag, derive_stream
from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

HANKEL_WINDOW = 256
HANKEL_HOP = 128
ICA_TOLERANCE = 1e-4
ICA_MAX_ITERATIONS = 500
NMF_ITERATIONS = 500
STFT_FFT_SIZE = 1024
STFT_HOP = 256
MASK_EPS = 1e-12
MAX_SEPARATED_SOURCES = 4


@dataclass(frozen=True)
class SeparationResult:
    estimates: list
    converged: bool
    iterations: int
    objective: list = field(default_factory=list)
    unmixing: Optional[np.ndarray] = None


def _check_num_sources(num_sources: int):
    if not 1 <= num_sources <= MAX_SEPARATED_SOURCES:
        raise ParameterError(f'Separation supports 1..{MAX_SEPARATED_SOURCES} sources, got {num_sources}')


# --------------------------------------------------------------------------------------------------------------
# STFT

@dataclass(frozen=True)
class StftGrid:
    # num_frames x num_bins, bins in FFT order
    frames: np.ndarray
    fft_size: int
    hop: int
    length: int
    sample_rate_hz: float
    window: str = 'hann'

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def with_frames(self, frames: np.ndarray) -> 'StftGrid':
        return StftGrid(frames, self.fft_size, self.hop, self.length, self.sample_rate_hz, self.window)


def stft(x: IqBuffer, fft_size: int = STFT_FFT_SIZE, hop: int = STFT_HOP) -> StftGrid:
    _, _, zxx = signal.stft(x.samples, fs=x.sample_rate_hz, window='hann', nperseg=fft_size,
                            noverlap=fft_size - hop, return_onesided=False, detrend=False)
    return StftGrid(frames=zxx.T, fft_size=fft_size, hop=hop, length=len(x), sample_rate_hz=x.sample_rate_hz)


def istft(grid: StftGrid) -> IqBuffer:
    _, y = signal.istft(grid.frames.T, fs=grid.sample_rate_hz, window=grid.window, nperseg=grid.fft_size,
                        noverlap=grid.fft_size - grid.hop, input_onesided=False)
    if y.size < grid.length:
        y = np.concatenate([y, np.zeros(grid.length - y.size, dtype=y.dtype)])
    return IqBuffer(y[:grid.length], grid.sample_rate_hz)


# --------------------------------------------------------------------------------------------------------------
# Hankel embedding

@dataclass(frozen=True)
class HankelFrames:
    rows: np.ndarray
    length: int
    window: int = HANKEL_WINDOW
    hop: int = HANKEL_HOP

    @property
    def num_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.num_frames) * self.hop


def hankel_frame_count(num_samples: int, window: int = HANKEL_WINDOW, hop: int = HANKEL_HOP) -> int:
    return (num_samples - window) // hop + 1


def hankel_embed(x: IqBuffer, window: int = HANKEL_WINDOW, hop: int = HANKEL_HOP) -> HankelFrames:
    if len(x) < window:
        raise ParameterError(f'Hankel embedding needs at least {window} samples, got {len(x)}')
    windows = sliding_window_view(x.samples, window)[::hop]
    rows = np.empty((windows.shape[0], 2 * window))
    rows[:, 0::2] = windows.real
    rows[:, 1::2] = windows.imag
    return HankelFrames(rows=rows, length=len(x), window=window, hop=hop)


def deinterleave(rows: np.ndarray) -> np.ndarray:
    return rows[..., 0::2] + 1j * rows[..., 1::2]


def overlap_add(windows: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Average of every window covering each sample; samples no window covers stay zero."""
    num_frames, width = windows.shape
    index = (np.arange(num_frames) * hop)[:, None] + np.arange(width)[None, :]
    out = np.zeros(length, dtype=np.complex128)
    np.add.at(out, index, windows)
    counts = np.bincount(index.ravel(), minlength=length)
    covered = counts > 0
    out[covered] /= counts[covered]
    return out


# --------------------------------------------------------------------------------------------------------------
# FastICA

def _sym_decorrelation(w: np.ndarray) -> np.ndarray:
    """W <- (W W^T)^{-1/2} W"""
    s, u = linalg.eigh(w @ w.T)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def _logcosh(s: np.ndarray):
    gs = np.tanh(s)
    return gs, (1 - gs ** 2).mean(axis=-1)


def whiten(rows: np.ndarray, num_components: int):
    """
    Centre and project onto the leading eigenvectors of the feature covariance. Returns the whitened data
    (components x frames), the eigenvectors and their eigenvalues.
    """
    centred = rows - rows.mean(axis=0)
    cov = centred.T @ centred / centred.shape[0]
    eigvals, eigvecs = linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:num_components]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    eigvals = np.maximum(eigvals, eigvals[0] * 1e-12)
    return (centred @ eigvecs / np.sqrt(eigvals)).T, eigvecs, eigvals


def fastica(z: np.ndarray, rng: np.random.Generator, tol: float = ICA_TOLERANCE,
            max_iter: int = ICA_MAX_ITERATIONS):
    """Symmetric fixed-point FastICA with the log-cosh contrast on whitened data z (components x frames)."""
    m, n = z.shape
    w = _sym_decorrelation(rng.standard_normal((m, m)))
    lim, iterations = np.inf, 0
    for iterations in range(1, max_iter + 1):
        gs, g_s = _logcosh(w @ z)
        w_next = _sym_decorrelation(gs @ z.T / n - g_s[:, None] * w)
        lim = np.max(np.abs(np.abs(np.einsum('ij,ij->i', w_next, w)) - 1))
        w = w_next
        if lim < tol:
            break
    converged = bool(lim < tol)
    if not converged:
        logger.debug(f'FastICA stopped after {iterations} iterations (lim {lim:.2e})')
    return w, converged, iterations


def pair_components(mixing: np.ndarray, num_sources: int) -> list:
    """
    Greedily pair the rows of ``mixing`` (real feature-space mixing vectors) by the complex collinearity of
    their de-interleaved forms, most collinear first.
    """
    vectors = deinterleave(mixing)
    norms = np.linalg.norm(vectors, axis=1)
    gram = np.abs(vectors.conj() @ vectors.T) / np.outer(norms, norms)
    candidates = sorted(((i, j) for i in range(len(vectors)) for j in range(i + 1, len(vectors))),
                        key=lambda ij: -gram[ij])
    pairs, used = [], set()
    for i, j in candidates:
        if i not in used and j not in used:
            pairs.append((i, j))
            used.update((i, j))
        if len(pairs) == num_sources:
            break
    return pairs


def fastica_separate(x: IqBuffer, num_sources: int, ctx: SeedContext) -> SeparationResult:
    _check_num_sources(num_sources)
    if num_sources == 1:
        return SeparationResult(estimates=[x], converged=True, iterations=0)
    frames = hankel_embed(x)
    num_components = 2 * num_sources
    z, eigvecs, eigvals = whiten(frames.rows, num_components)
    w, converged, iterations = fastica(z, derive_stream(ctx.with_tag(StreamTag.SEPARATION)))
    activations = w @ z
    # row k is the feature-space mixing vector of component k
    mixing = w @ (np.sqrt(eigvals)[:, None] * eigvecs.T)
    components = [overlap_add(deinterleave(np.outer(activations[k], mixing[k])), frames.hop, frames.length)
                  for k in range(num_components)]
    estimates = [x.with_samples(components[i] + components[j]) for i, j in pair_components(mixing, num_sources)]
    return SeparationResult(estimates=estimates, converged=converged, iterations=iterations, unmixing=w)


# --------------------------------------------------------------------------------------------------------------
# NMF

def frobenius_objective(v: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    return float(np.sum((v - w @ h) ** 2))


def nmf(v: np.ndarray, num_components: int, rng: np.random.Generator, iterations: int = NMF_ITERATIONS,
        eps: float = MASK_EPS):
    """Lee-Seung multiplicative updates for |V - WH|_F^2. Returns W, H and the objective after every update."""
    scale = np.sqrt(max(v.mean(), eps) / num_components)
    w = rng.random((v.shape[0], num_components)) * scale
    h = rng.random((num_components, v.shape[1])) * scale
    objective = []
    for _ in range(iterations):
        h *= (w.T @ v) / (w.T @ w @ h + eps)
        w *= (v @ h.T) / (w @ h @ h.T + eps)
        objective.append(frobenius_objective(v, w, h))
    return w, h, objective


def wiener_masks(w: np.ndarray, h: np.ndarray, eps: float = MASK_EPS) -> np.ndarray:
    """masks[k] = w_k h_k / (WH + eps), shape components x bins x frames."""
    parts = w.T[:, :, None] * h[:, None, :]
    return parts / (parts.sum(axis=0) + eps)


def nmf_separate(x: IqBuffer, num_sources: int, ctx: SeedContext,
                 iterations: int = NMF_ITERATIONS) -> SeparationResult:
    _check_num_sources(num_sources)
    grid = stft(x)
    # bins x frames, the usual NMF orientation
    spectrum = grid.frames.T
    w, h, objective = nmf(np.abs(spectrum), num_sources, derive_stream(ctx.with_tag(StreamTag.SEPARATION)),
                          iterations=iterations)
    estimates = [istft(grid.with_frames((mask * spectrum).T)) for mask in wiener_masks(w, h)]
    return SeparationResult(estimates=estimates, converged=True, iterations=iterations, objective=objective)


SEPARATORS = {
    'ica': fastica_separate,
    'nmf': nmf_separate,
}


def separate(method: str, x: IqBuffer, num_sources: int, ctx: SeedContext) -> SeparationResult:
    try:
        separator = SEPARATORS[method]
    except KeyError:
        raise ParameterError(f'Unknown separation method {method!r}; choose from {sorted(SEPARATORS)}') from None
    return separator(x, num_sources, ctx)
