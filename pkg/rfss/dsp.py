"""
Shared signal plumbing: the immutable complex buffer every stage exchanges, the seeded random streams,
pulse-shaping filter design, FIR filtering and rational resampling.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import signal, special
from celery.utils.log import get_task_logger

from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

CORPUS_RATE_HZ = 30.72e6
MAX_RESAMPLE_FACTOR = 64
RESAMPLER_STOPBAND_DB = 65.0
# Fraction of the narrower Nyquist band kept flat by the resampler
RESAMPLER_PASSBAND_FRACTION = 0.8


@dataclass(frozen=True)
class IqBuffer:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ParameterError('IqBuffer needs a non-empty one-dimensional sample vector')
        if not np.all(np.isfinite(samples)):
            raise ParameterError('IqBuffer samples must be finite')
        if not self.sample_rate_hz > 0:
            raise ParameterError(f'Sample rate must be positive, got {self.sample_rate_hz}')
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'sample_rate_hz', float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def with_samples(self, samples) -> 'IqBuffer':
        return IqBuffer(samples, self.sample_rate_hz)

    def scaled_to_power(self, power=1.0) -> 'IqBuffer':
        current = self.power
        if current == 0:
            raise ParameterError('Cannot normalize an all-zero buffer')
        return self.with_samples(self.samples * math.sqrt(power / current))


class StreamTag(Enum):
    BITS = 'bits'
    CHANNEL = 'channel'
    IMPAIRMENT = 'impairment'
    NOISE = 'noise'
    SCENARIO = 'scenario'
    SEPARATION = 'separation'
    CROP = 'crop'


_TAG_KEYS = {tag: n for n, tag in enumerate(StreamTag)}


@dataclass(frozen=True)
class SeedContext:
    master_seed: int
    sample_index: int
    stream_tag: StreamTag
    source_slot: int = 0
    substream: int = 0
    corpus_id: int = 0

    def __post_init__(self):
        for name in ('master_seed', 'sample_index', 'source_slot', 'substream', 'corpus_id'):
            value = getattr(self, name)
            if not 0 <= value < 2 ** 64:
                raise ParameterError(f'{name} must be an unsigned 64-bit integer, got {value}')

    def with_tag(self, stream_tag: StreamTag, substream: int = 0) -> 'SeedContext':
        return replace(self, stream_tag=stream_tag, substream=substream)

    def for_source(self, source_slot: int) -> 'SeedContext':
        return replace(self, source_slot=source_slot)

    def child(self, substream: int) -> 'SeedContext':
        return replace(self, substream=substream)


def derive_stream(ctx: SeedContext) -> np.random.Generator:
    """
    Counter-based generator keyed by the whole context. Equal contexts give equal streams no matter which
    process asks or in what order.
    """
    seed_seq = np.random.SeedSequence(entropy=ctx.master_seed,
                                      spawn_key=(ctx.corpus_id, ctx.sample_index, _TAG_KEYS[ctx.stream_tag],
                                                 ctx.source_slot, ctx.substream))
    return np.random.Generator(np.random.Philox(seed_seq))


class FilterKind(Enum):
    GAUSSIAN_GMSK = 'gaussian_gmsk'
    ROOT_RAISED_COSINE = 'root_raised_cosine'


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    bt_or_rolloff: float
    span_symbols: int
    samples_per_symbol: int

    def validate(self):
        if self.span_symbols < 1 or self.samples_per_symbol < 1:
            raise ParameterError(f'Filter span and oversampling must be positive: {self}')
        if self.kind is FilterKind.GAUSSIAN_GMSK and not 0 < self.bt_or_rolloff <= 1:
            raise ParameterError(f'BT product must lie in (0, 1], got {self.bt_or_rolloff}')
        if self.kind is FilterKind.ROOT_RAISED_COSINE and not 0 <= self.bt_or_rolloff <= 1:
            raise ParameterError(f'Roll-off must lie in [0, 1], got {self.bt_or_rolloff}')


def _tap_times(spec: FilterSpec) -> np.ndarray:
    # odd length keeps the taps symmetric about a centre sample
    num_taps = (spec.span_symbols * spec.samples_per_symbol) | 1
    return (np.arange(num_taps) - (num_taps - 1) / 2) / spec.samples_per_symbol


def _gaussian_frequency_pulse(t: np.ndarray, bt: float) -> np.ndarray:
    # rectangular symbol convolved with a Gaussian of bandwidth B, time in symbol periods
    k = 2 * math.pi * bt / math.sqrt(math.log(2))
    return 0.5 * (special.erf(k * (t + 0.5) / math.sqrt(2)) - special.erf(k * (t - 0.5) / math.sqrt(2)))


def _root_raised_cosine(t: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0:
        return np.sinc(t)
    taps = np.empty_like(t)
    singular = np.isclose(np.abs(t), 1 / (4 * alpha))
    centre = t == 0
    regular = ~(singular | centre)
    tr = t[regular]
    taps[regular] = (np.sin(math.pi * tr * (1 - alpha)) + 4 * alpha * tr * np.cos(math.pi * tr * (1 + alpha))) \
        / (math.pi * tr * (1 - (4 * alpha * tr) ** 2))
    taps[centre] = 1 - alpha + 4 * alpha / math.pi
    taps[singular] = alpha / math.sqrt(2) * ((1 + 2 / math.pi) * math.sin(math.pi / (4 * alpha))
                                             + (1 - 2 / math.pi) * math.cos(math.pi / (4 * alpha)))
    return taps


def design_filter(spec: FilterSpec) -> np.ndarray:
    """
    Gaussian taps sum to one so that an isolated symbol, integrated with modulation index h, advances the
    phase by exactly pi*h. Root-raised-cosine taps have unit energy.
    """
    spec.validate()
    t = _tap_times(spec)
    if spec.kind is FilterKind.GAUSSIAN_GMSK:
        taps = _gaussian_frequency_pulse(t, spec.bt_or_rolloff)
        return taps / taps.sum()
    taps = _root_raised_cosine(t, spec.bt_or_rolloff)
    return taps / np.sqrt(np.sum(taps ** 2))


def fir_filter(x: IqBuffer, taps: np.ndarray) -> IqBuffer:
    """Linear convolution trimmed to the input length, centred on the middle tap."""
    return x.with_samples(np.convolve(x.samples, taps, mode='same'))


@lru_cache(maxsize=None)
def _resampling_taps(up: int, down: int) -> np.ndarray:
    band_edge = 1 / max(up, down)
    width = (1 - RESAMPLER_PASSBAND_FRACTION) * band_edge
    num_taps, beta = signal.kaiserord(RESAMPLER_STOPBAND_DB, width)
    num_taps |= 1
    # stopband starts exactly at the narrower Nyquist edge
    taps = signal.firwin(num_taps, band_edge - width / 2, window=('kaiser', beta))
    logger.debug(f'Designed {num_taps}-tap resampling filter for {up}/{down}')
    taps.setflags(write=False)
    return taps


def resampling_ratio(source_rate_hz: float, target_rate_hz: float) -> Fraction:
    if source_rate_hz <= 0 or target_rate_hz <= 0:
        raise ParameterError('Sample rates must be positive')
    ratio = Fraction(target_rate_hz / source_rate_hz).limit_denominator(MAX_RESAMPLE_FACTOR)
    exact = target_rate_hz / source_rate_hz
    if ratio.numerator > MAX_RESAMPLE_FACTOR or abs(float(ratio) - exact) > 1e-9 * exact:
        raise ParameterError(f'Rate ratio {exact!r} is not a rational of at most '
                             f'{MAX_RESAMPLE_FACTOR}/{MAX_RESAMPLE_FACTOR}')
    return ratio


def resample(x: IqBuffer, target_rate_hz: float) -> IqBuffer:
    ratio = resampling_ratio(x.sample_rate_hz, target_rate_hz)
    if ratio == 1:
        return x
    up, down = ratio.numerator, ratio.denominator
    y = signal.resample_poly(x.samples, up, down, window=_resampling_taps(up, down))
    return IqBuffer(y, target_rate_hz)


def power_db(x) -> float:
    samples = x.samples if isinstance(x, IqBuffer) else np.asarray(x)
    return 10 * math.log10(np.mean(np.abs(samples) ** 2))


def crop(x: IqBuffer, offset: int, length: int) -> IqBuffer:
    if offset < 0 or offset + length > len(x):
        raise ParameterError(f'Cannot take {length} samples at offset {offset} from a {len(x)}-sample buffer')
    return x.with_samples(x.samples[offset:offset + length])
