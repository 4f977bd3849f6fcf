"""
Baseband generators for the four cellular standards. Every generator returns a unit-power IqBuffer at the
corpus rate of 30.72 MHz; native-rate synthesis runs with a guard margin on both sides that is cropped away
after resampling so the kept span is free of filter start-up transients.
"""
import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Optional

import numpy as np
from scipy import fft
from celery.utils.log import get_task_logger

from rfss.codes import FRAME_CHIPS, NUM_PRIMARY_CODES, primary_scrambling_index, scrambling_code, spread_users
from rfss.dsp import CORPUS_RATE_HZ, FilterKind, FilterSpec, IqBuffer, SeedContext, StreamTag, crop, \
    derive_stream, design_filter, fir_filter, resample
from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

DATASET_DURATION_SAMPLES = 122880


class StandardId(Enum):
    GSM = 'GSM'
    UMTS = 'UMTS'
    LTE = 'LTE'
    NR = 'NR'


STANDARDS = tuple(StandardId)

# GSM
GSM_SYMBOL_RATE_HZ = 1625000 / 6
GSM_SAMPLES_PER_SYMBOL = 9
GSM_NATIVE_RATE_HZ = GSM_SYMBOL_RATE_HZ * GSM_SAMPLES_PER_SYMBOL
# 2.4375 MHz -> 30.72 MHz is 4096/325, taken as 64/25 then 64/13
GSM_INTERMEDIATE_RATE_HZ = 6.24e6
GSM_BT = 0.3
GSM_MODULATION_INDEX = 0.5
GSM_FILTER_SPAN = 3
GSM_MARGIN_SYMBOLS = 16

# UMTS
UMTS_CHIP_RATE_HZ = 3.84e6
UMTS_SAMPLES_PER_CHIP = 8
UMTS_SPREADING_FACTOR = 16
UMTS_ROLLOFF = 0.22
UMTS_FILTER_SPAN = 12
UMTS_MARGIN_CHIPS = 4 * UMTS_SPREADING_FACTOR
UMTS_MAX_USERS = 8

QAM_ORDERS = (4, 16, 64)
NR_ADJACENT_SUBCARRIERS = 368


@dataclass(frozen=True)
class OfdmNumerology:
    name: str
    fft_size: int
    sample_rate_hz: float
    # cyclic prefix lengths of one slot (LTE) or half subframe (NR), native samples
    cp_pattern: tuple
    max_subcarriers: int
    default_subcarriers: int

    @property
    def subcarrier_spacing_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size

    @property
    def block_samples(self) -> int:
        return sum(self.cp_pattern) + len(self.cp_pattern) * self.fft_size

    def at_rate(self, sample_rate_hz: float) -> 'OfdmNumerology':
        factor = sample_rate_hz / self.sample_rate_hz
        if factor != int(factor):
            raise ParameterError(f'{self.name} numerology only scales by integer factors')
        factor = int(factor)
        return OfdmNumerology(self.name, self.fft_size * factor, sample_rate_hz,
                              tuple(cp * factor for cp in self.cp_pattern),
                              self.max_subcarriers, self.default_subcarriers)

    def symbol_starts(self, num_symbols: int) -> np.ndarray:
        """Offsets of each symbol's first sample (start of its cyclic prefix)."""
        cps = np.resize(np.asarray(self.cp_pattern), num_symbols)
        lengths = cps + self.fft_size
        return np.concatenate([[0], np.cumsum(lengths)[:-1]])

    def symbols_within(self, num_samples: int) -> int:
        starts = self.symbol_starts(num_samples // self.fft_size + 1)
        ends = starts + np.resize(np.asarray(self.cp_pattern), starts.size) + self.fft_size
        return int(np.count_nonzero(ends <= num_samples))


# 160/2048 and 144/2048 of the useful symbol at FFT 1024
LTE_NUMEROLOGY = OfdmNumerology('LTE', 1024, 15.36e6, (80,) + (72,) * 6, 600, 600)
# mu = 1, normal prefix: 144 plus 16 on the first symbol of every half subframe, in 64-Tc units
NR_NUMEROLOGY = OfdmNumerology('NR', 1024, 30.72e6, (88,) + (72,) * 13, 960, 792)


@dataclass(frozen=True)
class WaveformConfig:
    standard: StandardId
    duration_samples: int = DATASET_DURATION_SAMPLES
    qam_order: int = 4
    num_users: int = 1
    numerology_mu: int = 1
    occupied_subcarriers: Optional[int] = None

    def __post_init__(self):
        if self.duration_samples < 1:
            raise ParameterError(f'duration_samples must be positive, got {self.duration_samples}')
        if self.qam_order not in QAM_ORDERS:
            raise ParameterError(f'QAM order must be one of {QAM_ORDERS}, got {self.qam_order}')
        if self.occupied_subcarriers is not None and self.occupied_subcarriers < 1:
            raise ParameterError('occupied_subcarriers must be positive')

    def to_dict(self) -> dict:
        d = asdict(self)
        d['standard'] = self.standard.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'WaveformConfig':
        return cls(**dict(d, standard=StandardId(d['standard'])))


def subcarrier_indices(num_subcarriers: int) -> np.ndarray:
    """Occupied subcarrier numbers around a nulled DC: -n//2..-1 and 1..n - n//2."""
    below = num_subcarriers // 2
    above = num_subcarriers - below
    return np.concatenate([np.arange(-below, 0), np.arange(1, above + 1)])


def constellation(order: int) -> np.ndarray:
    """Square QAM alphabet with unit average power."""
    if order not in QAM_ORDERS:
        raise ParameterError(f'Unsupported QAM order {order}')
    side = int(math.isqrt(order))
    levels = 2 * np.arange(side) - (side - 1)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def ofdm_modulate(grid: np.ndarray, numerology: OfdmNumerology, subcarriers: np.ndarray) -> np.ndarray:
    """Map each row of the resource grid onto its subcarriers, IFFT, and prepend the cyclic prefix."""
    num_symbols = grid.shape[0]
    spectrum = np.zeros((num_symbols, numerology.fft_size), dtype=np.complex128)
    spectrum[:, subcarriers % numerology.fft_size] = grid
    useful = fft.ifft(spectrum, axis=1, norm='ortho')
    cps = np.resize(np.asarray(numerology.cp_pattern), num_symbols)
    return np.concatenate([np.concatenate([symbol[-cp:], symbol]) for symbol, cp in zip(useful, cps)])


def ofdm_demodulate(samples: np.ndarray, numerology: OfdmNumerology, subcarriers: np.ndarray,
                    num_symbols: int) -> np.ndarray:
    starts = numerology.symbol_starts(num_symbols)
    cps = np.resize(np.asarray(numerology.cp_pattern), num_symbols)
    useful = np.stack([samples[start + cp:start + cp + numerology.fft_size] for start, cp in zip(starts, cps)])
    return fft.fft(useful, axis=1, norm='ortho')[:, subcarriers % numerology.fft_size]


@dataclass(frozen=True)
class OfdmWaveform:
    buffer: IqBuffer
    grid: np.ndarray
    subcarriers: np.ndarray
    # grid row that starts at the first output sample
    first_symbol: int
    numerology: OfdmNumerology


def _check_standard(cfg: WaveformConfig, expected: StandardId):
    if cfg.standard is not expected:
        raise ParameterError(f'{expected.value} generator called with a {cfg.standard.value} config')


def _bits_stream(ctx: SeedContext):
    return derive_stream(ctx.with_tag(StreamTag.BITS, substream=1))


def _finish(x: IqBuffer, offset: int, cfg: WaveformConfig) -> IqBuffer:
    return crop(x, offset, cfg.duration_samples).scaled_to_power(1.0)


def gmsk_modulate(symbols: np.ndarray, samples_per_symbol: int = GSM_SAMPLES_PER_SYMBOL,
                  bt: float = GSM_BT, modulation_index: float = GSM_MODULATION_INDEX) -> np.ndarray:
    """Continuous-phase modulation of +/-1 symbols with a Gaussian frequency pulse."""
    taps = design_filter(FilterSpec(FilterKind.GAUSSIAN_GMSK, bt, GSM_FILTER_SPAN, samples_per_symbol))
    impulses = np.zeros(len(symbols) * samples_per_symbol)
    impulses[::samples_per_symbol] = symbols
    frequency = np.convolve(impulses, taps, mode='same')
    return np.exp(1j * math.pi * modulation_index * np.cumsum(frequency))


def differential_encode(bits: np.ndarray) -> np.ndarray:
    """a_k = 1 - 2 (d_k xor d_(k-1)); the first bit only seeds the recursion."""
    return 1 - 2 * (bits[1:] ^ bits[:-1]).astype(np.int64)


def gen_gsm(cfg: WaveformConfig, ctx: SeedContext) -> IqBuffer:
    _check_standard(cfg, StandardId.GSM)
    samples_per_symbol_out = CORPUS_RATE_HZ / GSM_SYMBOL_RATE_HZ
    num_symbols = math.ceil(cfg.duration_samples / samples_per_symbol_out) + 2 * GSM_MARGIN_SYMBOLS
    bits = _bits_stream(ctx).integers(0, 2, num_symbols + 1, dtype=np.uint8)
    native = IqBuffer(gmsk_modulate(differential_encode(bits)), GSM_NATIVE_RATE_HZ)
    out = resample(resample(native, GSM_INTERMEDIATE_RATE_HZ), CORPUS_RATE_HZ)
    return _finish(out, round(GSM_MARGIN_SYMBOLS * samples_per_symbol_out), cfg)


def qpsk_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    bits = rng.integers(0, 2, tuple(shape) + (2,))
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / math.sqrt(2)


def gen_umts(cfg: WaveformConfig, ctx: SeedContext, scrambled: bool = True) -> IqBuffer:
    """
    Downlink W-CDMA: QPSK users on distinct SF-16 OVSF codes at equal power, scrambled by a primary
    downlink Gold code and shaped with root-raised-cosine chips at 8 samples per chip (the corpus rate).
    """
    _check_standard(cfg, StandardId.UMTS)
    if not 1 <= cfg.num_users <= UMTS_MAX_USERS:
        raise ParameterError(f'UMTS supports 1..{UMTS_MAX_USERS} users, got {cfg.num_users}')
    rng = _bits_stream(ctx)
    num_chips = math.ceil(cfg.duration_samples / UMTS_SAMPLES_PER_CHIP) + 2 * UMTS_MARGIN_CHIPS
    num_symbols = math.ceil(num_chips / UMTS_SPREADING_FACTOR)
    codes = rng.choice(np.arange(1, UMTS_SPREADING_FACTOR), size=cfg.num_users, replace=False)
    primary_code = int(rng.integers(0, NUM_PRIMARY_CODES))
    symbols = qpsk_symbols(rng, (cfg.num_users, num_symbols))
    scrambling = scrambling_code(primary_scrambling_index(primary_code), FRAME_CHIPS) if scrambled else None
    chips = spread_users(symbols, list(codes), UMTS_SPREADING_FACTOR, scrambling=scrambling)

    taps = design_filter(FilterSpec(FilterKind.ROOT_RAISED_COSINE, UMTS_ROLLOFF, UMTS_FILTER_SPAN,
                                    UMTS_SAMPLES_PER_CHIP))
    impulses = np.zeros(chips.size * UMTS_SAMPLES_PER_CHIP, dtype=np.complex128)
    impulses[::UMTS_SAMPLES_PER_CHIP] = chips
    native = fir_filter(IqBuffer(impulses, UMTS_CHIP_RATE_HZ * UMTS_SAMPLES_PER_CHIP), taps)
    out = resample(native, CORPUS_RATE_HZ)
    return _finish(out, UMTS_MARGIN_CHIPS * UMTS_SAMPLES_PER_CHIP, cfg)


def synthesize_ofdm(cfg: WaveformConfig, ctx: SeedContext, numerology: OfdmNumerology) -> OfdmWaveform:
    """
    Fill every occupied subcarrier of every symbol with random QAM, modulate at the native rate with one
    guard slot on each side, resample to the corpus rate and keep the span starting at a symbol boundary.
    """
    num_subcarriers = cfg.occupied_subcarriers or numerology.default_subcarriers
    if num_subcarriers > numerology.max_subcarriers:
        raise ParameterError(f'{numerology.name} carries at most {numerology.max_subcarriers} subcarriers, '
                             f'got {num_subcarriers}')
    factor = round(CORPUS_RATE_HZ / numerology.sample_rate_hz)
    blocks = math.ceil(cfg.duration_samples / (factor * numerology.block_samples)) + 2
    num_symbols = blocks * len(numerology.cp_pattern)
    subcarriers = subcarrier_indices(num_subcarriers)
    alphabet = constellation(cfg.qam_order)
    grid = alphabet[_bits_stream(ctx).integers(0, cfg.qam_order, (num_symbols, num_subcarriers))]

    native = IqBuffer(ofdm_modulate(grid, numerology, subcarriers), numerology.sample_rate_hz)
    out = _finish(resample(native, CORPUS_RATE_HZ), factor * numerology.block_samples, cfg)
    return OfdmWaveform(out, grid, subcarriers, len(numerology.cp_pattern), numerology.at_rate(CORPUS_RATE_HZ))


def gen_lte(cfg: WaveformConfig, ctx: SeedContext) -> IqBuffer:
    _check_standard(cfg, StandardId.LTE)
    return synthesize_ofdm(cfg, ctx, LTE_NUMEROLOGY).buffer


def gen_nr(cfg: WaveformConfig, ctx: SeedContext) -> IqBuffer:
    _check_standard(cfg, StandardId.NR)
    if cfg.numerology_mu != 1:
        raise ParameterError(f'Only numerology 1 is generated, got {cfg.numerology_mu}')
    return synthesize_ofdm(cfg, ctx, NR_NUMEROLOGY).buffer


GENERATORS = {
    StandardId.GSM: gen_gsm,
    StandardId.UMTS: gen_umts,
    StandardId.LTE: gen_lte,
    StandardId.NR: gen_nr,
}


def generate(cfg: WaveformConfig, ctx: SeedContext) -> IqBuffer:
    logger.debug(f'Generating {cfg.standard.value} for sample {ctx.sample_index} slot {ctx.source_slot}')
    return GENERATORS[cfg.standard](cfg, ctx)


def draw_waveform_config(standard: StandardId, ctx: SeedContext, adjacent: bool = False,
                         duration_samples: int = DATASET_DURATION_SAMPLES) -> WaveformConfig:
    """Per-sample generator parameters; the same number of draws is consumed for every standard."""
    rng = derive_stream(ctx.with_tag(StreamTag.BITS, substream=0))
    qam_order = int(rng.choice(QAM_ORDERS))
    num_users = int(rng.integers(1, 5))
    subcarriers = None
    if standard is StandardId.NR and adjacent:
        subcarriers = NR_ADJACENT_SUBCARRIERS
    return WaveformConfig(standard=standard,
                          duration_samples=duration_samples,
                          qam_order=qam_order if standard in (StandardId.LTE, StandardId.NR) else 4,
                          num_users=num_users if standard is StandardId.UMTS else 1,
                          occupied_subcarriers=subcarriers)


def occupied_bandwidth_hz(cfg: WaveformConfig) -> float:
    """Nominal occupied bandwidth used for placement planning."""
    if cfg.standard is StandardId.GSM:
        return 200e3
    if cfg.standard is StandardId.UMTS:
        return UMTS_CHIP_RATE_HZ * (1 + UMTS_ROLLOFF)
    numerology = LTE_NUMEROLOGY if cfg.standard is StandardId.LTE else NR_NUMEROLOGY
    n = cfg.occupied_subcarriers or numerology.default_subcarriers
    return (n + 1) * numerology.subcarrier_spacing_hz
