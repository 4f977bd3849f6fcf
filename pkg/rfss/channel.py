"""
Tapped-delay-line fading per source: normalized TDL-A..E delay/power tables scaled by a drawn delay spread,
sum-of-sinusoids Doppler fading per tap, Rician line-of-sight first taps for TDL-D/E, and complex AWGN.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from celery.utils.log import get_task_logger

from rfss.dsp import IqBuffer, SeedContext, StreamTag, derive_stream
from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

NUM_SINUSOIDS = 16
DOPPLER_RANGE_HZ = (1.0, 300.0)
DELAY_SPREAD_RANGE_S = (30e-9, 300e-9)
# Fading varies at most at 300 Hz; gains are synthesized on this sample stride and interpolated
FADING_GRID_STRIDE = 64


class TdlName(Enum):
    A = 'TDL-A'
    B = 'TDL-B'
    C = 'TDL-C'
    D = 'TDL-D'
    E = 'TDL-E'


TDL_NAMES = tuple(TdlName)

# (normalized delay, power dB) pairs. TDL-D/E list the line-of-sight and the scattered part of the first
# tap separately, as the tables do; they are merged into one Rician tap when a profile is built.
_TDL_TABLES = {
    TdlName.A: ((0.0, -13.4), (0.3819, 0.0), (0.4025, -2.2), (0.5868, -4.0), (0.4610, -6.0), (0.5375, -8.2),
                (0.6708, -9.9), (0.5750, -10.5), (0.7618, -7.5), (1.5375, -15.9), (1.8978, -6.6),
                (2.2242, -16.7), (2.1718, -12.4), (2.4942, -15.2), (2.5119, -10.8), (3.0582, -11.3),
                (4.0810, -12.7), (4.4579, -16.2), (4.5695, -18.3), (4.7966, -18.9), (5.0066, -16.6),
                (5.3043, -19.9), (9.6586, -29.7)),
    TdlName.B: ((0.0, 0.0), (0.1072, -2.2), (0.2155, -4.0), (0.2095, -3.2), (0.2870, -9.8), (0.2986, -1.2),
                (0.3752, -3.4), (0.5055, -5.2), (0.3681, -7.6), (0.3697, -3.0), (0.5700, -8.9),
                (0.5283, -9.0), (1.1021, -4.8), (1.2756, -5.7), (1.5474, -7.5), (1.7842, -1.9),
                (2.0169, -7.6), (2.8294, -12.2), (3.0219, -9.8), (3.6187, -11.4), (4.1067, -14.9),
                (4.2790, -9.2), (4.7834, -11.3)),
    TdlName.C: ((0.0, -4.4), (0.2099, -1.2), (0.2219, -3.5), (0.2329, -5.2), (0.2176, -2.5), (0.6366, 0.0),
                (0.6448, -2.2), (0.6560, -3.9), (0.6584, -7.4), (0.7935, -7.1), (0.8213, -10.7),
                (0.9336, -11.1), (1.2285, -5.1), (1.3083, -6.8), (2.1704, -8.7), (2.7105, -13.2),
                (4.2589, -13.9), (4.6003, -13.9), (5.4902, -15.8), (5.6077, -17.1), (6.3065, -16.0),
                (6.6374, -15.7), (7.0427, -21.6), (8.6523, -22.8)),
    TdlName.D: ((0.0, -0.2), (0.0, -13.5), (0.035, -18.8), (0.612, -21.0), (1.363, -22.8), (1.405, -17.9),
                (1.804, -20.1), (2.596, -21.9), (1.775, -22.9), (4.042, -27.8), (7.937, -23.6),
                (9.424, -24.8), (9.708, -30.0), (12.525, -27.7)),
    TdlName.E: ((0.0, -0.03), (0.0, -22.03), (0.5133, -15.8), (0.5440, -18.1), (0.5630, -19.8),
                (0.5440, -22.9), (0.7112, -22.4), (1.9092, -18.6), (1.9293, -20.8), (1.9589, -22.6),
                (2.6426, -22.3), (3.7136, -25.6), (5.4524, -20.2), (12.0034, -29.8), (20.6519, -29.2)),
}
LOS_PROFILES = (TdlName.D, TdlName.E)


@dataclass(frozen=True)
class TdlProfile:
    name: TdlName
    tap_delays_s: tuple
    tap_powers_db: tuple
    k_factor_db: Optional[float] = None

    def __post_init__(self):
        if len(self.tap_delays_s) != len(self.tap_powers_db) or not self.tap_delays_s:
            raise ParameterError('A TDL profile needs equal-length, non-empty delay and power vectors')
        if any(d < 0 for d in self.tap_delays_s):
            raise ParameterError('Tap delays cannot be negative')

    @property
    def num_taps(self) -> int:
        return len(self.tap_delays_s)

    @property
    def tap_powers(self) -> np.ndarray:
        return 10 ** (np.asarray(self.tap_powers_db) / 10)

    def delay_samples(self, rate_hz: float) -> np.ndarray:
        return np.round(np.asarray(self.tap_delays_s) * rate_hz).astype(np.int64)


def tdl_profile(name: TdlName, delay_spread_s: float) -> TdlProfile:
    """Scale a normalized table by the delay spread and normalize its total power to 0 dB."""
    table = _TDL_TABLES[name]
    delays = [d for d, _ in table]
    powers = [10 ** (p / 10) for _, p in table]
    k_factor_db = None
    if name in LOS_PROFILES:
        los, scattered = powers[0], powers[1]
        k_factor_db = 10 * math.log10(los / scattered)
        delays = delays[1:]
        powers = [los + scattered] + powers[2:]
    total = sum(powers)
    return TdlProfile(name=name,
                      tap_delays_s=tuple(d * delay_spread_s for d in delays),
                      tap_powers_db=tuple(10 * math.log10(p / total) for p in powers),
                      k_factor_db=k_factor_db)


@dataclass(frozen=True)
class ChannelRealization:
    profile: TdlProfile
    doppler_hz: float
    delay_spread_s: float
    # per-tap complex gains over time, already scaled by the tap amplitude
    tap_gains: np.ndarray
    rate_hz: float

    @property
    def num_samples(self) -> int:
        return self.tap_gains.shape[1]

    @property
    def fading(self) -> np.ndarray:
        """Unit-mean-power fading per tap."""
        return self.tap_gains / np.sqrt(self.profile.tap_powers)[:, None]

    def to_dict(self) -> dict:
        return {'profile': self.profile.name.value,
                'doppler_hz': self.doppler_hz,
                'delay_spread_ns': self.delay_spread_s * 1e9}


def jakes_fading(rng: np.random.Generator, doppler_hz: float, t: np.ndarray, num_processes: int = 1) -> np.ndarray:
    """
    Sum of NUM_SINUSOIDS unit phasors per process with arrival angles spaced 2*pi/M apart, a random
    common rotation and random phases. Rows have unit mean power and a J0-shaped autocorrelation.
    """
    m = np.arange(1, NUM_SINUSOIDS + 1)
    rotation = rng.uniform(-math.pi, math.pi, (num_processes, 1))
    phases = rng.uniform(-math.pi, math.pi, (num_processes, NUM_SINUSOIDS))
    angles = (2 * math.pi * m - math.pi + rotation) / NUM_SINUSOIDS
    doppler_shifts = 2 * math.pi * doppler_hz * np.cos(angles)
    # processes x sinusoids x time
    arg = doppler_shifts[:, :, None] * np.asarray(t)[None, None, :] + phases[:, :, None]
    return np.exp(1j * arg).sum(axis=1) / math.sqrt(NUM_SINUSOIDS)


def rician_fading(rng: np.random.Generator, k_factor_db: float, doppler_hz: float, t: np.ndarray) -> np.ndarray:
    """Line-of-sight phasor plus scattered Jakes fading, unit mean power, K = LOS/scattered power."""
    k = 10 ** (k_factor_db / 10)
    los_angle, los_phase = rng.uniform(-math.pi, math.pi, 2)
    los = np.exp(1j * (2 * math.pi * doppler_hz * math.cos(los_angle) * np.asarray(t) + los_phase))
    scattered = jakes_fading(rng, doppler_hz, t)[0]
    return math.sqrt(k / (k + 1)) * los + math.sqrt(1 / (k + 1)) * scattered


def _interpolate_rows(coarse: np.ndarray, coarse_index: np.ndarray, num_samples: int) -> np.ndarray:
    n = np.arange(num_samples)
    gains = np.empty((coarse.shape[0], num_samples), dtype=np.complex128)
    for row, values in enumerate(coarse):
        gains[row] = np.interp(n, coarse_index, values.real) + 1j * np.interp(n, coarse_index, values.imag)
    return gains


def tap_gains(rng: np.random.Generator, profile: TdlProfile, doppler_hz: float, num_samples: int,
              rate_hz: float) -> np.ndarray:
    coarse_index = np.arange(0, num_samples + FADING_GRID_STRIDE, FADING_GRID_STRIDE)
    t = coarse_index / rate_hz
    coarse = jakes_fading(rng, doppler_hz, t, profile.num_taps)
    if profile.k_factor_db is not None:
        coarse[0] = rician_fading(rng, profile.k_factor_db, doppler_hz, t)
    coarse *= np.sqrt(profile.tap_powers)[:, None]
    return _interpolate_rows(coarse, coarse_index, num_samples)


def draw_channel(ctx: SeedContext, duration_samples: int, rate_hz: float) -> ChannelRealization:
    if duration_samples < 1:
        raise ParameterError(f'Channel duration must be positive, got {duration_samples}')
    rng = derive_stream(ctx.with_tag(StreamTag.CHANNEL))
    name = TDL_NAMES[int(rng.integers(len(TDL_NAMES)))]
    doppler_hz = float(rng.uniform(*DOPPLER_RANGE_HZ))
    delay_spread_s = float(math.exp(rng.uniform(*np.log(DELAY_SPREAD_RANGE_S))))
    profile = tdl_profile(name, delay_spread_s)
    gains = tap_gains(rng, profile, doppler_hz, duration_samples, rate_hz)
    return ChannelRealization(profile, doppler_hz, delay_spread_s, gains, rate_hz)


def apply_channel(x: IqBuffer, ch: ChannelRealization) -> IqBuffer:
    """y[n] = sum_l g_l[n] x[n - d_l], zero history before the buffer start."""
    n = len(x)
    if ch.num_samples < n:
        raise ParameterError(f'Channel realization covers {ch.num_samples} samples, input has {n}')
    y = np.zeros(n, dtype=np.complex128)
    for gains, delay in zip(ch.tap_gains, ch.profile.delay_samples(x.sample_rate_hz)):
        if delay < n:
            y[delay:] += gains[delay:n] * x.samples[:n - delay]
    return x.with_samples(y)


def complex_gaussian(rng: np.random.Generator, num_samples: int, power: float) -> np.ndarray:
    return math.sqrt(power / 2) * (rng.standard_normal(num_samples) + 1j * rng.standard_normal(num_samples))


def add_noise_power(x: IqBuffer, noise_power: float, ctx: SeedContext) -> IqBuffer:
    rng = derive_stream(ctx.with_tag(StreamTag.NOISE))
    return x.with_samples(x.samples + complex_gaussian(rng, len(x), noise_power))


def add_awgn(x: IqBuffer, snr_db: float, ctx: SeedContext) -> IqBuffer:
    """Circular complex Gaussian noise at signal_power / 10^(snr/10); +inf SNR returns x untouched."""
    if math.isinf(snr_db) and snr_db > 0:
        return x
    return add_noise_power(x, x.power / 10 ** (snr_db / 10), ctx)
