"""
Transmitter hardware impairments applied independently to each source, in a fixed order:
Rapp PA, IQ imbalance, Wiener phase noise, carrier frequency offset, DC offset.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np
from celery.utils.log import get_task_logger

from rfss.dsp import IqBuffer, SeedContext, StreamTag, derive_stream
from rfss.exceptions import ParameterError
from rfss.waveforms import StandardId

logger = get_task_logger(__name__)

NOMINAL_CARRIER_HZ = {
    StandardId.GSM: 900e6,
    StandardId.UMTS: 2.1e9,
    StandardId.LTE: 1.8e9,
    StandardId.NR: 3.5e9,
}

CFO_PPM_RANGE = (0.05, 5.0)
IQ_AMP_DB_RANGE = (0.1, 3.0)
IQ_PHASE_DEG_RANGE = (1.0, 10.0)
PHASE_NOISE_DBC_HZ_RANGE = (-110.0, -90.0)
DC_OFFSET_DBC_RANGE = (-40.0, -30.0)
PA_IBO_DB_RANGE = (3.0, 9.0)
RAPP_SMOOTHNESS = 2.0
PHASE_NOISE_REFERENCE_OFFSET_HZ = 1e4

_PHASE_NOISE_SUBSTREAM = 1
_DC_OFFSET_SUBSTREAM = 2


@dataclass(frozen=True)
class ImpairmentDraw:
    cfo_hz: float
    iq_amp_db: float
    iq_phase_deg: float
    pn_dbc_hz_at_10khz: float
    dc_offset_dbc: float
    pa_ibo_db: float
    rapp_p: float = RAPP_SMOOTHNESS

    @classmethod
    def neutral(cls) -> 'ImpairmentDraw':
        """A draw under which every stage is the identity."""
        return cls(cfo_hz=0.0, iq_amp_db=0.0, iq_phase_deg=0.0, pn_dbc_hz_at_10khz=-math.inf,
                   dc_offset_dbc=-math.inf, pa_ibo_db=math.inf)

    def to_dict(self) -> dict:
        # JSON has no infinities; disabled stages serialize as null
        return {k: (None if math.isinf(v) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> 'ImpairmentDraw':
        disabled = {'pn_dbc_hz_at_10khz': -math.inf, 'dc_offset_dbc': -math.inf, 'pa_ibo_db': math.inf}
        return cls(**{k: (disabled[k] if v is None else v) for k, v in d.items()})


def draw_impairments(std: StandardId, ctx: SeedContext) -> ImpairmentDraw:
    rng = derive_stream(ctx.with_tag(StreamTag.IMPAIRMENT))
    ppm = math.exp(rng.uniform(math.log(CFO_PPM_RANGE[0]), math.log(CFO_PPM_RANGE[1])))
    sign = 1.0 if rng.integers(0, 2) else -1.0
    return ImpairmentDraw(cfo_hz=sign * ppm * 1e-6 * NOMINAL_CARRIER_HZ[std],
                          iq_amp_db=float(rng.uniform(*IQ_AMP_DB_RANGE)),
                          iq_phase_deg=float(rng.uniform(*IQ_PHASE_DEG_RANGE)),
                          pn_dbc_hz_at_10khz=float(rng.uniform(*PHASE_NOISE_DBC_HZ_RANGE)),
                          dc_offset_dbc=float(rng.uniform(*DC_OFFSET_DBC_RANGE)),
                          pa_ibo_db=float(rng.uniform(*PA_IBO_DB_RANGE)))


def apply_cfo(x: IqBuffer, cfo_hz: float) -> IqBuffer:
    if cfo_hz == 0:
        return x
    n = np.arange(len(x))
    return x.with_samples(x.samples * np.exp(2j * math.pi * cfo_hz * n / x.sample_rate_hz))


def iq_imbalance_gains(amp_db: float, phase_deg: float):
    g = 10 ** (amp_db / 20)
    theta = math.radians(phase_deg)
    return (1 + g * np.exp(-1j * theta)) / 2, (1 - g * np.exp(1j * theta)) / 2


def image_rejection_ratio_db(amp_db: float, phase_deg: float) -> float:
    g1, g2 = iq_imbalance_gains(amp_db, phase_deg)
    return 10 * math.log10(abs(g1) ** 2 / abs(g2) ** 2)


def apply_iq_imbalance(x: IqBuffer, amp_db: float, phase_deg: float) -> IqBuffer:
    if amp_db == 0 and phase_deg == 0:
        return x
    g1, g2 = iq_imbalance_gains(amp_db, phase_deg)
    return x.with_samples(g1 * x.samples + g2 * np.conj(x.samples))


def phase_noise_variance(dbc_hz_at_10khz: float, rate_hz: float) -> float:
    """Per-sample increment variance giving a 1/f^2 phase PSD of L dBc/Hz at 10 kHz offset."""
    return 10 ** (dbc_hz_at_10khz / 10) * (2 * math.pi * PHASE_NOISE_REFERENCE_OFFSET_HZ) ** 2 / rate_hz


def apply_phase_noise(x: IqBuffer, dbc_hz_at_10khz: float, ctx: SeedContext) -> IqBuffer:
    if math.isinf(dbc_hz_at_10khz) and dbc_hz_at_10khz < 0:
        return x
    rng = derive_stream(ctx.with_tag(StreamTag.IMPAIRMENT, _PHASE_NOISE_SUBSTREAM))
    sigma = math.sqrt(phase_noise_variance(dbc_hz_at_10khz, x.sample_rate_hz))
    phase = np.cumsum(sigma * rng.standard_normal(len(x)))
    return x.with_samples(x.samples * np.exp(1j * phase))


def apply_dc_offset(x: IqBuffer, dc_dbc: float, ctx: SeedContext) -> IqBuffer:
    if math.isinf(dc_dbc) and dc_dbc < 0:
        return x
    rng = derive_stream(ctx.with_tag(StreamTag.IMPAIRMENT, _DC_OFFSET_SUBSTREAM))
    magnitude = math.sqrt(x.power * 10 ** (dc_dbc / 10))
    return x.with_samples(x.samples + magnitude * np.exp(1j * rng.uniform(-math.pi, math.pi)))


def apply_pa_rapp(x: IqBuffer, ibo_db: float, p: float = RAPP_SMOOTHNESS) -> IqBuffer:
    """AM/AM-only Rapp amplifier with saturation placed ibo_db above the mean input power."""
    if p <= 0:
        raise ParameterError(f'Rapp smoothness must be positive, got {p}')
    if (math.isinf(ibo_db) and ibo_db > 0) or x.power == 0:
        return x
    saturation = math.sqrt(x.power * 10 ** (ibo_db / 10))
    return x.with_samples(x.samples / (1 + (np.abs(x.samples) / saturation) ** (2 * p)) ** (1 / (2 * p)))


def apply_chain(x: IqBuffer, d: ImpairmentDraw, ctx: SeedContext) -> IqBuffer:
    y = apply_pa_rapp(x, d.pa_ibo_db, d.rapp_p)
    y = apply_iq_imbalance(y, d.iq_amp_db, d.iq_phase_deg)
    y = apply_phase_noise(y, d.pn_dbc_hz_at_10khz, ctx)
    y = apply_cfo(y, d.cfo_hz)
    y = apply_dc_offset(y, d.dc_offset_dbc, ctx)
    if y is x:
        return x
    return y.with_samples(y.samples * math.sqrt(x.power / y.power))
