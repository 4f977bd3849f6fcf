"""
Scenario sampling and mixture assembly. A scenario fixes how many sources a sample holds, which standards
they are, whether they share baseband or sit on an adjacent-channel plan, and their relative power, timing
and SNR. synthesize_sample runs one row of the corpus end to end from (master_seed, sample_index).
"""
import functools
import math
import operator
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from celery.utils.log import get_task_logger

from rfss.channel import add_awgn, add_noise_power, apply_channel, draw_channel
from rfss.dsp import CORPUS_RATE_HZ, IqBuffer, SeedContext, StreamTag, derive_stream
from rfss.exceptions import ParameterError
from rfss.impairments import apply_chain, draw_impairments
from rfss.metadata import SampleMetadata
from rfss.waveforms import DATASET_DURATION_SAMPLES, STANDARDS, StandardId, draw_waveform_config, generate, \
    occupied_bandwidth_hz

logger = get_task_logger(__name__)

MAX_SOURCES = 4
SOURCE_COUNTS = (2, 3, 4)
SOURCE_COUNT_WEIGHTS = (0.49, 0.34, 0.17)
RELATIVE_POWER_DB_RANGE = (-6.0, 6.0)
MAX_TIMING_OFFSET = 3072
SNR_DB_RANGE = (0.0, 30.0)

ADJACENT_OFFSETS_HZ = {
    StandardId.GSM: -13.0e6,
    StandardId.UMTS: -8.0e6,
    StandardId.LTE: -1.0e6,
    StandardId.NR: 9.5e6,
}


class MixingMode(Enum):
    CO_CHANNEL = 'co_channel'
    ADJACENT_CHANNEL = 'adjacent_channel'


class TargetStage(Enum):
    CLEAN = 'clean'
    POST_CHANNEL = 'post_channel'


class NoisePlacement(Enum):
    PER_SOURCE = 'per_source'
    MIXTURE = 'mixture'


@dataclass(frozen=True)
class ScenarioDraw:
    num_sources: int
    standards: tuple
    mode: MixingMode
    freq_offsets_hz: tuple
    powers_db: tuple
    timing_offsets_samples: tuple
    snr_db: tuple

    def __post_init__(self):
        per_source = (self.standards, self.freq_offsets_hz, self.powers_db, self.timing_offsets_samples,
                      self.snr_db)
        if any(len(v) != self.num_sources for v in per_source):
            raise ParameterError('Every per-source scenario vector needs num_sources entries')
        if len(set(self.standards)) != self.num_sources:
            raise ParameterError(f'Standards must be distinct within a sample: {self.standards}')
        if self.mode is MixingMode.CO_CHANNEL and any(self.freq_offsets_hz):
            raise ParameterError('Co-channel sources cannot carry a frequency offset')
        if any(t < 0 for t in self.timing_offsets_samples):
            raise ParameterError('Timing offsets cannot be negative')

    @property
    def powers_linear(self) -> np.ndarray:
        return 10 ** (np.asarray(self.powers_db) / 10)

    @property
    def mixture_snr_db(self) -> float:
        """Total signal power over total noise power, for unit-power sources."""
        powers = self.powers_linear
        noise = powers * 10 ** (-np.asarray(self.snr_db) / 10)
        return float(10 * np.log10(powers.sum() / noise.sum()))


def draw_scenario(ctx: SeedContext, mode: Optional[MixingMode] = None,
                  standards: Optional[Sequence[StandardId]] = None) -> ScenarioDraw:
    """
    Draws a fixed number of values whatever is forced, so forcing the mode or the standards never shifts
    the remaining draws.
    """
    rng = derive_stream(ctx.with_tag(StreamTag.SCENARIO))
    num_sources = int(rng.choice(SOURCE_COUNTS, p=SOURCE_COUNT_WEIGHTS))
    order = rng.permutation(len(STANDARDS))
    co_channel = bool(rng.random() < 0.5)
    relative_powers = rng.uniform(*RELATIVE_POWER_DB_RANGE, MAX_SOURCES)
    timing = rng.integers(0, MAX_TIMING_OFFSET + 1, MAX_SOURCES)
    snr = rng.uniform(*SNR_DB_RANGE, MAX_SOURCES)

    if standards is None:
        standards = tuple(std for std in STANDARDS if STANDARDS.index(std) in order[:num_sources])
    else:
        standards = tuple(standards)
        num_sources = len(standards)
    if not 1 <= num_sources <= MAX_SOURCES:
        raise ParameterError(f'A sample holds 1..{MAX_SOURCES} sources, got {num_sources}')
    if mode is None:
        mode = MixingMode.CO_CHANNEL if co_channel else MixingMode.ADJACENT_CHANNEL
    offsets = [0.0 if mode is MixingMode.CO_CHANNEL else ADJACENT_OFFSETS_HZ[std] for std in standards]
    return ScenarioDraw(num_sources=num_sources,
                        standards=standards,
                        mode=mode,
                        freq_offsets_hz=tuple(offsets),
                        powers_db=(0.0,) + tuple(float(p) for p in relative_powers[1:num_sources]),
                        timing_offsets_samples=tuple(int(t) for t in timing[:num_sources]),
                        snr_db=tuple(float(s) for s in snr[:num_sources]))


def frequency_shift(x: IqBuffer, f_hz: float, occupied_bw_hz: float = 0.0) -> IqBuffer:
    if abs(f_hz) + occupied_bw_hz / 2 > x.sample_rate_hz / 2:
        raise ParameterError(f'Shifting a {occupied_bw_hz / 1e6:.3f} MHz band to {f_hz / 1e6:.3f} MHz '
                             f'wraps around the {x.sample_rate_hz / 1e6:.2f} MHz band')
    if f_hz == 0:
        return x
    n = np.arange(len(x))
    return x.with_samples(x.samples * np.exp(2j * math.pi * f_hz * n / x.sample_rate_hz))


def delay(x: IqBuffer, samples: int) -> IqBuffer:
    """Cyclic rotation, which keeps length and power."""
    return x.with_samples(np.roll(x.samples, samples))


def shift_and_scale(x: IqBuffer, scenario: ScenarioDraw, slot: int, occupied_bw_hz: float = 0.0) -> IqBuffer:
    """Frequency offset and relative gain of a slot, for a buffer that already carries its timing offset."""
    shifted = frequency_shift(x, scenario.freq_offsets_hz[slot], occupied_bw_hz)
    gain = math.sqrt(scenario.powers_linear[slot])
    return shifted if gain == 1 else shifted.with_samples(shifted.samples * gain)


def place_source(x: IqBuffer, scenario: ScenarioDraw, slot: int, occupied_bw_hz: float = 0.0) -> IqBuffer:
    return shift_and_scale(delay(x, scenario.timing_offsets_samples[slot]), scenario, slot, occupied_bw_hz)


def _check_sources(sources: Sequence[IqBuffer], scenario: ScenarioDraw):
    if len(sources) != scenario.num_sources:
        raise ParameterError(f'{len(sources)} sources given for a {scenario.num_sources}-source scenario')
    if len({len(s) for s in sources}) != 1 or len({s.sample_rate_hz for s in sources}) != 1:
        raise ParameterError('All sources must share length and sample rate')


def assemble_stages(sources_impaired: Sequence[IqBuffer], scenario: ScenarioDraw) -> list:
    """Delayed, shifted and scaled contribution of every source, in slot order."""
    _check_sources(sources_impaired, scenario)
    return [place_source(s, scenario, slot) for slot, s in enumerate(sources_impaired)]


def sum_stages(stages: Sequence[IqBuffer]) -> IqBuffer:
    return stages[0].with_samples(functools.reduce(operator.add, (s.samples for s in stages)))


def assemble(sources_impaired: Sequence[IqBuffer], scenario: ScenarioDraw) -> IqBuffer:
    return sum_stages(assemble_stages(sources_impaired, scenario))


@dataclass(frozen=True)
class SynthesisOptions:
    duration_samples: int = DATASET_DURATION_SAMPLES
    target_stage: TargetStage = TargetStage.CLEAN
    noise_placement: NoisePlacement = NoisePlacement.PER_SOURCE
    mode_filter: Optional[MixingMode] = None
    debug_stages: bool = False


@dataclass(frozen=True)
class SourceRecord:
    standard: StandardId
    waveform: dict
    channel: dict
    impairment: dict
    target: IqBuffer
    impaired: IqBuffer


@dataclass(frozen=True)
class MixtureSample:
    mixture: IqBuffer
    targets: list
    scenario: ScenarioDraw
    metadata: SampleMetadata
    stages: list = field(default=None)

    @property
    def sample_index(self) -> int:
        return self.metadata.sample_index


def _synthesize_source(standard: StandardId, slot: int, scenario: ScenarioDraw, base: SeedContext,
                       options: SynthesisOptions) -> SourceRecord:
    ctx = base.for_source(slot)
    cfg = draw_waveform_config(standard, ctx, adjacent=scenario.mode is MixingMode.ADJACENT_CHANNEL,
                               duration_samples=options.duration_samples)
    clean = generate(cfg, ctx)
    channel = draw_channel(ctx, len(clean), CORPUS_RATE_HZ)
    faded = apply_channel(clean, channel)
    noisy = faded
    if options.noise_placement is NoisePlacement.PER_SOURCE:
        noisy = add_awgn(faded, scenario.snr_db[slot], ctx)
    draw = draw_impairments(standard, ctx)
    impaired = apply_chain(noisy, draw, ctx)
    # placement check here so a bad plan fails before anything is summed
    frequency_shift(clean, scenario.freq_offsets_hz[slot], occupied_bandwidth_hz(cfg))
    # targets carry the timing offset but neither the frequency offset nor the gain
    target = delay(clean if options.target_stage is TargetStage.CLEAN else faded.scaled_to_power(1.0),
                   scenario.timing_offsets_samples[slot])
    return SourceRecord(standard, cfg.to_dict(), channel.to_dict(), draw.to_dict(), target, impaired)


def synthesize_sample(master_seed: int, sample_index: int, options: SynthesisOptions = SynthesisOptions(),
                      standards: Optional[Sequence[StandardId]] = None, corpus_id: int = 0) -> MixtureSample:
    base = SeedContext(master_seed, sample_index, StreamTag.SCENARIO, corpus_id=corpus_id)
    mode = options.mode_filter
    if standards is not None:
        mode = MixingMode.CO_CHANNEL
    scenario = draw_scenario(base, mode=mode, standards=standards)
    sources = [_synthesize_source(std, slot, scenario, base, options) for slot, std in enumerate(scenario.standards)]

    stages = assemble_stages([s.impaired for s in sources], scenario)
    mixture = sum_stages(stages)
    if options.noise_placement is NoisePlacement.MIXTURE:
        noise_power = sum(stage.power * 10 ** (-snr / 10) for stage, snr in zip(stages, scenario.snr_db))
        mixture = add_noise_power(mixture, noise_power, base.for_source(MAX_SOURCES))

    metadata = SampleMetadata(num_sources=scenario.num_sources,
                              standards=[std.value for std in scenario.standards],
                              mixing_mode=scenario.mode.value,
                              snr_db=list(scenario.snr_db),
                              channel_types=[s.channel['profile'] for s in sources],
                              impairments=[s.impairment for s in sources],
                              powers_db=list(scenario.powers_db),
                              freq_offsets_hz=list(scenario.freq_offsets_hz),
                              timing_offsets=list(scenario.timing_offsets_samples),
                              master_seed=master_seed,
                              sample_index=sample_index,
                              mixture_snr_db=scenario.mixture_snr_db,
                              waveform_params=[s.waveform for s in sources],
                              channel_params=[s.channel for s in sources],
                              target_stage=options.target_stage.value,
                              noise_placement=options.noise_placement.value,
                              corpus_id=corpus_id)
    logger.debug(f'Sample {sample_index}: {metadata.combination} {scenario.mode.value}')
    return MixtureSample(mixture=mixture,
                         targets=[s.target for s in sources],
                         scenario=scenario,
                         metadata=metadata,
                         stages=stages if options.debug_stages else None)
