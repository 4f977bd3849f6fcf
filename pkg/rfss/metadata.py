import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable

from rfss.exceptions import ParameterError


@dataclass(frozen=True)
class SampleMetadata:
    """Per-row record stored next to the signals; lists hold one entry per source in slot order."""
    num_sources: int
    standards: list
    mixing_mode: str
    snr_db: list
    channel_types: list
    impairments: list
    powers_db: list
    freq_offsets_hz: list
    timing_offsets: list
    master_seed: int
    sample_index: int
    mixture_snr_db: float = None
    waveform_params: list = field(default_factory=list)
    channel_params: list = field(default_factory=list)
    target_stage: str = 'clean'
    noise_placement: str = 'per_source'
    corpus_id: int = 0

    _PER_SOURCE = ('standards', 'snr_db', 'channel_types', 'impairments', 'powers_db', 'freq_offsets_hz',
                   'timing_offsets')

    def __post_init__(self):
        for name in self._PER_SOURCE:
            if len(getattr(self, name)) != self.num_sources:
                raise ParameterError(f'metadata field {name} has {len(getattr(self, name))} entries '
                                     f'for {self.num_sources} sources')

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(',', ':'))

    @classmethod
    def from_json(cls, text: str) -> 'SampleMetadata':
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    @property
    def combination(self) -> str:
        return '+'.join(self.standards)


def composition_stats(records: Iterable[SampleMetadata]) -> dict:
    """Source-count histogram, mode balance, per-standard occurrences and standard-combination counts."""
    counts, modes, standards, combinations = Counter(), Counter(), Counter(), Counter()
    total = 0
    for md in records:
        total += 1
        counts[md.num_sources] += 1
        modes[md.mixing_mode] += 1
        standards.update(md.standards)
        combinations[md.combination] += 1
    return {
        'total': total,
        'source_counts': dict(sorted(counts.items())),
        'modes': dict(sorted(modes.items())),
        'standards': dict(sorted(standards.items())),
        'combinations': dict(sorted(combinations.items())),
    }
