"""
Separation scoring: scale-invariant SINR, permutation-invariant matching and the stratified report built from
per-sample EvalRecords.
"""
import csv
import itertools
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from celery.utils.log import get_task_logger

from rfss.common import render_template
from rfss.dsp import IqBuffer
from rfss.exceptions import MetricUndefinedError, ParameterError

logger = get_task_logger(__name__)

SI_SINR_CAP_DB = 300.0
SNR_BIN_EDGES_DB = (0.0, 10.0, 20.0, 30.0)
SNR_BINS = ('0-10', '10-20', '20-30')
MAX_PIT_SOURCES = 4


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, IqBuffer) else np.asarray(x, dtype=np.complex128)


def si_sinr(est, ref) -> float:
    """
    10 log10(|a s|^2 / |x - a s|^2) with a = <x, s> / |s|^2 on mean-removed signals, the inner product
    conjugating the reference. Exact matches return SI_SINR_CAP_DB.
    """
    x, s = _samples(est), _samples(ref)
    if x.shape != s.shape or x.ndim != 1 or x.size < 2:
        raise ParameterError(f'SI-SINR needs equal-length vectors of at least 2 samples, got {x.shape} and {s.shape}')
    x = x - x.mean()
    s = s - s.mean()
    ref_energy = np.vdot(s, s).real
    if ref_energy == 0:
        raise MetricUndefinedError('SI-SINR is undefined for an all-zero reference')
    target = (np.vdot(s, x) / ref_energy) * s
    target_energy = np.vdot(target, target).real
    residual_energy = np.vdot(x - target, x - target).real
    if target_energy == 0:
        return -SI_SINR_CAP_DB
    if residual_energy == 0 or target_energy >= residual_energy * 10 ** (SI_SINR_CAP_DB / 10):
        return SI_SINR_CAP_DB
    return float(max(10 * math.log10(target_energy / residual_energy), -SI_SINR_CAP_DB))


def pairwise_si_sinr(ests: Sequence, refs: Sequence) -> np.ndarray:
    """Matrix m[i, j] = si_sinr(ests[i], refs[j])."""
    return np.array([[si_sinr(e, r) for r in refs] for e in ests])


def pit_si_sinr(ests: Sequence, refs: Sequence):
    """
    Best mean SI-SINR over every assignment of estimates to references. Returns (mean_db, permutation,
    per_source_db) where permutation[i] is the reference matched to estimate i; the lexicographically first
    permutation wins ties.
    """
    n = len(ests)
    if n != len(refs):
        raise ParameterError(f'size do not match between estimates and references: {n} vs {len(refs)}')
    if not 1 <= n <= MAX_PIT_SOURCES:
        raise ParameterError(f'Permutation search supports 1..{MAX_PIT_SOURCES} sources, got {n}')
    scores = pairwise_si_sinr(ests, refs)
    best, best_perm = -math.inf, None
    for perm in itertools.permutations(range(n)):
        mean = float(np.mean([scores[i, j] for i, j in enumerate(perm)]))
        if mean > best:
            best, best_perm = mean, perm
    return best, list(best_perm), [float(scores[i, j]) for i, j in enumerate(best_perm)]


def snr_bin(snr_db: float) -> str:
    """Left-closed 10 dB bins over [0, 30]; 30 dB itself falls in the last bin."""
    if not SNR_BIN_EDGES_DB[0] <= snr_db <= SNR_BIN_EDGES_DB[-1]:
        raise ParameterError(f'SNR {snr_db} dB is outside the reported range')
    for label, upper in zip(SNR_BINS, SNR_BIN_EDGES_DB[1:]):
        if snr_db < upper:
            return label
    return SNR_BINS[-1]


@dataclass(frozen=True)
class EvalRecord:
    sample_index: int
    pi_si_sinr_db: float
    permutation: list
    per_source_si_sinr_db: list
    mode: str
    num_sources: int
    snr_bin: str
    method: str = 'external'
    mixture_snr_db: Optional[float] = None
    standards: list = field(default_factory=list)

    def __post_init__(self):
        if sorted(self.permutation) != list(range(self.num_sources)):
            raise ParameterError(f'{self.permutation} is not a permutation of {self.num_sources} sources')
        if len(self.per_source_si_sinr_db) != self.num_sources:
            raise ParameterError('One per-source score is needed for every source')

    @property
    def combination(self) -> str:
        return '+'.join(self.standards)

    def as_csv_row(self) -> dict:
        row = asdict(self)
        row['permutation'] = ' '.join(str(p) for p in self.permutation)
        row['per_source_si_sinr_db'] = ' '.join(f'{v:.4f}' for v in self.per_source_si_sinr_db)
        row['standards'] = self.combination
        return row


def score_sample(sample_index: int, ests: Sequence, refs: Sequence, mode: str, mixture_snr_db: float,
                 method: str = 'external', standards: Sequence[str] = ()) -> EvalRecord:
    value, perm, per_source = pit_si_sinr(ests, refs)
    return EvalRecord(sample_index=sample_index,
                      pi_si_sinr_db=value,
                      permutation=perm,
                      per_source_si_sinr_db=per_source,
                      mode=mode,
                      num_sources=len(refs),
                      snr_bin=snr_bin(mixture_snr_db),
                      method=method,
                      mixture_snr_db=mixture_snr_db,
                      standards=list(standards))


@dataclass(frozen=True)
class ReportCell:
    grouping: str
    method: str
    key: str
    mean_db: float
    count: int


# grouping name -> (record filter, key function)
_GROUPINGS = {
    'overall': (None, lambda r: 'all'),
    'sources': (None, lambda r: str(r.num_sources)),
    'mode': (None, lambda r: r.mode),
    'snr_bin': (None, lambda r: r.snr_bin),
    'sources_mode': (None, lambda r: f'{r.num_sources}/{r.mode}'),
    'co_channel_sources': (lambda r: r.mode == 'co_channel', lambda r: str(r.num_sources)),
    'co_channel_snr_bin': (lambda r: r.mode == 'co_channel', lambda r: r.snr_bin),
    'combination': (None, lambda r: r.combination or '-'),
}
GROUPINGS = tuple(_GROUPINGS)


def _sort_key(key: str):
    return (0, int(key)) if key.isdigit() else (1, key)


@dataclass(frozen=True)
class StratifiedReport:
    cells: list
    total: int

    def grouping(self, name: str) -> list:
        return [c for c in self.cells if c.grouping == name]

    def cell(self, grouping: str, key: str, method: str = None) -> ReportCell:
        for c in self.grouping(grouping):
            if c.key == key and (method is None or c.method == method):
                return c
        raise KeyError(f'No {grouping} cell {key!r}')

    @property
    def methods(self) -> list:
        return sorted({c.method for c in self.cells})

    def to_csv(self, path: str):
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=['grouping', 'method', 'key', 'mean_db', 'count'])
            writer.writeheader()
            for c in self.cells:
                writer.writerow(asdict(c))

    def to_text(self, title: str = 'PI-SI-SINR report') -> str:
        return render_template('report.txt', title=title, report=self, groupings=GROUPINGS)


def stratified_report(records: Sequence[EvalRecord]) -> StratifiedReport:
    """Mean PI-SI-SINR with counts, per method, for every grouping."""
    if not records:
        raise ParameterError('Cannot report on an empty record list')
    cells = []
    for name, (keep, key_of) in _GROUPINGS.items():
        buckets = defaultdict(list)
        for r in records:
            if keep is None or keep(r):
                buckets[(r.method, key_of(r))].append(r.pi_si_sinr_db)
        for (method, key) in sorted(buckets, key=lambda mk: (mk[0], _sort_key(mk[1]))):
            values = buckets[(method, key)]
            cells.append(ReportCell(name, method, key, float(np.mean(values)), len(values)))
    return StratifiedReport(cells=cells, total=len(records))


def write_records_csv(records: Iterable[EvalRecord], path: str):
    records = list(records)
    fieldnames = [f for f in EvalRecord.__dataclass_fields__]
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for r in records:
            writer.writerow(r.as_csv_row())
    logger.debug(f'Wrote {len(records)} records to {path}')
