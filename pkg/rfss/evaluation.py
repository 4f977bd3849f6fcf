"""
Scoring separators against a corpus: the classical baselines run over the first n test-split samples of every
source count, and externally produced estimates are scored row by row after an alignment check.

References are the stored baseband targets by default. Adjacent-channel mixtures hold their sources shifted in
frequency, so baseband references put a floor under every score on those samples; the ``placed`` reference
frame shifts and scales the targets exactly as the mixer did and removes that floor. Targets are stored with
their timing offset already applied, so neither frame delays them.
"""
from enum import Enum
from itertools import chain

from celery.utils.log import get_task_logger

from rfss.baselines import SEPARATORS, separate
from rfss.dataset import SplitSpec, check_alignment, open_corpus, split_indices
from rfss.dsp import SeedContext, StreamTag, crop, derive_stream
from rfss.exceptions import ParameterError
from rfss.metrics import EvalRecord, score_sample
from rfss.mixer import MixtureSample, shift_and_scale
from rfss.pool import run_ordered
from rfss.task import RfssTask, app

logger = get_task_logger(__name__)

EVAL_SOURCE_COUNTS = (2, 3, 4)
EVAL_CROP_SAMPLES = 7680
EVAL_CROP_SEED = 42
DEFAULT_N_PER_COUNT = 150


class ReferenceFrame(Enum):
    BASEBAND = 'baseband'
    PLACED = 'placed'


def crop_start(sample_index: int, num_samples: int, crop_samples: int = EVAL_CROP_SAMPLES) -> int:
    if num_samples < crop_samples:
        raise ParameterError(f'Cannot crop {crop_samples} samples from {num_samples}')
    rng = derive_stream(SeedContext(EVAL_CROP_SEED, sample_index, StreamTag.CROP))
    return int(rng.integers(0, num_samples - crop_samples + 1))


def references(sample: MixtureSample, frame: ReferenceFrame = ReferenceFrame.BASEBAND) -> list:
    if ReferenceFrame(frame) is ReferenceFrame.BASEBAND:
        return list(sample.targets)
    return [shift_and_scale(target, sample.scenario, slot) for slot, target in enumerate(sample.targets)]


def score_estimates(sample: MixtureSample, estimates, method: str,
                    reference_frame: ReferenceFrame = ReferenceFrame.BASEBAND, eval_crop: bool = False) -> EvalRecord:
    md = sample.metadata
    refs = references(sample, reference_frame)
    ests = list(estimates)[:md.num_sources]
    if eval_crop:
        start = crop_start(md.sample_index, len(sample.mixture))
        refs = [crop(r, start, EVAL_CROP_SAMPLES) for r in refs]
        ests = [crop(e, start, EVAL_CROP_SAMPLES) for e in ests]
    mixture_snr_db = md.mixture_snr_db if md.mixture_snr_db is not None else sample.scenario.mixture_snr_db
    return score_sample(md.sample_index, ests, refs, mode=md.mixing_mode, mixture_snr_db=mixture_snr_db,
                        method=method, standards=md.standards)


def select_test_rows(reader, n_per_count: int, split: SplitSpec = SplitSpec()) -> list:
    """First n_per_count test-split rows of every evaluated source count, in index order."""
    if n_per_count < 0:
        raise ParameterError(f'n_per_count cannot be negative, got {n_per_count}')
    picked = {count: [] for count in EVAL_SOURCE_COUNTS}
    if n_per_count == 0:
        return []
    _, _, test = split_indices(split, len(reader))
    for idx in test:
        if all(len(rows) >= n_per_count for rows in picked.values()):
            break
        rows = picked.get(reader.metadata(idx).num_sources)
        if rows is not None and len(rows) < n_per_count:
            rows.append(idx)
    return sorted(chain.from_iterable(picked.values()))


@app.task(base=RfssTask)
def separate_sample_task(corpus_path, sample_index, method, master_seed, reference_frame=ReferenceFrame.BASEBAND,
                         eval_crop=False):
    with open_corpus(corpus_path) as reader:
        sample = reader.read_sample(sample_index)
    ctx = SeedContext(master_seed, sample_index, StreamTag.SEPARATION, corpus_id=sample.metadata.corpus_id)
    result = separate(method, sample.mixture, sample.metadata.num_sources, ctx)
    return score_estimates(sample, result.estimates, method, reference_frame, eval_crop)


def evaluate_baseline(corpus_path: str, method: str, n_per_count: int = DEFAULT_N_PER_COUNT, master_seed: int = 42,
                      reference_frame: ReferenceFrame = ReferenceFrame.BASEBAND, eval_crop: bool = False,
                      workers: int = 1) -> list:
    if method not in SEPARATORS:
        raise ParameterError(f'Unknown separation method {method!r}; choose from {sorted(SEPARATORS)}')
    with open_corpus(corpus_path) as reader:
        rows = select_test_rows(reader, n_per_count)
    logger.info(f'Evaluating {method} on {len(rows)} test samples of {corpus_path}')
    calls = ((corpus_path, idx, method, master_seed, reference_frame, eval_crop) for idx in rows)
    return list(run_ordered(separate_sample_task, calls, workers=workers))


def evaluate_estimates(corpus_path: str, estimates_path: str,
                       reference_frame: ReferenceFrame = ReferenceFrame.BASEBAND, eval_crop: bool = False) -> list:
    """Score every row of an estimates container against the corpus row it names."""
    records = []
    with open_corpus(corpus_path) as corpus, open_corpus(estimates_path) as estimates:
        rows = check_alignment(corpus, estimates)
        logger.info(f'Scoring {len(rows)} external estimates from {estimates_path}')
        for row, idx in enumerate(rows):
            record = score_estimates(corpus.read_sample(idx), estimates.read_sample(row).targets, 'external',
                                     reference_frame, eval_crop)
            records.append(record)
    return records
