"""
Corpus generation: the mixture corpus and its single-source companion, each sample synthesized by a task and
written in index order by one writer.
"""
from celery.utils.log import get_task_logger

from rfss.dataset import CorpusSummary, companion_path, single_source_plan, write_corpus
from rfss.mixer import SynthesisOptions, synthesize_sample
from rfss.pool import run_ordered
from rfss.task import RfssTask, app

logger = get_task_logger(__name__)

MIXTURE_CORPUS_ID = 0
COMPANION_CORPUS_ID = 1


@app.task(base=RfssTask)
def synthesize_sample_task(master_seed, sample_index, options, standards=None, corpus_id=MIXTURE_CORPUS_ID):
    return synthesize_sample(master_seed, sample_index, options, standards=standards, corpus_id=corpus_id)


def synthesis_options(cfg) -> SynthesisOptions:
    return SynthesisOptions(duration_samples=cfg.duration_samples,
                            target_stage=cfg.target_stage,
                            noise_placement=cfg.noise_placement,
                            mode_filter=cfg.mode_filter,
                            debug_stages=cfg.debug_stages)


def generate_mixtures(cfg) -> CorpusSummary:
    options = synthesis_options(cfg)
    calls = ((cfg.master_seed, idx, options) for idx in range(cfg.corpus_size))
    logger.info(f'Generating {cfg.corpus_size} mixtures into {cfg.out_path}')
    return write_corpus(run_ordered(synthesize_sample_task, calls, workers=cfg.workers), cfg.out_path,
                        cfg.corpus_size, cfg.backend, cfg.duration_samples)


def generate_companion(cfg) -> CorpusSummary:
    """Single-source samples, one block per standard."""
    options = synthesis_options(cfg)
    plan = single_source_plan(cfg.single_per_standard)
    path = companion_path(cfg.out_path)
    calls = ((cfg.master_seed, idx, options, [std], COMPANION_CORPUS_ID) for idx, std in enumerate(plan))
    logger.info(f'Generating {len(plan)} single-source samples into {path}')
    return write_corpus(run_ordered(synthesize_sample_task, calls, workers=cfg.workers), path, len(plan),
                        cfg.backend, cfg.duration_samples)


def generate_corpus(cfg) -> list:
    summaries = [generate_mixtures(cfg)]
    if cfg.with_single:
        summaries.append(generate_companion(cfg))
    return summaries
