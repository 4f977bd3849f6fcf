"""
Command-line frontend: ``rfss generate``, ``characterize``, ``evaluate``, ``inspect`` and ``convert``.

Exit status is 0 when every requested output was written, 2 for usage and configuration errors, 1 for I/O, corpus
and alignment failures and 130 when interrupted.
"""
import argparse
import json
import logging
import os
import sys

from celery.utils.log import get_task_logger

from rfss import __version__
from rfss.argument_conversion import ArgumentConversionException
from rfss.characterization import aggregate, characterize, export_csv
from rfss.common import render_template
from rfss.config import EXTERNAL_METHOD, load_run_config
from rfss.dataset import Backend, companion_path, convert_corpus, open_corpus
from rfss.evaluation import evaluate_baseline, evaluate_estimates
from rfss.exceptions import CorpusReadError, ParameterError, RfssError
from rfss.generation import generate_corpus
from rfss.metadata import composition_stats
from rfss.metrics import stratified_report, write_records_csv
from rfss.waveforms import StandardId

logger = get_task_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config,
                          master_seed=args.seed,
                          corpus_size=args.size,
                          out_path=args.out,
                          backend=args.backend,
                          workers=args.workers,
                          mode_filter=args.mode,
                          target_stage=args.target_stage,
                          noise_placement=args.noise_placement,
                          single_per_standard=args.single_per_standard,
                          duration_samples=args.duration_samples,
                          with_single=False if args.no_single else None,
                          debug_stages=True if args.debug_stages else None)
    logger.debug(f'Run configuration: {cfg.to_dict()}')
    summaries = generate_corpus(cfg)
    print(render_template('generate_summary.txt', summaries=summaries), end='')
    return EXIT_OK


def _characterize_index(path: str, index: int, out_dir: str):
    with open_corpus(path) as reader:
        sample = reader.read_sample(index)
    stats = characterize(sample.mixture)
    paths = export_csv(stats, out_dir)
    return render_template('characterize_summary.txt', label=f'{path}[{index}] mixture', count=1,
                           papr={'min': stats.papr_db, 'median': stats.papr_db, 'max': stats.papr_db},
                           obw={'min': stats.occupied_bw_hz, 'median': stats.occupied_bw_hz,
                                'max': stats.occupied_bw_hz},
                           paths=paths)


def _characterize_standard(path: str, standard: StandardId, out_dir: str):
    companion = companion_path(path)
    source = companion if os.path.exists(companion) else path
    stats = []
    with open_corpus(source) as reader:
        for idx, md in enumerate(reader.iter_metadata()):
            if md.num_sources == 1 and md.standards == [standard.value]:
                stats.append(characterize(reader.read_sample(idx).targets[0]))
    if not stats:
        raise CorpusReadError(f'No single-source {standard.value} samples in {source}')
    agg = aggregate(standard.value, stats)
    paths = export_csv(agg.mean, out_dir, papr_values=agg.papr_db)
    return render_template('characterize_summary.txt', label=f'{standard.value} over {source}', count=agg.count,
                           papr=agg.papr_summary, obw=agg.occupied_bw_summary, paths=paths)


def cmd_characterize(args) -> int:
    if args.standard is not None:
        try:
            standard = StandardId(args.standard.upper())
        except ValueError:
            raise ArgumentConversionException(f'standard: unknown standard {args.standard!r}') from None
        text = _characterize_standard(args.path, standard, args.out)
    else:
        text = _characterize_index(args.path, args.index, args.out)
    print(text, end='')
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config,
                          method=args.method,
                          estimates_path=args.estimates,
                          n_per_count=args.n,
                          workers=args.workers,
                          master_seed=args.seed,
                          reference_frame=args.reference_frame,
                          eval_crop=True if args.eval_crop else None)
    if cfg.method == EXTERNAL_METHOD:
        if not cfg.estimates_path:
            raise ArgumentConversionException('estimates: the external method needs --estimates')
        records = evaluate_estimates(args.path, cfg.estimates_path, cfg.reference_frame, cfg.eval_crop)
    else:
        records = evaluate_baseline(args.path, cfg.method, cfg.n_per_count, cfg.master_seed, cfg.reference_frame,
                                    cfg.eval_crop, cfg.workers)
    report = stratified_report(records)
    text = report.to_text(title=f'PI-SI-SINR {cfg.method} on {args.path}')
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_records_csv(records, os.path.join(args.out, 'records.csv'))
        report.to_csv(os.path.join(args.out, 'report.csv'))
        with open(os.path.join(args.out, 'report.txt'), 'w') as f:
            f.write(text)
    print(text, end='')
    return EXIT_OK


def cmd_inspect(args) -> int:
    with open_corpus(args.path) as reader:
        if args.summary:
            print(render_template('composition.txt', composition=composition_stats(reader.iter_metadata()),
                                  show_combinations=True), end='')
            print(f'sha256: {reader.content_digest()}')
        else:
            print(json.dumps(json.loads(reader.metadata(args.index).to_json()), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_convert(args) -> int:
    try:
        backend = Backend(args.backend)
    except ValueError:
        raise ArgumentConversionException(f'backend: {args.backend!r} is not a valid backend') from None
    summary = convert_corpus(args.src, args.dst, backend)
    print(render_template('generate_summary.txt', summaries=[summary]), end='')
    return EXIT_OK


def _add_common(parser):
    parser.add_argument('-v', '--verbose', action='store_true', help='log at DEBUG level')
    parser.add_argument('--config', help='JSON run configuration; command-line flags take precedence')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='rfss', description='Multi-standard RF source separation corpus tools')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    gen = sub.add_parser('generate', help='synthesize a mixture corpus and its single-source companion')
    _add_common(gen)
    gen.add_argument('--size', type=int, help='number of mixtures')
    gen.add_argument('--seed', type=int, help='master seed')
    gen.add_argument('--out', help='output path; manifest corpora are directories')
    gen.add_argument('--backend', metavar='{hdf5,manifest}', help='container backend; hdf5 when h5py is installed')
    gen.add_argument('--workers', type=int, help='local worker processes (default from RFSS_WORKERS)')
    gen.add_argument('--mode', metavar='{co_channel,adjacent_channel}', help='force one mixing mode')
    gen.add_argument('--target-stage', metavar='{clean,post_channel}', help='what source_signals store')
    gen.add_argument('--noise-placement', metavar='{per_source,mixture}', help='where AWGN is added')
    gen.add_argument('--single-per-standard', type=int, help='companion samples per standard')
    gen.add_argument('--duration-samples', type=int, help='samples per signal, for previews only')
    gen.add_argument('--no-single', action='store_true', help='skip the single-source companion')
    gen.add_argument('--debug-stages', action='store_true', help='keep per-source placed contributions')
    gen.set_defaults(func=cmd_generate)

    char = sub.add_parser('characterize', help='PAPR, PSD, envelope and spectrogram CSVs')
    _add_common(char)
    char.add_argument('path')
    which = char.add_mutually_exclusive_group(required=True)
    which.add_argument('--index', type=int, help='characterize the mixture of one row')
    which.add_argument('--standard', help='aggregate the single-source companion of one standard')
    char.add_argument('--out', default='characterization', help='directory for the CSV files')
    char.set_defaults(func=cmd_characterize)

    ev = sub.add_parser('evaluate', help='score a baseline or external estimates')
    _add_common(ev)
    ev.add_argument('path')
    ev.add_argument('--method', metavar='{ica,nmf,external}')
    ev.add_argument('--estimates', help='estimates container aligned by sample index (external method)')
    ev.add_argument('--n', type=int, help='test samples per source count (baselines)')
    ev.add_argument('--seed', type=int, help='seed for the separation streams')
    ev.add_argument('--workers', type=int)
    ev.add_argument('--reference-frame', metavar='{baseband,placed}')
    ev.add_argument('--eval-crop', action='store_true', help='score a seeded 7680-sample crop')
    ev.add_argument('--out', help='directory for records.csv, report.csv and report.txt')
    ev.set_defaults(func=cmd_evaluate)

    ins = sub.add_parser('inspect', help='print row metadata or corpus composition')
    ins.add_argument('-v', '--verbose', action='store_true')
    ins.add_argument('path')
    what = ins.add_mutually_exclusive_group(required=True)
    what.add_argument('--index', type=int)
    what.add_argument('--summary', action='store_true')
    ins.set_defaults(func=cmd_inspect)

    conv = sub.add_parser('convert', help='copy a corpus into the other container backend')
    conv.add_argument('-v', '--verbose', action='store_true')
    conv.add_argument('src')
    conv.add_argument('dst')
    conv.add_argument('--backend', required=True, metavar='{hdf5,manifest}')
    conv.set_defaults(func=cmd_convert)
    return parser


def setup_logging(verbose: bool = False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except (ArgumentConversionException, ParameterError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (RfssError, OSError) as e:
        logger.error(f'{type(e).__name__}: {e}')
        return EXIT_FAILURE
    except KeyboardInterrupt:
        logger.warning('Interrupted; containers were closed with the rows written so far')
        return EXIT_INTERRUPTED


if __name__ == '__main__':
    sys.exit(main())
