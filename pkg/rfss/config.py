"""
Run configuration shared by every command.

Values are layered: the packaged default JSON, then an optional user JSON file, then the environment, then the
command-line flags. The merged dict goes through the ``run_config`` converters before a :class:`RunConfig` is built,
so a bad value is reported against the key it came from.
"""
import json
import os
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Optional

from celery.utils.log import get_task_logger

from rfss.argument_conversion import ArgumentConversionException, ConverterRegister, SingleArgDecorator
from rfss.baselines import SEPARATORS
from rfss.dataset import Backend, hdf5_available
from rfss.evaluation import DEFAULT_N_PER_COUNT, ReferenceFrame
from rfss.exceptions import ParameterError
from rfss.mixer import MixingMode, NoisePlacement, TargetStage
from rfss.resources import get_default_run_config_path
from rfss.waveforms import DATASET_DURATION_SAMPLES

logger = get_task_logger(__name__)

RUN_CONFIG_SCOPE = 'run_config'
WORKERS_ENV = 'RFSS_WORKERS'
EXTERNAL_METHOD = 'external'
EVAL_METHODS = tuple(sorted(SEPARATORS)) + (EXTERNAL_METHOD,)
MAX_SEED = 2 ** 64


@dataclass
class RunConfig:
    master_seed: int = 42
    corpus_size: int = 100000
    out_path: str = 'rfss_dataset'
    backend: Optional[Backend] = None
    workers: int = 1
    mode_filter: Optional[MixingMode] = None
    target_stage: TargetStage = TargetStage.CLEAN
    noise_placement: NoisePlacement = NoisePlacement.PER_SOURCE
    single_per_standard: Optional[int] = None
    with_single: bool = True
    debug_stages: bool = False
    duration_samples: int = DATASET_DURATION_SAMPLES
    eval_crop: bool = False
    reference_frame: ReferenceFrame = ReferenceFrame.BASEBAND
    method: str = 'nmf'
    n_per_count: int = DEFAULT_N_PER_COUNT
    estimates_path: Optional[str] = None

    def __post_init__(self):
        if self.corpus_size < 1:
            raise ParameterError(f'corpus_size must be at least 1, got {self.corpus_size}')
        if self.workers < 1:
            raise ParameterError(f'workers must be at least 1, got {self.workers}')
        if self.backend is None:
            self.backend = Backend.HDF5 if hdf5_available() else Backend.MANIFEST
        if self.single_per_standard is None:
            self.single_per_standard = max(1, self.corpus_size // 100)

    def to_dict(self) -> dict:
        return {k: v.value if isinstance(v, Enum) else v for k, v in asdict(self).items()}


def field_names() -> set:
    return {f.name for f in fields(RunConfig)}


register = ConverterRegister.for_scope(RUN_CONFIG_SCOPE).register


def _member(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    return enum_cls(str(value).strip().lower().replace('-', '_'))


def _positive(value) -> int:
    value = int(value)
    if value < 1:
        raise ValueError(f'must be at least 1, got {value}')
    return value


@register
@SingleArgDecorator('backend')
def to_backend(value):
    return _member(Backend, value)


@register
@SingleArgDecorator('mode_filter')
def to_mixing_mode(value):
    return _member(MixingMode, value)


@register
@SingleArgDecorator('target_stage')
def to_target_stage(value):
    return _member(TargetStage, value)


@register
@SingleArgDecorator('noise_placement')
def to_noise_placement(value):
    return _member(NoisePlacement, value)


@register
@SingleArgDecorator('reference_frame')
def to_reference_frame(value):
    return _member(ReferenceFrame, value)


@register
@SingleArgDecorator('corpus_size', 'workers', 'duration_samples', 'single_per_standard')
def to_positive_int(value):
    return _positive(value)


@register
@SingleArgDecorator('n_per_count')
def to_count(value):
    value = int(value)
    if value < 0:
        raise ValueError(f'cannot be negative, got {value}')
    return value


@register
@SingleArgDecorator('master_seed')
def to_seed(value):
    value = int(value)
    if not 0 <= value < MAX_SEED:
        raise ValueError(f'must be an unsigned 64-bit integer, got {value}')
    return value


@register
@SingleArgDecorator('with_single', 'debug_stages', 'eval_crop')
def to_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f'expected a boolean, got {value!r}')


@register
@SingleArgDecorator('method')
def to_method(value):
    if value not in EVAL_METHODS:
        raise ValueError(f'unknown method {value!r}; choose from {", ".join(EVAL_METHODS)}')
    return value


@register('to_backend')
def check_backend_installed(kwargs):
    if kwargs.get('backend') is Backend.HDF5 and not hdf5_available():
        raise ArgumentConversionException('backend: hdf5 requires h5py; install rfss[hdf5] or use manifest')


def _read_json(path: str) -> dict:
    with open(path) as f:
        try:
            values = json.load(f)
        except ValueError as e:
            raise ArgumentConversionException(f'{path}: {e}') from None
    if not isinstance(values, dict):
        raise ArgumentConversionException(f'{path}: a run configuration must be a JSON object')
    return values


def load_run_config(config_path: str = None, **overrides) -> RunConfig:
    """
    Merge the configuration layers and validate the result. Overrides that are None leave the lower layers alone,
    so unset command-line flags can be passed straight through.
    """
    values = _read_json(get_default_run_config_path())
    if config_path:
        logger.debug(f'Reading run configuration from {config_path}')
        values.update(_read_json(config_path))
    if os.environ.get(WORKERS_ENV):
        values['workers'] = os.environ[WORKERS_ENV]
    values.update({k: v for k, v in overrides.items() if v is not None})

    unknown = sorted(set(values) - field_names())
    if unknown:
        raise ArgumentConversionException(f'Unknown run configuration keys: {", ".join(unknown)}')
    return RunConfig(**ConverterRegister.scope_convert(RUN_CONFIG_SCOPE, **values))
