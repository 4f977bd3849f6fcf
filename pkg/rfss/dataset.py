"""
Corpus containers. Both backends expose the same flat logical schema:

    mixed_signals   (N, T)     complex64
    source_signals  (N, 4, T)  complex64, slots beyond num_sources are zero
    signal_lengths  (N,)       int32
    metadata        (N,)       JSON text, one SampleMetadata per row

The HDF5 backend (``h5py``, optional) stores complex64 natively, which h5py lays out as a compound of two
float32 fields (r, i); the ``complex_layout`` file attribute records that. The manifest backend is a directory
with ``manifest.json`` and one shard per dataset holding one deflate frame per row, little-endian float32
interleaved real/imag for the signals.
"""
import hashlib
import json
import os
import time
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np
from celery.utils.log import get_task_logger

from rfss.dsp import CORPUS_RATE_HZ, IqBuffer
from rfss.exceptions import CorpusReadError, CorpusWriteError, EstimateAlignmentError, ParameterError
from rfss.metadata import SampleMetadata, composition_stats
from rfss.mixer import MAX_SOURCES, MixingMode, MixtureSample, ScenarioDraw
from rfss.waveforms import DATASET_DURATION_SAMPLES, STANDARDS, StandardId

try:
    import h5py
except ImportError:  # pragma: no cover
    h5py = None

logger = get_task_logger(__name__)

MIXED_SIGNALS = 'mixed_signals'
SOURCE_SIGNALS = 'source_signals'
SIGNAL_LENGTHS = 'signal_lengths'
METADATA = 'metadata'
DATASETS = (MIXED_SIGNALS, SOURCE_SIGNALS, SIGNAL_LENGTHS, METADATA)

DEFLATE_LEVEL = 6
MANIFEST_FORMAT = 'rfss-manifest/1'
MANIFEST_FILE = 'manifest.json'
HDF5_COMPLEX_LAYOUT = 'h5py-compound-r-i-float32'
SAMPLE_DTYPE = np.dtype('<c8')
LENGTH_DTYPE = np.dtype('<i4')


class Backend(Enum):
    HDF5 = 'hdf5'
    MANIFEST = 'manifest'


def hdf5_available() -> bool:
    return h5py is not None


def _require_h5py():
    if h5py is None:
        raise ParameterError('The hdf5 backend needs h5py; install rfss[hdf5] or use the manifest backend')


# --------------------------------------------------------------------------------------------------------------
# Splits

@dataclass(frozen=True)
class SplitSpec:
    """Index-range split boundaries at the reference corpus size; smaller corpora scale them down."""
    train_end: int = 70000
    val_end: int = 85000
    reference_size: int = 100000

    def __post_init__(self):
        if not 0 < self.train_end <= self.val_end <= self.reference_size:
            raise ParameterError(f'Split boundaries out of order: {self}')


def split_indices(spec: SplitSpec, corpus_size: int):
    if corpus_size < 1:
        raise ParameterError(f'Corpus size must be at least 1, got {corpus_size}')
    train_end = max(1, corpus_size * spec.train_end // spec.reference_size)
    val_end = max(train_end, corpus_size * spec.val_end // spec.reference_size)
    return list(range(train_end)), list(range(train_end, val_end)), list(range(val_end, corpus_size))


# --------------------------------------------------------------------------------------------------------------
# Rows

@dataclass(frozen=True)
class CorpusRow:
    """One row of the logical schema, as stored."""
    mixture: np.ndarray
    sources: np.ndarray
    length: int
    metadata_json: str

    @classmethod
    def from_sample(cls, sample: MixtureSample) -> 'CorpusRow':
        n = len(sample.mixture)
        sources = np.zeros((MAX_SOURCES, n), dtype=SAMPLE_DTYPE)
        for slot, target in enumerate(sample.targets):
            sources[slot] = target.samples
        return cls(mixture=sample.mixture.samples.astype(SAMPLE_DTYPE),
                   sources=sources,
                   length=n,
                   metadata_json=sample.metadata.to_json())

    @property
    def metadata(self) -> SampleMetadata:
        return SampleMetadata.from_json(self.metadata_json)

    def update_digest(self, digest):
        digest.update(np.ascontiguousarray(self.mixture, dtype=SAMPLE_DTYPE).tobytes())
        digest.update(np.ascontiguousarray(self.sources, dtype=SAMPLE_DTYPE).tobytes())
        digest.update(np.asarray(self.length, dtype=LENGTH_DTYPE).tobytes())
        digest.update(self.metadata_json.encode('utf-8'))


def scenario_from_metadata(md: SampleMetadata) -> ScenarioDraw:
    return ScenarioDraw(num_sources=md.num_sources,
                        standards=tuple(StandardId(s) for s in md.standards),
                        mode=MixingMode(md.mixing_mode),
                        freq_offsets_hz=tuple(md.freq_offsets_hz),
                        powers_db=tuple(md.powers_db),
                        timing_offsets_samples=tuple(md.timing_offsets),
                        snr_db=tuple(md.snr_db))


def sample_from_row(row: CorpusRow) -> MixtureSample:
    md = row.metadata
    return MixtureSample(mixture=IqBuffer(row.mixture, CORPUS_RATE_HZ),
                         targets=[IqBuffer(row.sources[slot], CORPUS_RATE_HZ) for slot in range(md.num_sources)],
                         scenario=scenario_from_metadata(md),
                         metadata=md)


# --------------------------------------------------------------------------------------------------------------
# Writers

class CorpusWriter:
    """
    Single-owner writer. Rows must arrive in index order; closing before every row was written leaves a
    valid corpus truncated to the rows that made it.
    """
    backend: Backend = None

    def __init__(self, path: str, corpus_size: int, duration_samples: int = DATASET_DURATION_SAMPLES):
        if corpus_size < 1:
            raise ParameterError(f'Corpus size must be at least 1, got {corpus_size}')
        self.path = path
        self.corpus_size = corpus_size
        self.duration_samples = duration_samples
        self.rows_written = 0
        self.closed = False
        self._digest = hashlib.sha256()
        self._metadata = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    @property
    def digest(self) -> str:
        return self._digest.hexdigest()

    def write(self, sample: MixtureSample):
        if sample.sample_index != self.rows_written:
            raise CorpusWriteError(f'Expected sample {self.rows_written}, got {sample.sample_index}',
                                   index=self.rows_written)
        self.write_row(CorpusRow.from_sample(sample))

    def write_row(self, row: CorpusRow):
        index = self.rows_written
        if self.closed:
            raise CorpusWriteError(f'{self.path} is already closed', index=index)
        if index >= self.corpus_size:
            raise CorpusWriteError(f'{self.path} was sized for {self.corpus_size} rows', index=index)
        if row.mixture.shape != (self.duration_samples,) or row.sources.shape != (MAX_SOURCES,
                                                                                  self.duration_samples):
            raise CorpusWriteError(f'Row shapes {row.mixture.shape}/{row.sources.shape} do not match the corpus',
                                   index=index)
        try:
            self._store(index, row)
        except OSError as e:
            raise CorpusWriteError(f'Writing {self.path} failed: {e}', index=index) from e
        row.update_digest(self._digest)
        self._metadata.append(row.metadata)
        self.rows_written += 1

    def close(self):
        if self.closed:
            return
        self.closed = True
        if self.rows_written < self.corpus_size:
            logger.warning(f'{self.path}: closing after {self.rows_written} of {self.corpus_size} rows')
        try:
            self._finalize()
        except OSError as e:
            raise CorpusWriteError(f'Finalizing {self.path} failed: {e}', index=self.rows_written) from e

    def summary(self, wall_time_s: float = None) -> 'CorpusSummary':
        return CorpusSummary(path=self.path,
                             backend=self.backend,
                             rows=self.rows_written,
                             digest=self.digest,
                             composition=composition_stats(self._metadata),
                             wall_time_s=wall_time_s)

    def _store(self, index: int, row: CorpusRow):
        raise NotImplementedError()

    def _finalize(self):
        raise NotImplementedError()


class Hdf5CorpusWriter(CorpusWriter):
    backend = Backend.HDF5

    def __init__(self, path: str, corpus_size: int, duration_samples: int = DATASET_DURATION_SAMPLES):
        _require_h5py()
        super().__init__(path, corpus_size, duration_samples)
        try:
            self._file = h5py.File(path, 'w', track_order=False)
        except OSError as e:
            raise CorpusWriteError(f'Cannot create {path}: {e}', index=0) from e
        self._file.attrs['complex_layout'] = HDF5_COMPLEX_LAYOUT
        self._file.attrs['sample_rate_hz'] = CORPUS_RATE_HZ
        n, t = corpus_size, duration_samples
        signal_opts = dict(compression='gzip', compression_opts=DEFLATE_LEVEL, track_times=False)
        self._datasets = {
            MIXED_SIGNALS: self._file.create_dataset(MIXED_SIGNALS, shape=(n, t), maxshape=(None, t),
                                                     chunks=(1, t), dtype=np.complex64, **signal_opts),
            SOURCE_SIGNALS: self._file.create_dataset(SOURCE_SIGNALS, shape=(n, MAX_SOURCES, t),
                                                      maxshape=(None, MAX_SOURCES, t), chunks=(1, MAX_SOURCES, t),
                                                      dtype=np.complex64, **signal_opts),
            SIGNAL_LENGTHS: self._file.create_dataset(SIGNAL_LENGTHS, shape=(n,), maxshape=(None,),
                                                      chunks=(min(n, 4096),), dtype=np.int32, **signal_opts),
            METADATA: self._file.create_dataset(METADATA, shape=(n,), maxshape=(None,), chunks=(min(n, 4096),),
                                                dtype=h5py.string_dtype(encoding='utf-8'), **signal_opts),
        }

    def _store(self, index: int, row: CorpusRow):
        self._datasets[MIXED_SIGNALS][index] = row.mixture
        self._datasets[SOURCE_SIGNALS][index] = row.sources
        self._datasets[SIGNAL_LENGTHS][index] = row.length
        self._datasets[METADATA][index] = row.metadata_json

    def _finalize(self):
        if self.rows_written < self.corpus_size:
            for ds in self._datasets.values():
                ds.resize(self.rows_written, axis=0)
        self._file.close()


class ManifestCorpusWriter(CorpusWriter):
    backend = Backend.MANIFEST

    def __init__(self, path: str, corpus_size: int, duration_samples: int = DATASET_DURATION_SAMPLES):
        super().__init__(path, corpus_size, duration_samples)
        try:
            os.makedirs(path, exist_ok=True)
            self._shards = {name: open(os.path.join(path, name + '.bin'), 'wb') for name in DATASETS}
        except OSError as e:
            raise CorpusWriteError(f'Cannot create {path}: {e}', index=0) from e
        self._frames = {name: [] for name in DATASETS}

    def _append(self, name: str, payload: bytes):
        shard = self._shards[name]
        frame = zlib.compress(payload, DEFLATE_LEVEL)
        self._frames[name].append([shard.tell(), len(frame)])
        shard.write(frame)

    def _store(self, index: int, row: CorpusRow):
        self._append(MIXED_SIGNALS, np.ascontiguousarray(row.mixture, dtype=SAMPLE_DTYPE).tobytes())
        self._append(SOURCE_SIGNALS, np.ascontiguousarray(row.sources, dtype=SAMPLE_DTYPE).tobytes())
        self._append(SIGNAL_LENGTHS, np.asarray(row.length, dtype=LENGTH_DTYPE).tobytes())
        self._append(METADATA, row.metadata_json.encode('utf-8'))

    def _manifest(self) -> dict:
        n, t = self.rows_written, self.duration_samples
        shapes = {MIXED_SIGNALS: [n, t], SOURCE_SIGNALS: [n, MAX_SOURCES, t], SIGNAL_LENGTHS: [n], METADATA: [n]}
        dtypes = {MIXED_SIGNALS: SAMPLE_DTYPE.str, SOURCE_SIGNALS: SAMPLE_DTYPE.str, SIGNAL_LENGTHS: LENGTH_DTYPE.str,
                  METADATA: 'json-utf8'}
        return {
            'format': MANIFEST_FORMAT,
            'rows': n,
            'sample_rate_hz': CORPUS_RATE_HZ,
            'datasets': {name: {'file': name + '.bin',
                                'shape': shapes[name],
                                'dtype': dtypes[name],
                                'compression': f'deflate-{DEFLATE_LEVEL}',
                                'frames': self._frames[name]} for name in DATASETS},
        }

    def _finalize(self):
        for shard in self._shards.values():
            shard.close()
        with open(os.path.join(self.path, MANIFEST_FILE), 'w') as f:
            json.dump(self._manifest(), f, sort_keys=True, indent=1)


def open_writer(path: str, corpus_size: int, backend: Backend,
                duration_samples: int = DATASET_DURATION_SAMPLES) -> CorpusWriter:
    writer_cls = Hdf5CorpusWriter if Backend(backend) is Backend.HDF5 else ManifestCorpusWriter
    logger.debug(f'Opening {writer_cls.__name__} on {path} for {corpus_size} rows')
    return writer_cls(path, corpus_size, duration_samples)


@dataclass(frozen=True)
class CorpusSummary:
    path: str
    backend: Backend
    rows: int
    digest: str
    composition: dict = field(default_factory=dict)
    wall_time_s: Optional[float] = None


def write_corpus(samples: Iterable[MixtureSample], path: str, corpus_size: int, backend: Backend = Backend.MANIFEST,
                 duration_samples: int = DATASET_DURATION_SAMPLES) -> CorpusSummary:
    """
    Drain ``samples`` into a new container. The writer is finalized whatever happens, so an interrupted run
    leaves a readable corpus holding the rows written so far.
    """
    start = time.monotonic()
    with open_writer(path, corpus_size, backend, duration_samples) as writer:
        for sample in samples:
            writer.write(sample)
    summary = writer.summary(wall_time_s=time.monotonic() - start)
    logger.info(f'Wrote {summary.rows} rows to {path} (sha256 {summary.digest[:16]})')
    return summary


# --------------------------------------------------------------------------------------------------------------
# Readers

class CorpusReader:
    backend: Backend = None

    def __init__(self, path: str):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def __len__(self):
        raise NotImplementedError()

    def close(self):
        pass

    def _check_index(self, idx: int):
        if not 0 <= idx < len(self):
            raise CorpusReadError(f'{self.path} holds {len(self)} rows', index=idx)

    def read_row(self, idx: int) -> CorpusRow:
        self._check_index(idx)
        try:
            row = self._load(idx)
            # parse once so a corrupt record fails here and not later
            row.metadata
        except (OSError, ValueError, KeyError, TypeError, zlib.error) as e:
            raise CorpusReadError(f'Corrupt row in {self.path}: {e}', index=idx) from e
        return row

    def read_sample(self, idx: int) -> MixtureSample:
        return sample_from_row(self.read_row(idx))

    def metadata(self, idx: int) -> SampleMetadata:
        self._check_index(idx)
        try:
            return SampleMetadata.from_json(self._load_metadata(idx))
        except (OSError, ValueError, KeyError, TypeError, zlib.error) as e:
            raise CorpusReadError(f'Corrupt metadata in {self.path}: {e}', index=idx) from e

    def iter_metadata(self):
        for idx in range(len(self)):
            yield self.metadata(idx)

    def content_digest(self) -> str:
        digest = hashlib.sha256()
        for idx in range(len(self)):
            self.read_row(idx).update_digest(digest)
        return digest.hexdigest()

    def _load(self, idx: int) -> CorpusRow:
        raise NotImplementedError()

    def _load_metadata(self, idx: int) -> str:
        raise NotImplementedError()


class Hdf5CorpusReader(CorpusReader):
    backend = Backend.HDF5

    def __init__(self, path: str):
        _require_h5py()
        super().__init__(path)
        try:
            self._file = h5py.File(path, 'r')
            self._datasets = {name: self._file[name] for name in DATASETS}
        except (OSError, KeyError) as e:
            raise CorpusReadError(f'Cannot open corpus {path}: {e}') from e

    def __len__(self):
        return self._datasets[MIXED_SIGNALS].shape[0]

    def close(self):
        self._file.close()

    def _load(self, idx: int) -> CorpusRow:
        return CorpusRow(mixture=self._datasets[MIXED_SIGNALS][idx],
                         sources=self._datasets[SOURCE_SIGNALS][idx],
                         length=int(self._datasets[SIGNAL_LENGTHS][idx]),
                         metadata_json=self._load_metadata(idx))

    def _load_metadata(self, idx: int) -> str:
        return self._datasets[METADATA].asstr()[idx]


class ManifestCorpusReader(CorpusReader):
    backend = Backend.MANIFEST

    def __init__(self, path: str):
        super().__init__(path)
        try:
            with open(os.path.join(path, MANIFEST_FILE)) as f:
                self.manifest = json.load(f)
        except (OSError, ValueError) as e:
            raise CorpusReadError(f'Cannot open corpus {path}: {e}') from e
        if self.manifest.get('format') != MANIFEST_FORMAT:
            raise CorpusReadError(f'{path} is not an {MANIFEST_FORMAT} corpus')
        self._datasets = self.manifest['datasets']
        self._duration = self._datasets[MIXED_SIGNALS]['shape'][1]

    def __len__(self):
        return self.manifest['rows']

    def _frame(self, name: str, idx: int) -> bytes:
        offset, length = self._datasets[name]['frames'][idx]
        with open(os.path.join(self.path, self._datasets[name]['file']), 'rb') as f:
            f.seek(offset)
            frame = f.read(length)
        if len(frame) != length:
            raise ValueError(f'{name} frame truncated')
        return zlib.decompress(frame)

    def _load(self, idx: int) -> CorpusRow:
        mixture = np.frombuffer(self._frame(MIXED_SIGNALS, idx), dtype=SAMPLE_DTYPE)
        sources = np.frombuffer(self._frame(SOURCE_SIGNALS, idx), dtype=SAMPLE_DTYPE)
        return CorpusRow(mixture=mixture.reshape(self._duration),
                         sources=sources.reshape(MAX_SOURCES, self._duration),
                         length=int(np.frombuffer(self._frame(SIGNAL_LENGTHS, idx), dtype=LENGTH_DTYPE)[0]),
                         metadata_json=self._load_metadata(idx))

    def _load_metadata(self, idx: int) -> str:
        return self._frame(METADATA, idx).decode('utf-8')


def detect_backend(path: str) -> Backend:
    if os.path.isdir(path):
        return Backend.MANIFEST
    if os.path.isfile(path):
        return Backend.HDF5
    raise CorpusReadError(f'No corpus at {path}')


def open_corpus(path: str) -> CorpusReader:
    if detect_backend(path) is Backend.MANIFEST:
        return ManifestCorpusReader(path)
    return Hdf5CorpusReader(path)


def read_sample(path: str, idx: int) -> MixtureSample:
    with open_corpus(path) as reader:
        return reader.read_sample(idx)


def convert_corpus(src: str, dst: str, backend: Backend) -> CorpusSummary:
    with open_corpus(src) as reader:
        n = len(reader)
        if not n:
            raise CorpusReadError(f'{src} is empty')
        duration = reader.read_row(0).mixture.shape[0]
        with open_writer(dst, n, backend, duration) as writer:
            for idx in range(n):
                writer.write_row(reader.read_row(idx))
    return writer.summary()


# --------------------------------------------------------------------------------------------------------------
# Single-source companion

def companion_path(path: str) -> str:
    root, ext = os.path.splitext(path.rstrip(os.sep))
    return f'{root}_single{ext}'


def single_source_plan(single_per_standard: int) -> list:
    """Standards in contiguous blocks GSM, UMTS, LTE, NR."""
    if single_per_standard < 1:
        raise ParameterError(f'Need at least one companion sample per standard, got {single_per_standard}')
    return [std for std in STANDARDS for _ in range(single_per_standard)]


# --------------------------------------------------------------------------------------------------------------
# External estimates

def write_estimates(path: str, corpus: CorpusReader, estimates: Iterable, backend: Backend = Backend.MANIFEST,
                    rows: Optional[Iterable[int]] = None) -> CorpusSummary:
    """
    Store separator outputs in the corpus schema: mixture and metadata copied from ``corpus``, estimates in
    ``source_signals``. ``estimates`` yields one sequence of complex arrays per row in ``rows``.
    """
    rows = list(range(len(corpus)) if rows is None else rows)
    if not rows:
        raise ParameterError(f'No rows to write estimates for; {corpus.path} has {len(corpus)}')
    with open_writer(path, len(rows), backend, corpus.read_row(rows[0]).mixture.shape[0]) as writer:
        for idx, row_estimates in zip(rows, estimates):
            row = corpus.read_row(idx)
            sources = np.zeros_like(row.sources)
            for slot, est in enumerate(row_estimates):
                sources[slot] = np.asarray(est.samples if isinstance(est, IqBuffer) else est)
            writer.write_row(CorpusRow(row.mixture, sources, row.length, row.metadata_json))
    return writer.summary()


def check_alignment(corpus: CorpusReader, estimates: CorpusReader) -> list:
    """
    Every estimates row must carry the metadata of the corpus row named by its sample_index. Returns those
    corpus indices in estimates-row order.
    """
    rows = []
    for row in range(len(estimates)):
        got = estimates.metadata(row)
        idx = got.sample_index
        if not 0 <= idx < len(corpus) or corpus.metadata(idx) != got:
            raise EstimateAlignmentError(f'{estimates.path} does not line up with {corpus.path}', index=idx)
        rows.append(idx)
    if not rows:
        raise EstimateAlignmentError(f'{estimates.path} holds no rows', index=0)
    return rows
