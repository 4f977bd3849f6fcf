"""
End-to-end checks at corpus scale. They take minutes to tens of minutes, so they only run with RFSS_SLOW_TESTS=1;
RFSS_WORKERS sets the process count used for generation and evaluation.
"""
import itertools
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
from scipy import fft, signal

from rfss.baselines import nmf, nmf_separate, stft
from rfss.characterization import characterize, occupied_bandwidth, papr_db
from rfss.config import RunConfig
from rfss.dataset import Backend, SplitSpec, hdf5_available, open_corpus, split_indices
from rfss.dsp import CORPUS_RATE_HZ, IqBuffer, SeedContext, StreamTag
from rfss.evaluation import evaluate_baseline
from rfss.generation import generate_mixtures
from rfss.metrics import pairwise_si_sinr, pit_si_sinr, si_sinr, stratified_report
from rfss.mixer import MixingMode
from rfss.waveforms import DATASET_DURATION_SAMPLES, StandardId, WaveformConfig, generate

SLOW = os.environ.get('RFSS_SLOW_TESTS') == '1'
WORKERS = int(os.environ.get('RFSS_WORKERS') or 1)


def fine_occupied_bandwidth(x):
    freqs, psd = signal.welch(x.samples, fs=x.sample_rate_hz, window='hann', nperseg=16384,
                              return_onesided=False, detrend=False)
    return occupied_bandwidth(fft.fftshift(freqs), fft.fftshift(psd))


def container_files(path_a, path_b):
    """Pairs of files making up two corpora: the HDF5 file itself, or every file of a manifest directory."""
    if os.path.isfile(path_a):
        return [(path_a, path_b)]
    return [(os.path.join(path_a, name), os.path.join(path_b, name)) for name in sorted(os.listdir(path_a))]


@unittest.skipUnless(SLOW, 'set RFSS_SLOW_TESTS=1')
class CorpusAcceptanceTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def config(self, name, **kwargs):
        values = dict(master_seed=42, out_path=os.path.join(self.tmp, name), workers=WORKERS, with_single=False)
        values.update(kwargs)
        return RunConfig(**values)

    def test_generation_is_byte_identical(self):
        backends = [Backend.MANIFEST] + ([Backend.HDF5] if hdf5_available() else [])
        for backend in backends:
            with self.subTest(backend=backend):
                suffix = '.h5' if backend is Backend.HDF5 else ''
                a = generate_mixtures(self.config('a' + suffix, corpus_size=200, backend=backend))
                b = generate_mixtures(self.config('b' + suffix, corpus_size=200, backend=backend, workers=1))
                self.assertEqual(a.digest, b.digest)
                for summary in (a, b):
                    with open_corpus(summary.path) as reader:
                        self.assertEqual(reader.content_digest(), summary.digest)
                for name_a, name_b in container_files(a.path, b.path):
                    with open(name_a, 'rb') as fa, open(name_b, 'rb') as fb:
                        self.assertEqual(fa.read(), fb.read(), os.path.basename(name_a))

    def test_format_parity(self):
        summary = generate_mixtures(self.config('parity', corpus_size=10, backend=Backend.MANIFEST))
        self.assertEqual(summary.rows, 10)
        with open_corpus(summary.path) as reader:
            for idx in range(10):
                row = reader.read_row(idx)
                self.assertEqual(row.mixture.shape, (DATASET_DURATION_SAMPLES,))
                self.assertEqual(row.sources.shape, (4, DATASET_DURATION_SAMPLES))
                n = row.metadata.num_sources
                self.assertFalse(np.any(row.sources[n:]))
                self.assertTrue(all(np.any(row.sources[slot]) for slot in range(n)))
        train, val, _ = split_indices(SplitSpec(), 100000)
        self.assertEqual((len(train), len(train) + len(val)), (70000, 85000))

    def test_nmf_beats_ica_on_two_source_co_channel(self):
        cfg = self.config('rank', corpus_size=2000, backend=Backend.MANIFEST, mode_filter=MixingMode.CO_CHANNEL)
        summary = generate_mixtures(cfg)
        scores = {}
        for method in ('ica', 'nmf'):
            records = evaluate_baseline(summary.path, method, n_per_count=50, workers=WORKERS)
            two = [r.pi_si_sinr_db for r in records if r.num_sources == 2]
            self.assertEqual(len(two), 50)
            scores[method] = float(np.mean(two))
        self.assertGreaterEqual(scores['nmf'] - scores['ica'], 5.0)
        self.assertLessEqual(scores['ica'], -20.0)

    def test_ica_co_channel_scores_do_not_track_snr(self):
        cfg = self.config('snr', corpus_size=1200, backend=Backend.MANIFEST, mode_filter=MixingMode.CO_CHANNEL)
        summary = generate_mixtures(cfg)
        records = evaluate_baseline(summary.path, 'ica', n_per_count=20, workers=WORKERS)
        self.assertEqual(len(records), 60)
        cells = [c for c in stratified_report(records).grouping('co_channel_snr_bin') if c.count >= 5]
        self.assertGreaterEqual(len(cells), 2, [(c.key, c.count) for c in cells])
        means = [c.mean_db for c in cells]
        self.assertLessEqual(max(means) - min(means), 6.0, [(c.key, c.mean_db, c.count) for c in cells])


@unittest.skipUnless(SLOW, 'set RFSS_SLOW_TESTS=1')
class WaveformConformanceTests(unittest.TestCase):
    seeds = range(100)

    def generated(self, standard):
        for seed in self.seeds:
            yield generate(WaveformConfig(standard), SeedContext(seed, 0, StreamTag.BITS))

    def test_gsm(self):
        for x in self.generated(StandardId.GSM):
            stats = characterize(x)
            self.assertLessEqual(stats.papr_db, 2.0)
            self.assertTrue(160e3 <= stats.occupied_bw_hz <= 260e3, stats.occupied_bw_hz)

    def test_umts(self):
        for x in self.generated(StandardId.UMTS):
            self.assertTrue(4.0e6 <= fine_occupied_bandwidth(x) <= 5.2e6)

    def test_ofdm(self):
        for standard in (StandardId.LTE, StandardId.NR):
            paprs = [papr_db(x) for x in self.generated(standard)]
            in_range = sum(8.0 <= p <= 13.0 for p in paprs) / len(paprs)
            with self.subTest(standard=standard):
                self.assertGreaterEqual(in_range, 0.95)

    def test_lte_bandwidth(self):
        for x in self.generated(StandardId.LTE):
            self.assertTrue(8.1e6 <= fine_occupied_bandwidth(x) <= 9.9e6)


@unittest.skipUnless(SLOW, 'set RFSS_SLOW_TESTS=1')
class MetricAcceptanceTests(unittest.TestCase):

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            s = rng.standard_normal(512) + 1j * rng.standard_normal(512)
            x = s + 0.5 * (rng.standard_normal(512) + 1j * rng.standard_normal(512))
            scale = complex(*rng.standard_normal(2)) * 10 ** rng.uniform(-3, 3)
            self.assertAlmostEqual(si_sinr(scale * x, s), si_sinr(x, s), places=9)

    def test_pit_against_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            refs = [rng.standard_normal(256) + 1j * rng.standard_normal(256) for _ in range(3)]
            ests = [rng.standard_normal() * refs[0] + rng.standard_normal() * refs[1] + rng.standard_normal() * refs[2]
                    for _ in range(3)]
            scores = pairwise_si_sinr(ests, refs)
            brute = max(np.mean([scores[i, p[i]] for i in range(3)]) for p in itertools.permutations(range(3)))
            self.assertAlmostEqual(pit_si_sinr(ests, refs)[0], brute, places=12)

    def test_nmf_objective_and_partition(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = 16384
            x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
            buffer = IqBuffer(x, CORPUS_RATE_HZ)
            _, _, objective = nmf(np.abs(stft(buffer).frames.T), 3, rng)
            self.assertTrue(all(b <= a * (1 + 1e-9) for a, b in zip(objective, objective[1:])))
            result = nmf_separate(buffer, 3, SeedContext(seed, 0, StreamTag.SEPARATION))
            residual = sum(e.samples for e in result.estimates) - x
            self.assertLess(float(np.sqrt(np.mean(np.abs(residual) ** 2))), 1e-3)


if __name__ == '__main__':
    unittest.main()
