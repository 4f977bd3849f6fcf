import os
import shutil
import tempfile
import unittest

import numpy as np

from rfss.dataset import Backend, open_corpus, write_corpus, write_estimates
from rfss.dsp import CORPUS_RATE_HZ, IqBuffer, SeedContext, StreamTag
from rfss.evaluation import EVAL_CROP_SAMPLES, ReferenceFrame, crop_start, evaluate_baseline, evaluate_estimates, \
    references, score_estimates, select_test_rows
from rfss.exceptions import EstimateAlignmentError, ParameterError
from rfss.metadata import SampleMetadata
from rfss.metrics import SI_SINR_CAP_DB, si_sinr
from rfss.mixer import ADJACENT_OFFSETS_HZ, MixingMode, MixtureSample, ScenarioDraw, SynthesisOptions, \
    delay, place_source, shift_and_scale, synthesize_sample
from rfss.waveforms import STANDARDS, draw_waveform_config, generate

DURATION = 8192


def fake_sample(index, num_sources, mode=MixingMode.CO_CHANNEL):
    standards = STANDARDS[:num_sources]
    rng = np.random.default_rng(index)
    raw = [IqBuffer(rng.standard_normal(DURATION) + 1j * rng.standard_normal(DURATION), CORPUS_RATE_HZ)
           for _ in standards]
    offsets = [0.0 if mode is MixingMode.CO_CHANNEL else ADJACENT_OFFSETS_HZ[s] for s in standards]
    timing = [7 * slot for slot in range(num_sources)]
    scenario = ScenarioDraw(num_sources=num_sources, standards=standards, mode=mode,
                            freq_offsets_hz=tuple(offsets), powers_db=(0.0,) * num_sources,
                            timing_offsets_samples=tuple(timing), snr_db=(15.0,) * num_sources)
    targets = [delay(r, timing[slot]) for slot, r in enumerate(raw)]
    mixture = IqBuffer(sum(shift_and_scale(t, scenario, slot).samples for slot, t in enumerate(targets)),
                       CORPUS_RATE_HZ)
    metadata = SampleMetadata(num_sources=num_sources,
                              standards=[s.value for s in standards],
                              mixing_mode=mode.value,
                              snr_db=[15.0] * num_sources,
                              channel_types=['TDL-B'] * num_sources,
                              impairments=[{}] * num_sources,
                              powers_db=[0.0] * num_sources,
                              freq_offsets_hz=offsets,
                              timing_offsets=timing,
                              master_seed=42,
                              sample_index=index,
                              mixture_snr_db=15.0)
    return MixtureSample(mixture=mixture, targets=targets, scenario=scenario, metadata=metadata)


def regenerated_contributions(sample):
    """Each source as the mixer placed it, rebuilt from its clean waveform with no channel, noise or impairment."""
    base = SeedContext(sample.metadata.master_seed, sample.sample_index, StreamTag.SCENARIO)
    adjacent = sample.scenario.mode is MixingMode.ADJACENT_CHANNEL
    contributions = []
    for slot, standard in enumerate(sample.scenario.standards):
        ctx = base.for_source(slot)
        clean = generate(draw_waveform_config(standard, ctx, adjacent=adjacent, duration_samples=DURATION), ctx)
        contributions.append(place_source(clean, sample.scenario, slot))
    return contributions


class CropTests(unittest.TestCase):

    def test_deterministic_and_in_range(self):
        for idx in range(50):
            start = crop_start(idx, DURATION)
            self.assertEqual(start, crop_start(idx, DURATION))
            self.assertTrue(0 <= start <= DURATION - EVAL_CROP_SAMPLES)

    def test_too_short(self):
        with self.assertRaises(ParameterError):
            crop_start(0, EVAL_CROP_SAMPLES - 1)
        self.assertEqual(crop_start(0, EVAL_CROP_SAMPLES), 0)


class ReferenceTests(unittest.TestCase):

    def test_baseband_references_are_targets(self):
        sample = fake_sample(0, 2)
        self.assertEqual(references(sample), sample.targets)

    def test_placed_references(self):
        sample = fake_sample(0, 3, mode=MixingMode.ADJACENT_CHANNEL)
        placed = references(sample, ReferenceFrame.PLACED)
        np.testing.assert_allclose(sum(p.samples for p in placed), sample.mixture.samples)

    def test_placed_estimates_hit_the_cap_in_their_frame(self):
        sample = fake_sample(0, 2, mode=MixingMode.ADJACENT_CHANNEL)
        placed = references(sample, ReferenceFrame.PLACED)
        record = score_estimates(sample, placed, 'oracle', reference_frame=ReferenceFrame.PLACED)
        self.assertEqual(record.pi_si_sinr_db, SI_SINR_CAP_DB)

    def test_adjacent_channel_floor(self):
        sample = synthesize_sample(42, 0, SynthesisOptions(duration_samples=DURATION,
                                                           mode_filter=MixingMode.ADJACENT_CHANNEL))
        for slot, estimate in enumerate(regenerated_contributions(sample)):
            with self.subTest(slot=slot):
                self.assertLessEqual(si_sinr(estimate, sample.targets[slot]), -20.0)
        record = score_estimates(sample, regenerated_contributions(sample), 'oracle',
                                 reference_frame=ReferenceFrame.PLACED)
        self.assertEqual(record.pi_si_sinr_db, SI_SINR_CAP_DB)

    def test_co_channel_contributions_hit_the_cap(self):
        for idx in range(4):
            sample = synthesize_sample(42, idx, SynthesisOptions(duration_samples=DURATION,
                                                                 mode_filter=MixingMode.CO_CHANNEL))
            with self.subTest(sample_index=idx, timing=sample.scenario.timing_offsets_samples):
                record = score_estimates(sample, regenerated_contributions(sample), 'oracle')
                self.assertEqual(record.pi_si_sinr_db, SI_SINR_CAP_DB)

    def test_co_channel_contributions_hit_the_cap_after_storage(self):
        samples = [synthesize_sample(42, idx, SynthesisOptions(duration_samples=DURATION,
                                                               mode_filter=MixingMode.CO_CHANNEL))
                   for idx in range(3)]
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'stored')
            write_corpus(samples, path, len(samples), Backend.MANIFEST, DURATION)
            with open_corpus(path) as reader:
                for idx, sample in enumerate(samples):
                    with self.subTest(sample_index=idx):
                        restored = reader.read_sample(idx)
                        self.assertEqual(restored.scenario.timing_offsets_samples,
                                         sample.scenario.timing_offsets_samples)
                        record = score_estimates(restored, regenerated_contributions(sample), 'oracle')
                        # complex64 storage bounds the score below the cap
                        self.assertGreaterEqual(record.pi_si_sinr_db, 100.0)


class ScoreEstimatesTests(unittest.TestCase):

    def test_perfect_estimates(self):
        sample = fake_sample(3, 3)
        estimates = [sample.targets[2], sample.targets[0], sample.targets[1]]
        record = score_estimates(sample, estimates, 'oracle')
        self.assertEqual(record.permutation, [2, 0, 1])
        self.assertEqual(record.pi_si_sinr_db, SI_SINR_CAP_DB)
        self.assertEqual(record.mode, 'co_channel')
        self.assertEqual(record.snr_bin, '10-20')
        self.assertEqual(record.standards, ['GSM', 'UMTS', 'LTE'])

    def test_extra_estimates_are_ignored(self):
        sample = fake_sample(1, 2)
        record = score_estimates(sample, sample.targets + [sample.mixture, sample.mixture], 'oracle')
        self.assertEqual(record.num_sources, 2)

    def test_eval_crop(self):
        sample = fake_sample(2, 2)
        estimates = [IqBuffer(t.samples * 2, CORPUS_RATE_HZ) for t in sample.targets]
        full = score_estimates(sample, estimates, 'oracle')
        cropped = score_estimates(sample, estimates, 'oracle', eval_crop=True)
        self.assertEqual(full.pi_si_sinr_db, cropped.pi_si_sinr_db)
        mixture = score_estimates(sample, [sample.mixture] * 2, 'oracle', eval_crop=True)
        self.assertLess(mixture.pi_si_sinr_db, 5.0)
        self.assertTrue(np.isfinite(mixture.pi_si_sinr_db))


class CorpusEvaluationTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.path = os.path.join(cls.tmp, 'corpus')
        # test split of 20 rows is 17..19, holding one row each of 4, 2 and 3 sources
        samples = [fake_sample(idx, 2 + idx % 3) for idx in range(20)]
        write_corpus(samples, cls.path, len(samples), Backend.MANIFEST, DURATION)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    def test_select_test_rows(self):
        with open_corpus(self.path) as reader:
            self.assertEqual(select_test_rows(reader, 1), [17, 18, 19])
            self.assertEqual(select_test_rows(reader, 5), [17, 18, 19])
            self.assertEqual(select_test_rows(reader, 0), [])
            with self.assertRaises(ParameterError):
                select_test_rows(reader, -1)

    def test_evaluate_baseline(self):
        for method in ('nmf', 'ica'):
            with self.subTest(method=method):
                records = evaluate_baseline(self.path, method, n_per_count=1)
                self.assertEqual([r.sample_index for r in records], [17, 18, 19])
                self.assertEqual([r.num_sources for r in records], [4, 2, 3])
                for r in records:
                    self.assertEqual(r.method, method)
                    self.assertEqual(r.mode, 'co_channel')
                    self.assertTrue(np.isfinite(r.pi_si_sinr_db))

    def test_evaluate_baseline_is_deterministic(self):
        a = evaluate_baseline(self.path, 'nmf', n_per_count=1, master_seed=5)
        b = evaluate_baseline(self.path, 'nmf', n_per_count=1, master_seed=5)
        self.assertEqual(a, b)

    def test_no_rows(self):
        self.assertEqual(evaluate_baseline(self.path, 'nmf', n_per_count=0), [])

    def test_unknown_method(self):
        with self.assertRaises(ParameterError):
            evaluate_baseline(self.path, 'external')

    def test_external_estimates_equal_to_targets(self):
        estimates_path = os.path.join(self.tmp, 'perfect')
        with open_corpus(self.path) as corpus:
            rows = [2, 5, 17]
            estimates = [corpus.read_sample(idx).targets for idx in rows]
            write_estimates(estimates_path, corpus, estimates, Backend.MANIFEST, rows=rows)
        records = evaluate_estimates(self.path, estimates_path)
        self.assertEqual([r.sample_index for r in records], [2, 5, 17])
        for r in records:
            self.assertEqual(r.method, 'external')
            self.assertAlmostEqual(r.pi_si_sinr_db, SI_SINR_CAP_DB, delta=1e-6)

    def test_external_estimates_replicating_the_mixture(self):
        estimates_path = os.path.join(self.tmp, 'mixture')
        with open_corpus(self.path) as corpus:
            rows = [0, 1]
            estimates = [[corpus.read_sample(idx).mixture] * corpus.metadata(idx).num_sources for idx in rows]
            write_estimates(estimates_path, corpus, estimates, Backend.MANIFEST, rows=rows)
        for r in evaluate_estimates(self.path, estimates_path):
            self.assertTrue(np.isfinite(r.pi_si_sinr_db))
            self.assertLess(r.pi_si_sinr_db, 5.0)

    def test_misaligned_estimates(self):
        other = os.path.join(self.tmp, 'other')
        write_corpus([fake_sample(0, 4)], other, 1, Backend.MANIFEST, DURATION)
        with self.assertRaises(EstimateAlignmentError):
            evaluate_estimates(self.path, other)


if __name__ == '__main__':
    unittest.main()
