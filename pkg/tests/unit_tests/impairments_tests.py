import json
import math
import unittest

import numpy as np

from rfss.dsp import IqBuffer, SeedContext, StreamTag
from rfss.exceptions import ParameterError
from rfss.impairments import CFO_PPM_RANGE, NOMINAL_CARRIER_HZ, ImpairmentDraw, apply_cfo, apply_chain, \
    apply_dc_offset, apply_iq_imbalance, apply_pa_rapp, apply_phase_noise, draw_impairments, \
    image_rejection_ratio_db
from rfss.waveforms import StandardId

RATE = 1e6


def tone(bin_index, n=1024):
    return IqBuffer(np.exp(2j * np.pi * bin_index * np.arange(n) / n), RATE)


def ctx(i=0):
    return SeedContext(42, i, StreamTag.IMPAIRMENT)


class IqImbalanceTests(unittest.TestCase):

    def test_image_rejection_matches_closed_form(self):
        k, n = 37, 1024
        for amp_db in np.linspace(0.1, 3.0, 5):
            for phase_deg in np.linspace(1.0, 10.0, 5):
                with self.subTest(amp_db=amp_db, phase_deg=phase_deg):
                    spectrum = np.abs(np.fft.fft(apply_iq_imbalance(tone(k, n), amp_db, phase_deg).samples)) ** 2
                    measured = 10 * np.log10(spectrum[k] / spectrum[n - k])
                    self.assertAlmostEqual(measured, image_rejection_ratio_db(amp_db, phase_deg), delta=0.1)

    def test_balanced_is_identity(self):
        x = tone(3)
        self.assertIs(apply_iq_imbalance(x, 0.0, 0.0), x)


class RappTests(unittest.TestCase):

    def test_output_at_saturation(self):
        # a constant envelope at 0 dB back-off sits exactly at the saturation amplitude
        y = apply_pa_rapp(tone(5), 0.0, p=2.0)
        np.testing.assert_allclose(np.abs(y.samples), 2 ** -0.25, atol=1e-9)

    def test_small_signals_pass(self):
        x = IqBuffer(np.r_[np.full(1000, 1e-3), np.full(10, 1.0)], RATE)
        y = apply_pa_rapp(x, 20.0)
        np.testing.assert_allclose(y.samples[:1000], x.samples[:1000], rtol=1e-9)

    def test_silence_passes_unchanged(self):
        x = IqBuffer(np.zeros(256, dtype=np.complex128), RATE)
        y = apply_pa_rapp(x, 3.0)
        self.assertTrue(np.all(np.isfinite(y.samples)))
        self.assertFalse(np.any(y.samples))
        self.assertFalse(np.any(apply_chain(x, ImpairmentDraw.neutral(), ctx()).samples))

    def test_invalid_smoothness(self):
        with self.assertRaises(ParameterError):
            apply_pa_rapp(tone(1), 3.0, p=0.0)


class PhaseNoiseTests(unittest.TestCase):

    def test_periodogram_at_reference_offset(self):
        level = -100.0
        n = 4096
        window = np.hanning(n)
        freqs = np.fft.fftfreq(n, 1 / RATE)
        bins = np.argsort(np.abs(freqs - 1e4))[:5]
        acc = np.zeros(n)
        carrier = IqBuffer(np.ones(n), RATE)
        for i in range(100):
            y = apply_phase_noise(carrier, level, ctx(i)).samples
            y = y - y.mean()
            acc += np.abs(np.fft.fft(window * y)) ** 2 / (RATE * np.sum(window ** 2))
        measured = 10 * np.log10(np.mean(acc[bins] / 100))
        self.assertAlmostEqual(measured, level, delta=3.0)

    def test_disabled(self):
        x = tone(2)
        self.assertIs(apply_phase_noise(x, -math.inf, ctx()), x)


class OffsetTests(unittest.TestCase):

    def test_cfo_shifts_a_tone(self):
        y = apply_cfo(tone(0), 10 * RATE / 1024)
        self.assertEqual(int(np.argmax(np.abs(np.fft.fft(y.samples)))), 10)
        x = tone(1)
        self.assertIs(apply_cfo(x, 0.0), x)

    def test_dc_offset_level(self):
        x = tone(7)
        y = apply_dc_offset(x, -30.0, ctx())
        dc = np.mean(y.samples - x.samples)
        self.assertAlmostEqual(10 * np.log10(abs(dc) ** 2 / x.power), -30.0, delta=1e-6)


class DrawTests(unittest.TestCase):

    def test_ranges(self):
        for i in range(100):
            for std in StandardId:
                d = draw_impairments(std, SeedContext(1, i, StreamTag.IMPAIRMENT))
                ppm = abs(d.cfo_hz) / NOMINAL_CARRIER_HZ[std] * 1e6
                self.assertTrue(CFO_PPM_RANGE[0] <= ppm <= CFO_PPM_RANGE[1])
                self.assertTrue(0.1 <= d.iq_amp_db <= 3.0)
                self.assertTrue(1.0 <= d.iq_phase_deg <= 10.0)
                self.assertTrue(-110.0 <= d.pn_dbc_hz_at_10khz <= -90.0)
                self.assertTrue(-40.0 <= d.dc_offset_dbc <= -30.0)
                self.assertTrue(3.0 <= d.pa_ibo_db <= 9.0)

    def test_serialization(self):
        neutral = ImpairmentDraw.neutral()
        encoded = json.dumps(neutral.to_dict(), allow_nan=False)
        self.assertEqual(ImpairmentDraw.from_dict(json.loads(encoded)), neutral)
        d = draw_impairments(StandardId.LTE, ctx())
        self.assertEqual(ImpairmentDraw.from_dict(d.to_dict()), d)


class ChainTests(unittest.TestCase):

    def test_neutral_chain_is_identity(self):
        x = tone(9)
        self.assertIs(apply_chain(x, ImpairmentDraw.neutral(), ctx()), x)

    def test_chain_preserves_power(self):
        rng = np.random.default_rng(0)
        x = IqBuffer(rng.standard_normal(4096) + 1j * rng.standard_normal(4096), RATE).scaled_to_power(1.0)
        y = apply_chain(x, draw_impairments(StandardId.NR, ctx(3)), ctx(3))
        self.assertAlmostEqual(y.power, 1.0, delta=1e-9)
        self.assertFalse(np.allclose(y.samples, x.samples))
        np.testing.assert_array_equal(y.samples, apply_chain(x, draw_impairments(StandardId.NR, ctx(3)),
                                                             ctx(3)).samples)
