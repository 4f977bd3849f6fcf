import os
import unittest

from rfss.common import JINJA_ENV, format_db, render_template
from rfss.dataset import Backend, CorpusSummary
from rfss.resources import get_templates_dir


class TemplateTests(unittest.TestCase):

    def test_every_packaged_template_loads(self):
        names = sorted(os.listdir(get_templates_dir()))
        self.assertEqual(sorted(JINJA_ENV.list_templates()), names)
        for name in names:
            with self.subTest(template=name):
                self.assertEqual(os.path.normpath(JINJA_ENV.get_template(name).filename),
                                 os.path.normpath(os.path.join(get_templates_dir(), name)))

    def test_db_filter(self):
        self.assertEqual(format_db(-16.186), '  -16.19')
        self.assertEqual(format_db(None), '     n/a')
        self.assertIs(JINJA_ENV.filters['db'], format_db)

    def test_composition_template(self):
        composition = {'total': 4,
                       'source_counts': {2: 3, 3: 1},
                       'modes': {'adjacent_channel': 1, 'co_channel': 3},
                       'standards': {'GSM': 2, 'LTE': 4, 'NR': 3},
                       'combinations': {'GSM+LTE': 2, 'LTE+NR': 1, 'LTE+NR+NR': 1}}
        text = render_template('composition.txt', composition=composition, show_combinations=True)
        self.assertIn('samples: 4', text)
        self.assertIn('2 sources        3   75.00%', text)
        self.assertIn('co_channel', text)
        self.assertIn('GSM+LTE', text)
        self.assertNotIn('combinations', render_template('composition.txt', composition=composition,
                                                         show_combinations=False))

    def test_generate_summary_template(self):
        summary = CorpusSummary(path='out', backend=Backend.MANIFEST, rows=2, digest='ab' * 32,
                                composition={'total': 2, 'source_counts': {2: 2}, 'modes': {'co_channel': 2},
                                             'standards': {'GSM': 2, 'UMTS': 2}, 'combinations': {}},
                                wall_time_s=1.25)
        text = render_template('generate_summary.txt', summaries=[summary])
        self.assertTrue(text.startswith('out (manifest)\n'))
        self.assertIn('rows: 2', text)
        self.assertIn('wall time: 1.2 s', text)
        self.assertIn('sha256: ' + 'ab' * 32, text)
        self.assertIn('UMTS', text)
