import unittest

from rfss.argument_conversion import ConverterRegister, SingleArgDecorator, ArgumentConversionException
from rfss.exceptions import ParameterError
from rfss.pool import run_ordered
from rfss.task import RfssTask, banner, create_app

test_app = create_app()


@test_app.task(base=RfssTask)
def scaled_sum(a, b=2, scale=1):
    return (a + b) * scale


@test_app.task(base=RfssTask)
def checked_square(value):
    return value * value


@ConverterRegister.register_for_scope('checked_square')
@SingleArgDecorator('value')
def non_negative(value):
    value = int(value)
    if value < 0:
        raise ValueError('must not be negative')
    return value


@test_app.task(base=RfssTask)
def always_fails(reason):
    raise RuntimeError(reason)


class RfssTaskTests(unittest.TestCase):

    def test_app_is_eager_without_broker(self):
        self.assertTrue(test_app.conf.task_always_eager)
        self.assertEqual(test_app.conf.task_serializer, 'pickle')

    def test_defaults_are_bound(self):
        self.assertEqual(scaled_sum.short_name, 'scaled_sum')
        self.assertEqual(list(scaled_sum.bind_arguments(1).items()), [('a', 1), ('b', 2), ('scale', 1)])
        self.assertEqual(scaled_sum(1), 3)
        self.assertEqual(scaled_sum(1, scale=3), 9)
        self.assertEqual(scaled_sum.apply(args=(4, 4)).get(), 8)

    def test_scope_converters_run_before_the_task(self):
        self.assertEqual(checked_square('3'), 9)
        with self.assertRaises(ArgumentConversionException):
            checked_square(-1)

    def test_banners_logged_at_debug(self):
        with self.assertLogs('rfss.task', level='DEBUG') as logs:
            scaled_sum(1, 1)
        text = '\n'.join(logs.output)
        self.assertIn('STARTED', text)
        self.assertIn('COMPLETED', text)
        self.assertIn('a: 1', text)

    def test_exceptions_logged_once_and_reraised(self):
        with self.assertLogs('rfss.task', level='ERROR') as logs:
            with self.assertRaises(RuntimeError):
                always_fails('no carrier')
        self.assertEqual(len(logs.records), 1)
        self.assertIn('always_fails failed: RuntimeError: no carrier', logs.output[0])
        self.assertIsNotNone(logs.records[0].exc_info)

    def test_banner(self):
        text = banner('STARTED: x', content='line', length=20)
        lines = text.strip('\n').split('\n')
        self.assertEqual(lines[0], '=' * 20)
        self.assertEqual(lines[1], 'STARTED: x'.center(20, '='))
        self.assertEqual(lines[2], 'line')
        self.assertEqual(lines[-1], '=' * 20)


class RunOrderedTests(unittest.TestCase):

    def test_inline_results_in_submission_order(self):
        calls = [(i, 0, 2) for i in range(10)]
        self.assertEqual(list(run_ordered(scaled_sum, calls)), [2 * i for i in range(10)])

    def test_process_pool_results_in_submission_order(self):
        calls = [(i, 1) for i in range(12)]
        self.assertEqual(list(run_ordered(scaled_sum, calls, workers=3)), [i + 1 for i in range(12)])

    def test_results_do_not_depend_on_workers(self):
        calls = [(i, i) for i in range(6)]
        self.assertEqual(list(run_ordered(scaled_sum, calls, workers=1)),
                         list(run_ordered(scaled_sum, calls, workers=2)))

    def test_workers_must_be_positive(self):
        with self.assertRaises(ParameterError):
            run_ordered(scaled_sum, [], workers=0)

    def test_errors_propagate(self):
        with self.assertRaises(RuntimeError):
            list(run_ordered(always_fails, [('boom',)]))
