import inspect
import os
import textwrap
from collections import OrderedDict

from celery import Celery
from celery.app.task import Task
from celery.utils.log import get_task_logger

from rfss.argument_conversion import ConverterRegister

logger = get_task_logger(__name__)

BROKER_URL_ENV = 'RFSS_BROKER_URL'


def create_app(broker_url: str = None) -> Celery:
    """
    Celery application for sample synthesis and separation. Without a broker URL tasks run eagerly in the
    calling process; arguments and results are pickled either way because they carry numpy arrays.
    """
    broker_url = broker_url or os.environ.get(BROKER_URL_ENV)
    celery_app = Celery('rfss', broker=broker_url or 'memory://', backend='cache+memory://' if not broker_url
                        else broker_url)
    celery_app.conf.update(task_serializer='pickle',
                           result_serializer='pickle',
                           accept_content=['pickle'],
                           task_always_eager=not broker_url,
                           task_eager_propagates=True,
                           worker_hijack_root_logger=False)
    return celery_app


app = create_app()


class RfssTask(Task):
    """
    Base class for rfss work units. Runs the converters registered under the task's short name on the bound
    arguments, logs STARTED/COMPLETED banners at DEBUG level and logs exceptions once before re-raising them.
    """

    def __init__(self):
        super(RfssTask, self).__init__()
        self.sig = inspect.signature(self.run)

    @property
    def short_name(self) -> str:
        return self.name.split('.')[-1]

    def bind_arguments(self, *args, **kwargs) -> OrderedDict:
        bound = self.sig.bind(*args, **kwargs)
        bound.apply_defaults()
        return OrderedDict(bound.arguments)

    def print_precall_header(self, bound_args):
        content = ''
        if bound_args:
            content = 'ARGUMENTS\n' + '\n'.join('  %d. %s: %s' % (n, k, _short_repr(v))
                                                for n, (k, v) in enumerate(bound_args.items(), start=1))
        logger.debug(banner('STARTED: %s' % self.name, content=content, length=100))

    def print_postcall_header(self, result):
        content = ''
        if result is not None:
            content = 'RETURNS\n  %s' % _short_repr(result)
        logger.debug(banner('COMPLETED: %s' % self.name, ch='*', content=content, length=100))

    def __call__(self, *args, **kwargs):
        try:
            bound_args = self.bind_arguments(*args, **kwargs)
            bound_args.update(ConverterRegister.scope_convert(self.short_name, **bound_args))
            self.print_precall_header(bound_args)
            result = super(RfssTask, self).__call__(**bound_args)
            self.print_postcall_header(result)
            return result
        except Exception as e:
            self.handle_exception(e)

    def handle_exception(self, e, raise_exception=True):
        mssg = f'{type(e).__name__}'
        exception_string = str(e)
        if exception_string:
            mssg += f': {exception_string}'
        logger.error(f'{self.short_name} failed: {mssg}', exc_info=e)
        if raise_exception:
            raise e


def _short_repr(value, width=200) -> str:
    text = repr(value)
    return text if len(text) <= width else text[:width - 3] + '...'


def banner(text, ch='=', length=78, content=''):
    if content:
        content = '\n'.join(['\n'.join(textwrap.wrap(line, width=length)) for line in content.split('\n')])
        content += '\n'
    spaced_text = '\n'.join(
        ['\n'.join(textwrap.wrap(line, width=length, drop_whitespace=False)) for line in text.split('\n')])
    return '\n' + ch * length + '\n' + spaced_text.center(length, ch) + '\n' + content + ch * length + '\n'
