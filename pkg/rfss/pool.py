"""
Ordered dispatch of rfss tasks. Results always come back in submission order, so the single corpus writer can
consume them as they arrive whatever the dispatch mode.
"""
import importlib
from collections import deque
from typing import Iterable, Iterator

import billiard
from celery.app.task import Task
from celery.utils.log import get_task_logger

from rfss.broker import handle_broker_timeout
from rfss.exceptions import ParameterError

logger = get_task_logger(__name__)

DEFAULT_MAX_IN_FLIGHT = 64
RESULT_POLL_TIMEOUT = 60


def _run_in_worker(call):
    module_name, task_name, args = call
    task = getattr(importlib.import_module(module_name), task_name.split('.')[-1])
    return task(*args)


def _dispatch_broker(task: Task, calls: Iterable[tuple], max_in_flight: int) -> Iterator:
    pending = deque()
    for args in calls:
        pending.append(task.apply_async(args=args))
        if len(pending) >= max_in_flight:
            yield _collect(pending.popleft())
    while pending:
        yield _collect(pending.popleft())


def _collect(result):
    value = handle_broker_timeout(result.get, kwargs={'timeout': RESULT_POLL_TIMEOUT}, timeout=None)
    result.forget()
    return value


def _dispatch_processes(task: Task, calls: Iterable[tuple], workers: int) -> Iterator:
    pool = billiard.Pool(processes=workers)
    try:
        yield from pool.imap(_run_in_worker, ((task.run.__module__, task.name, args) for args in calls), chunksize=1)
        pool.close()
    except BaseException:
        pool.terminate()
        raise
    finally:
        pool.join()


def _dispatch_inline(task: Task, calls: Iterable[tuple]) -> Iterator:
    for args in calls:
        yield task.apply(args=args).get()


def run_ordered(task: Task, calls: Iterable[tuple], workers: int = 1,
                max_in_flight: int = DEFAULT_MAX_IN_FLIGHT) -> Iterator:
    """
    Yield task(*args) for every args tuple of ``calls``, in order. A configured broker takes precedence; otherwise
    ``workers`` > 1 runs a local process pool and 1 runs everything in this process.
    """
    if workers < 1:
        raise ParameterError(f'workers must be at least 1, got {workers}')
    if not task.app.conf.task_always_eager:
        logger.debug(f'Dispatching {task.name} through the broker, {max_in_flight} in flight')
        return _dispatch_broker(task, calls, max_in_flight)
    if workers > 1:
        logger.debug(f'Dispatching {task.name} over {workers} worker processes')
        return _dispatch_processes(task, calls, workers)
    return _dispatch_inline(task, calls)
