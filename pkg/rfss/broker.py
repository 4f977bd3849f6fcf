import time

from celery.utils.log import get_task_logger

logger = get_task_logger(__name__)

# matched by name, each broker transport raises its own classes
RETRIABLE_EXCEPTION_NAMES = frozenset({'TimeoutError', 'ConnectionError', 'OperationalError'})
MAX_RETRY_DELAY_FACTOR = 10
RETRY_BACKOFF = 1.1


def handle_broker_timeout(callable_func, args=(), kwargs=None, timeout=15*60, retry_delay=1, reraise_on_timeout=True):
    """
    Call ``callable_func`` until it stops failing with a broker timeout or connection error, backing off by 10%
    per attempt up to ten times the initial delay. Other exceptions propagate at once. When ``timeout`` seconds
    have passed the last error is re-raised, or None is returned if ``reraise_on_timeout`` is False.
    """
    if kwargs is None:
        kwargs = {}
    maximum_retry_delay = retry_delay * MAX_RETRY_DELAY_FACTOR
    timeout_time = time.monotonic() + timeout if timeout else None
    name = getattr(callable_func, '__qualname__', repr(callable_func))
    tries = 0

    while True:
        tries += 1
        call_start = time.monotonic()
        try:
            return_value = callable_func(*args, **kwargs)
        except Exception as e:
            if type(e).__name__ not in RETRIABLE_EXCEPTION_NAMES:
                raise

            now = time.monotonic()
            last_call_ms = (now - call_start) * 1000
            if timeout_time is not None and now >= timeout_time:
                logger.error(f'{name}: broker still unreachable after {tries} tries and {timeout}s, giving up '
                             f'(last call took {last_call_ms:.2f}ms)')
                if reraise_on_timeout:
                    raise
                return None

            logger.warning(f'{name}: broker not reachable, retrying in {retry_delay:.2f}s '
                           f'(last call took {last_call_ms:.2f}ms)')
            time.sleep(retry_delay)
            retry_delay = min(retry_delay * RETRY_BACKOFF, maximum_retry_delay)
        else:
            if tries > 1:
                logger.info(f'{name}: broker reachable again after {tries} tries')
            return return_value
