"""
Argument converters. A scope (the run configuration, or a task's short name) owns a register of converter
functions; each one receives the whole argument dict and returns only the entries it validated or normalized.
Converters may name other converters that have to run before them.
"""
import time
from functools import wraps
from typing import Callable, NamedTuple

from celery.utils.log import get_task_logger

from rfss.exceptions import ArgumentConversionException, CircularDependencyException, \
    ConverterRegistrationException, MissingConverterDependencyError, NameDuplicationException

logger = get_task_logger(__name__)

__all__ = ['ConverterRegister', 'SingleArgDecorator', 'ArgumentConversionException', 'ConverterRegistrationException',
           'MissingConverterDependencyError', 'CircularDependencyException', 'NameDuplicationException']


class _Converter(NamedTuple):
    func: Callable
    dependencies: tuple


def _scope_key(scope: str) -> str:
    # task names arrive fully qualified
    return scope.rsplit('.', 1)[-1]


class ConverterRegister:
    _scopes = {}

    def __init__(self):
        self._converters = {}

    @classmethod
    def for_scope(cls, scope: str) -> 'ConverterRegister':
        return cls._scopes.setdefault(_scope_key(scope), ConverterRegister())

    @classmethod
    def register_for_scope(cls, scope: str, *args):
        """``register`` on the scope's register; bare use is a plain decorator."""
        register = cls.for_scope(scope)
        return register.register(*args) if args else register.register

    @classmethod
    def scope_convert(cls, scope: str, **kwargs) -> dict:
        register = cls._scopes.get(_scope_key(scope))
        return register.convert(**kwargs) if register else kwargs

    @classmethod
    def list_converters(cls, scope: str) -> list:
        register = cls._scopes.get(_scope_key(scope))
        return register.get_visit_order() if register else []

    def convert(self, **kwargs) -> dict:
        """Run every converter in dependency order over a copy of ``kwargs``."""
        values = dict(kwargs)
        for name in self.get_visit_order():
            start = time.monotonic()
            try:
                changed = self._converters[name].func(values)
            except Exception:
                logger.error(f'Converter {name} failed')
                raise
            logger.debug(f'Converter {name} took {time.monotonic() - start:.3f}s')
            if changed:
                values.update(changed)
        return values

    def get_visit_order(self) -> list:
        order, visiting = [], set()

        def visit(name):
            if name in order:
                return
            if name in visiting:
                raise CircularDependencyException(f'Converter dependencies form a cycle through {name}')
            visiting.add(name)
            for dependency in self._converters[name].dependencies:
                if dependency not in self._converters:
                    raise MissingConverterDependencyError(f'{dependency} was not found; {name} depends on it')
                visit(dependency)
            visiting.discard(name)
            order.append(name)

        for converter_name in self._converters:
            visit(converter_name)
        return order

    def register(self, *args):
        """
        Register a converter. Accepts the function itself (bare ``@register``) and/or the names of converters
        it depends on (``@register('to_backend')``).
        """
        if not args:
            raise ConverterRegistrationException('Registration requires a converter or dependency names')
        funcs = [a for a in args if callable(a)]
        others = [a for a in args if not callable(a) and not isinstance(a, str)]
        if others or len(funcs) > 1:
            raise ConverterRegistrationException(f'Cannot register {args!r}: pass one function and dependency names')
        dependencies = tuple(a for a in args if isinstance(a, str))

        def add(fn):
            if not callable(fn):
                raise ConverterRegistrationException(f'A converter must be callable, got {fn!r}')
            if fn.__name__ in self._converters:
                raise NameDuplicationException(f'A converter named {fn.__name__} is already registered')
            self._converters[fn.__name__] = _Converter(fn, dependencies)
            return fn

        return add(funcs[0]) if funcs else add


class SingleArgDecorator:
    """
    Turn a one-value function into a converter for the named arguments. Arguments that are absent or None are
    skipped; a failure is re-raised as ArgumentConversionException prefixed with the argument name.

    :Example:

    @register
    @SingleArgDecorator('workers')
    def positive(value):
        if int(value) < 1:
            raise ValueError('must be at least 1')
        return int(value)
    """

    def __init__(self, *names):
        if not names or not all(isinstance(n, str) for n in names):
            raise ConverterRegistrationException('SingleArgDecorator takes one or more argument names')
        self.names = list(names)

    def __call__(self, fn):
        @wraps(fn)
        def converter(values):
            converted = {}
            for name in self.names:
                value = values.get(name)
                if value is None:
                    continue
                try:
                    converted[name] = fn(value)
                except Exception as e:
                    logger.debug(f'{fn.__name__} rejected {name}={value!r}', exc_info=True)
                    raise ArgumentConversionException(f'{name}: {e}') from None
            return converted

        def append(*names):
            self.names.extend(names)

        converter.append = append
        converter.single_arg_decorator = self
        return converter
