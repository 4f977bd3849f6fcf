class RfssError(Exception):
    """Base class for every error raised by rfss"""
    pass


class ParameterError(RfssError, ValueError):
    """A parameter, filter spec or signal shape is outside its documented range"""
    pass


class MetricUndefinedError(RfssError, ArithmeticError):
    """A metric was requested for inputs on which it is not defined (e.g. an all-zero reference)"""
    pass


class _IndexedError(RfssError):
    # When instantiating, pass the message positionally and the sample index as a keyword.
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index

    def __str__(self):
        mssg = self.args[0] if self.args else ''
        if self.index is not None:
            mssg = f'{mssg} (sample index {self.index})'
        return mssg


class CorpusWriteError(_IndexedError):
    """Writing a corpus failed; index is the first sample that could not be written"""
    pass


class CorpusReadError(_IndexedError):
    """A corpus is missing, or a row is out of range or corrupt"""
    pass


class EstimateAlignmentError(RfssError):
    """Externally produced estimates do not line up with the corpus they are scored against"""
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index

    def __str__(self):
        return f'{self.args[0]}; first mismatched sample index is {self.index}'


class ArgumentConversionException(RfssError, ValueError):
    """A converter rejected an argument; the message starts with the argument name"""
    pass


class ConverterRegistrationException(RfssError):
    """A converter was registered incorrectly"""
    pass


class MissingConverterDependencyError(ConverterRegistrationException):
    """A converter depends on a converter that was never registered"""
    pass


class CircularDependencyException(ConverterRegistrationException):
    """Converters depend on each other in a cycle"""
    pass


class NameDuplicationException(ConverterRegistrationException):
    """Two converters in one scope share a name"""
    pass
