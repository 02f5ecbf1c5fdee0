"""Exception hierarchy shared by every module of the lab."""


class KeldyshLabError(Exception):
    """Base class for all errors raised by keldysh_lab."""


class InvalidParameter(KeldyshLabError, ValueError):
    pass


class InvalidStart(KeldyshLabError, ValueError):
    """Characteristic requested from a point of the strict elliptic region."""


class StepFailure(KeldyshLabError, ArithmeticError):
    """A trace step produced a negative radicand; refine the step."""


class NoApex(KeldyshLabError, ValueError):
    pass


class InvalidDomain(KeldyshLabError, ValueError):
    pass


class InvalidPath(KeldyshLabError, ValueError):
    pass


class InvalidInput(KeldyshLabError, ValueError):
    pass


class UndefinedCoefficient(KeldyshLabError, ArithmeticError):
    pass
