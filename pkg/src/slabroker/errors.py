"""Exception hierarchy shared by every layer of the broker."""

from __future__ import annotations


class BrokerError(Exception):
    """Base class for all errors raised by slabroker."""


# -- fact algebra -----------------------------------------------------------

class UnknownUnit(BrokerError):
    def __init__(self, unit, line=None, col=None):
        self.unit = unit
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}unknown unit {unit!r}")


class DimensionMismatch(BrokerError):
    pass


class Contradiction(BrokerError):
    """Two assertions about the same variable cannot both hold."""

    def __init__(self, var, message, sources=()):
        self.var = var
        self.sources = tuple(sources)
        super().__init__(f"contradiction on {var}: {message}")


# -- rule DSL ---------------------------------------------------------------

class DslError(BrokerError):
    """A positioned diagnostic from the rule/SLA parser."""

    def __init__(self, message, line=0, col=0):
        self.line = line
        self.col = col
        self.message = message
        super().__init__(f"{line}:{col}: {message}")


class DslSyntaxError(DslError):
    def __init__(self, line, col, expected, found=None):
        self.expected = expected
        self.found = found
        msg = f"expected {expected}"
        if found is not None:
            msg += f", found {found}"
        super().__init__(msg, line, col)


class UnboundVariable(DslError):
    def __init__(self, rule_id, var, line=0, col=0):
        self.rule_id = rule_id
        self.var = var
        super().__init__(f"rule {rule_id}: pattern variable {var} is not bound in the antecedent", line, col)


class DuplicateId(DslError):
    def __init__(self, ident, line=0, col=0):
        self.ident = ident
        super().__init__(f"duplicate id {ident!r}", line, col)


# -- inference --------------------------------------------------------------

class StepLimitExceeded(BrokerError):
    pass


# -- registry ---------------------------------------------------------------

class SchemaError(BrokerError):
    def __init__(self, file, line, message):
        self.file = str(file)
        self.line = line
        super().__init__(f"{file}:{line}: {message}")


class DuplicateEntry(BrokerError):
    pass


class UnitMismatch(BrokerError):
    pass


class UnknownMetric(BrokerError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NotMapped(BrokerError, LookupError):
    pass


class UnknownRegion(BrokerError, LookupError):
    def __init__(self, provider, region):
        self.provider = provider
        self.region = region
        super().__init__(f"unknown region {region!r} for provider {provider!r}")


# -- mapping ----------------------------------------------------------------

class MappingError(BrokerError):
    """Evaluation of one mapping over one bucket failed; the sample is skipped."""


class MissingMetric(MappingError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"bucket has no sample for {name}")


class MissingConfig(MappingError):
    def __init__(self, param):
        self.param = param
        super().__init__(f"deployment config lacks parameter {param}")


class DivisionByZero(MappingError):
    pass


class InsufficientHistory(MappingError):
    """A counter delta needs a previous bucket that does not exist yet."""


class OutOfOrderSample(MappingError):
    pass


class NonFiniteValue(SchemaError):
    pass


class NegativeCost(SchemaError):
    pass
