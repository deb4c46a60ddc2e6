"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class InvalidBodyError(ContractViolation):
    """A body declaration violates its own invariants."""


class InvalidTruncationError(ContractViolation):
    """A truncation radius would destroy the declared inscribed ball."""


class NoAnalyticOracleError(ValueError):
    """No analytic reference law exists for the requested target/body pair."""
