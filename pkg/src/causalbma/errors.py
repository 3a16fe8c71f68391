"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3 and contract violations with 4.
"""


class CausalBMAError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(CausalBMAError, ValueError):
    """A run configuration, schema, prior file or hyperparameter is invalid."""


class DataError(CausalBMAError, ValueError):
    """Input data cannot be loaded or is unusable for the requested operation."""


class InvalidInputError(DataError):
    """A function received a malformed argument (wrong shape, range, type)."""


class DegenerateColumnError(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance")


class ContractViolation(CausalBMAError, RuntimeError):
    """A precondition of an operation was not met by the caller."""


class EmptyPosteriorError(ContractViolation):
    pass


class BudgetExceeded(ContractViolation):
    def __init__(self, terms, budget):
        self.terms = terms
        self.budget = budget
        super().__init__(f"summation needs {terms} terms, budget is {budget}")
