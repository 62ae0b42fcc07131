"""Exception types shared across the package."""


class LaxHopfError(Exception):
    """Base class for all package errors."""


class DomainError(LaxHopfError, ValueError):
    """An argument lies outside the domain of the function."""


class ConstraintViolation(LaxHopfError, ValueError):
    """A value condition breaks a growth, capacity or continuity constraint."""


class SequencingError(LaxHopfError, RuntimeError):
    """A stateful solver was stepped out of order."""


class ContractError(LaxHopfError, RuntimeError):
    """An operation was called in a mode that does not support it."""


class ValidationError(LaxHopfError, ValueError):
    """Malformed network, scenario or node specification.

    ``errors`` holds one human readable message per problem found.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class CFLViolation(ValidationError):
    """Time step too large for the spatial discretisation of a link."""


class ProbeRefused(LaxHopfError, ValueError):
    """Interior probing requested from a model that does not converge inside links."""
