"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An argument lies outside the mathematical or physical domain of an operation."""


class UnknownComponentError(KeyError):
    """A component id was not found in an optical chain."""


class RegistryError(Exception):
    pass


class ConflictError(RegistryError):
    """Duplicate record id, or seeding a non-empty store without overwrite."""


class RecordNotFoundError(RegistryError, KeyError):
    pass
