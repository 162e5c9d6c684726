"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter set is invalid (bad code params, unsupported design, bad config file)."""


class ContractError(ValueError):
    """An operation was called with inputs that violate its preconditions."""
