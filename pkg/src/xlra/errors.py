class ConfigurationError(ValueError):
    """Invalid scenario or protocol parameters."""


class ContractError(ValueError):
    """An argument violates an operation's precondition."""
