class ConfigError(ValueError):
    """Invalid parameters; the message names the offending field."""


class SimulationInvariantError(RuntimeError):
    """A run reached a state the model forbids, e.g. a negative battery."""
