class MacGgmError(Exception):
    """Base class for errors raised by this package."""


class ModelError(MacGgmError):
    pass


class IncoherenceError(ModelError):
    pass


class ChannelError(MacGgmError):
    pass


class RateRegionError(ChannelError):
    """The channel cannot carry one bit per sample for every machine."""


class UnconstrainedChannelError(ChannelError):
    """Noise-free channel: every rate is achievable."""


class SolverError(MacGgmError):
    pass


class ConfigError(MacGgmError):
    pass
