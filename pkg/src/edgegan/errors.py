"""Exception types raised across the package."""


class EdgeGANError(Exception):
    pass


class ConfigError(EdgeGANError):
    """Bad configuration value, unknown key or missing external asset."""


class DataError(EdgeGANError):
    """Unreadable or inconsistent input data."""


class CheckpointError(EdgeGANError):
    """Checkpoint file is corrupt, truncated or fails its integrity check."""


class NonFiniteLossError(EdgeGANError):
    """A loss term became NaN or infinite during training.

    ``terms`` maps every loss name of the offending step to its value so the
    caller can see which term blew up.
    """

    def __init__(self, phase, terms):
        self.phase = phase
        self.terms = dict(terms)
        bad = sorted(k for k, v in self.terms.items() if not _finite(v))
        dump = ", ".join(f"{k}={v!r}" for k, v in sorted(self.terms.items()))
        super().__init__(f"non-finite loss in {phase} phase (bad: {bad}); terms: {dump}")


def _finite(value):
    return value == value and value not in (float("inf"), float("-inf"))
