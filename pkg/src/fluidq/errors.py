class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NumericalAbort(RuntimeError):
    """The solver produced a nonfinite or divergent value."""
