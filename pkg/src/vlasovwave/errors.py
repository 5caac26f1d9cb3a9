"""Exception types shared across modules."""


class VlasovWaveError(Exception):
    pass


class SupportExceedsDomain(VlasovWaveError):
    """A kernel footprint or requested point leaves the computational box."""


class CFLViolation(VlasovWaveError):
    pass


class HorizonError(VlasovWaveError):
    """Requested time lies beyond the stored history or the box horizon."""


class ConfigError(VlasovWaveError):
    """Invalid run configuration; carries an optional source line."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvariantViolation(VlasovWaveError):
    pass
