"""Exception types shared across the package."""


class CdlabError(Exception):
    """Base class for structured, expected failures."""

    kind = "error"

    def record(self):
        """Dictionary form used by the command line error records."""
        return {"kind": self.kind, "message": str(self)}


class DomainError(CdlabError, ValueError):
    kind = "domain_error"


class UnboundedEntry(CdlabError):
    """A nonzero coefficient sits on a position that forces an unbounded block."""

    kind = "unbounded_entry"

    def __init__(self, i, j, value=None):
        self.i, self.j, self.value = int(i), int(j), value
        msg = f"block ({self.i},{self.j}) must vanish for a bounded operator"
        if value is not None:
            msg += f" but has coefficient {complex(value)!r}"
        super().__init__(msg)

    def record(self):
        return {**super().record(), "i": self.i, "j": self.j}


class ValencyTooSmall(CdlabError):
    kind = "valency_too_small"

    def __init__(self, valency, required=2.0):
        self.valency, self.required = float(valency), float(required)
        super().__init__(f"valency {self.valency} is below {self.required}")

    def record(self):
        return {**super().record(), "valency": self.valency}


class NumericalError(CdlabError, ArithmeticError):
    kind = "numerical_error"


class ConsistencyError(CdlabError):
    """Two independent evaluation routes disagree."""

    kind = "consistency_error"


class ConfigError(CdlabError):
    kind = "config_error"

    def __init__(self, message, path=None):
        self.path = path
        where = f" at {path}" if path else ""
        super().__init__(f"invalid config{where}: {message}")

    def record(self):
        return {**super().record(), "path": self.path}
