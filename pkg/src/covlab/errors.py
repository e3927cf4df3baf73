"""Exception hierarchy shared across covlab."""


class CovlabError(Exception):
    """Base class for all covlab errors."""


class DisconnectedError(CovlabError):
    def __init__(self, components):
        self.components = [sorted(int(i) for i in c) for c in components]
        sizes = ", ".join(str(len(c)) for c in self.components)
        super().__init__(
            f"space is disconnected: {len(self.components)} components (sizes {sizes})"
        )


class MetricViolation(CovlabError):
    def __init__(self, message, residual):
        self.residual = float(residual)
        super().__init__(f"{message} (max residual {self.residual:.3e})")


class ResolutionError(CovlabError):
    """Sampling too coarse for the requested scale or feature."""

    def __init__(self, message, required):
        self.required = float(required)
        super().__init__(f"{message} (required: {self.required:.6g})")


class BudgetExceeded(CovlabError):
    def __init__(self, message, required):
        self.required = int(required)
        super().__init__(f"{message} (required budget {self.required})")


class ConfigError(CovlabError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvariantViolation(CovlabError):
    """A certified invariant failed; ``invariant`` names it."""

    def __init__(self, message, invariant):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}")
