"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or lost accuracy.

    ``diagnostics`` carries whatever state is useful for post-mortem
    (last iterate, residuals, grid sizes).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class ConfigError(ValueError):
    """Invalid or incomplete run/portfolio configuration."""
