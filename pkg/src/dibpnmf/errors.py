"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the support or parameter space of a routine."""


class ContractError(ValueError):
    """Inputs violate a shape or size precondition."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class SamplerAbort(RuntimeError):
    """The Gibbs sampler produced a non-finite quantity."""

    def __init__(self, iteration, family, detail=""):
        msg = f"non-finite value at iteration {iteration} after '{family}' update"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.iteration = iteration
        self.family = family


class ParseError(ValueError):
    """Malformed input file. Carries the offending line (1-based) when known."""

    def __init__(self, message, path=None, line=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.column = column


class SnapshotError(ValueError):
    """A snapshot file is corrupt or was written by an unknown format version."""
