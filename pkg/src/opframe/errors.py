"""Exception hierarchy shared by all modules."""


class OpframeError(Exception):
    """Base class for every error raised by the package."""


class SchemaError(OpframeError, ValueError):
    """Invalid measurement setup (names, outcome counts, impossible sets)."""


class MalformedRun(OpframeError, ValueError):
    """A single experimental run that contradicts the outcome logic."""


class UnmeasuredContext(OpframeError, ZeroDivisionError):
    """A conditioning measurement context has zero frequency."""

    def __init__(self, measurements):
        self.measurements = tuple(measurements)
        super().__init__("measurement context never performed: {%s}" % ", ".join(self.measurements))


class NegativeMass(OpframeError, ValueError):
    """Reconstructed atom weights are negative beyond tolerance."""

    def __init__(self, atom, weight):
        self.atom = atom
        self.weight = weight
        super().__init__(f"atom {atom} has negative weight {weight:.3e}")


class CapExceeded(OpframeError, ValueError):
    """A size guard (outcome count, vertex count, dimension) was exceeded."""


class DimensionMismatch(OpframeError, ValueError):
    pass


class FormatError(OpframeError, ValueError):
    """Malformed input file; message names the file, line and rule."""

    def __init__(self, path, line, rule):
        self.path = str(path)
        self.line = line
        self.rule = rule
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {rule}")


class OutsidePolytope(OpframeError, ValueError):
    """A point-wise test was asked about a vector that violates the polytope rows."""


class DomainError(OpframeError, ValueError):
    """Input outside the declared domain of a flow or map."""
