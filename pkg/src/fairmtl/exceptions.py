"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(ValueError):
    """A caller violated an API precondition (e.g. non-scalar backward root)."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown or out of range."""


class SchemaError(ValueError):
    """A dataset schema does not match the CSV it is applied to."""


class RowParseError(ValueError):
    """A CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UndefinedMetricError(ValueError):
    """A metric denominator is degenerate (e.g. near-zero STL baseline)."""


class TrainingDiverged(RuntimeError):
    """A loss term became NaN/Inf during training; names the offending term."""
