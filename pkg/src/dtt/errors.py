class InputError(ValueError):
    """Inputs are inconsistent or malformed (CLI exit code 3)."""

    def __init__(self, message, *, file=None, line=None, field=None):
        self.file = file
        self.line = line
        self.field = field
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class DegenerateEvidenceError(ArithmeticError):
    """The HMM assigns zero probability to the observed data (CLI exit code 4).

    Happens with ``epsilon == 0`` when an offspring allele matches neither
    parental strand along every ancestry path.
    """

    def __init__(self, message, rows=None):
        self.rows = rows
        super().__init__(message)
