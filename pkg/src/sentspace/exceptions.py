"""Exception types raised across the toolkit."""


class SentspaceError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SentspaceError, ValueError):
    pass


class ParameterError(SentspaceError, ValueError):
    pass


class EmptyInputError(SentspaceError, ValueError):
    pass


class DegenerateColumnError(SentspaceError, ArithmeticError):
    """A column was (numerically) a combination of the preceding columns."""

    def __init__(self, column, residual_norm):
        super().__init__(
            f"column {column} is degenerate (residual norm {residual_norm:.3e})"
        )
        self.column = column
        self.residual_norm = residual_norm


class ValidationError(SentspaceError, ValueError):
    def __init__(self, message, sentence_id=None, line=None):
        super().__init__(message)
        self.sentence_id = sentence_id
        self.line = line


class FormatError(SentspaceError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyEmbeddingError(SentspaceError, ValueError):
    def __init__(self, sentence_id=None):
        super().__init__(f"no resolvable tokens for sentence {sentence_id!r}")
        self.sentence_id = sentence_id


class JoinError(SentspaceError, KeyError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(map(str, self.missing[:10]))
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"ids missing from corpus: {shown}{more}")

    def __str__(self):
        return self.args[0]


class DegenerateLabelsError(SentspaceError, ValueError):
    pass
