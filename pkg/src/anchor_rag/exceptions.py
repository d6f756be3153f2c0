"""Exception hierarchy shared across the pipeline."""


class AnchorRAGError(Exception):
    """Base class for all pipeline errors."""


class InvalidParameterError(AnchorRAGError, ValueError):
    pass


class EmptyCorpusError(AnchorRAGError, ValueError):
    pass


class DuplicateIdError(AnchorRAGError, ValueError):
    pass


class DimensionMismatchError(AnchorRAGError, ValueError):
    pass


class EmptyDistributionError(AnchorRAGError, ValueError):
    pass


class NoCandidatesError(AnchorRAGError):
    """Every token of the question was removed by the stopword filter."""


class EmptyIndexError(AnchorRAGError):
    pass


class UnknownTemplateError(AnchorRAGError, KeyError):
    pass


class PromptBudgetError(AnchorRAGError):
    """The prompt does not fit the token budget even with every passage dropped."""


class EmptyGenerationError(AnchorRAGError):
    pass


class IndexBuildError(AnchorRAGError):
    def __init__(self, chunk_id: str, cause: BaseException):
        super().__init__(f"embedding failed for chunk {chunk_id!r}: {cause}")
        self.chunk_id = chunk_id


class DataError(AnchorRAGError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line
