"""Exception hierarchy.

Every error carries the process exit code the CLI should use for it:
2 for configuration problems, 3 for missing artifacts, 4 for validation
failures on data or models.
"""


class CtrlRetrieveError(Exception):
    exit_code = 4


class ConfigInvalid(CtrlRetrieveError):
    exit_code = 2


class UnknownSubcommand(ConfigInvalid):
    pass


class ArtifactMissing(CtrlRetrieveError):
    exit_code = 3


class CheckpointMissing(ArtifactMissing):
    pass


class ValidationError(CtrlRetrieveError):
    exit_code = 4


# data ingestion


class MissingField(ValidationError):
    def __init__(self, line: int, field: str):
        super().__init__(f"line {line}: missing field {field!r}")
        self.line = line
        self.field = field


class MalformedLine(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class EmptyText(ValidationError):
    def __init__(self, record_id: str, field: str = "text"):
        super().__init__(f"record {record_id!r}: {field} is empty")
        self.record_id = record_id


class AnswerNotInContext(ValidationError):
    def __init__(self, record_id: str):
        super().__init__(f"record {record_id!r}: answer_text not found in context")
        self.record_id = record_id


class AnswerSentenceTooLong(ValidationError):
    def __init__(self, record_id: str, n_tokens: int, max_tokens: int):
        super().__init__(
            f"record {record_id!r}: answer sentence has {n_tokens} tokens > {max_tokens}"
        )
        self.record_id = record_id


class SentenceTooLong(ValidationError):
    def __init__(self, doc_id: str, index: int, n_tokens: int, max_tokens: int):
        super().__init__(
            f"doc {doc_id!r}: sentence {index} has {n_tokens} tokens > {max_tokens}"
        )
        self.doc_id = doc_id
        self.index = index


# vocabulary / tokens


class EmptyCorpus(ValidationError):
    pass


class DuplicateClass(ValidationError):
    def __init__(self, label: str):
        super().__init__(f"duplicate class label {label!r}")
        self.label = label


class UnknownClass(ValidationError):
    def __init__(self, label: str):
        super().__init__(f"class {label!r} is not a registered control token")
        self.label = label


class VocabMismatch(ValidationError):
    pass


# numerics


class EmptySequence(ValidationError):
    def __init__(self, index: int | None = None):
        msg = "empty token sequence" if index is None else f"empty token sequence at row {index}"
        super().__init__(msg)
        self.index = index


class DimensionMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class TooFewPairs(ValidationError):
    pass


# classifier / retrieval / evaluation


class SingleClassCorpus(ValidationError):
    pass


class UnregisteredLabel(ValidationError):
    def __init__(self, label: str):
        super().__init__(f"label {label!r} is not a registered class")
        self.label = label


class EmptyQuestion(ValidationError):
    pass


class EmptyChunks(ValidationError):
    pass


class MissingQuery(ValidationError):
    def __init__(self, query_id: str):
        super().__init__(f"no retrieval result for query {query_id!r}")
        self.query_id = query_id
