"""Exception types shared across the package."""


class SPTError(Exception):
    """Base class for all package errors."""


class DuplicateSchema(SPTError):
    pass


class InvalidTokenId(SPTError):
    pass


class InvalidRoleName(SPTError):
    pass


class SeqTooLong(SPTError):
    pass


class NumericalError(SPTError):
    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class ShapeError(SPTError):
    pass


class PhaseOrderError(SPTError):
    pass


class EmptyDataset(SPTError):
    pass


class LabelMismatch(SPTError):
    pass


class TruncatedGeneration(SPTError):
    trace = None  # partial DecodeTrace, when raised from Decoder.extract


class GrammarError(SPTError):
    pass


class SpecError(SPTError):
    pass


class ParseError(SPTError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class EmptyCorpus(SPTError):
    pass


class InvalidDoc(SPTError):
    pass


class CheckpointError(SPTError):
    pass
