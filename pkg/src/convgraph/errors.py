"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from ``ConvGraphError`` so
callers (the CLI in particular) can tell data problems apart from bugs.
"""


class ConvGraphError(Exception):
    """Base class for all toolkit errors."""


class DataError(ConvGraphError):
    """Input data violates a schema or invariant."""


class EmptyCorpus(DataError):
    pass


class AlternationViolation(DataError):
    def __init__(self, dialogue_id, turn_index, message=None):
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index
        super().__init__(
            message
            or f"dialogue {dialogue_id!r}: speaker order broken at turn {turn_index}"
        )


class UnknownLabel(DataError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"label not in vocabulary: {label!r}")


class VocabMismatch(DataError):
    pass


class ConfigMismatch(DataError):
    pass


class NodeNotFound(ConvGraphError, KeyError):
    def __init__(self, node):
        self.node = node
        super().__init__(node)

    def __str__(self):
        return f"node not in graph: {self.node!r}"


class NoAgentNodes(DataError):
    pass


class WidthMismatch(ConvGraphError, ValueError):
    pass


class ShapeMismatch(ConvGraphError, ValueError):
    pass


class EmptyReferenceSet(ConvGraphError, ValueError):
    pass


class EmptyInput(ConvGraphError, ValueError):
    pass


class InsufficientSamples(ConvGraphError, ValueError):
    pass


class DivergenceDetected(ConvGraphError):
    def __init__(self, epoch, model=None):
        self.epoch = epoch
        self.model = model
        super().__init__(f"non-finite parameters after epoch {epoch}")
