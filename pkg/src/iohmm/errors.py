"""Exception types raised across the package."""


class IOHMMError(Exception):
    pass


class TraceError(IOHMMError):
    def __init__(self, line_no, msg):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}")


class MalformedLine(TraceError):
    pass


class InvalidOp(TraceError):
    pass


class NonPositiveSize(TraceError):
    pass


class EmptyTrace(IOHMMError):
    pass


class InvalidKeepSet(IOHMMError):
    pass


class TooFewDistinctPoints(IOHMMError):
    pass


class ImpossibleObservation(IOHMMError):
    """The observation sequence has probability zero under the model."""


class MissingState(IOHMMError):
    def __init__(self, state):
        self.state = state
        super().__init__(f"state {state} never appears in the decoded path")


class InvalidState(IOHMMError):
    pass


class ZeroVariance(IOHMMError):
    pass


class TooFewReplicates(IOHMMError):
    pass
