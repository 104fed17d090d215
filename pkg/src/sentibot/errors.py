"""Exception hierarchy shared by all sentibot components.

Each class carries an ``exit_code`` so the CLI can map error families to
distinct process exit statuses (data problems, training problems, bad
requests, broken checkpoints).
"""


class SentibotError(Exception):
    exit_code = 1


# --- data / corpus problems (exit 4) ---------------------------------------

class EmptySentence(SentibotError):
    exit_code = 4


class EmptyCorpus(SentibotError):
    exit_code = 4


class ParseError(SentibotError):
    exit_code = 4

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidSplit(SentibotError):
    exit_code = 4


class DegenerateLabels(SentibotError):
    exit_code = 4


class DegenerateCorpus(SentibotError):
    exit_code = 4


class EmptyAfterFilter(SentibotError):
    exit_code = 4


class InsufficientData(SentibotError):
    exit_code = 4


class EncodingError(SentibotError):
    exit_code = 4


# --- training / optimization problems (exit 5) ------------------------------

class InsufficientTraining(SentibotError):
    exit_code = 5


class TrainingDiverged(SentibotError):
    exit_code = 5


class OptimizationDiverged(SentibotError):
    exit_code = 5


class MissingDependency(SentibotError):
    exit_code = 5


# --- bad requests / arguments (exit 6) --------------------------------------

class InvalidScore(SentibotError):
    exit_code = 6


class InvalidWeights(SentibotError):
    exit_code = 6


class DegenerateQuery(SentibotError):
    exit_code = 6


class UnknownModel(SentibotError):
    exit_code = 6


# --- persistence problems (exit 3) ------------------------------------------

class CheckpointError(SentibotError):
    exit_code = 3


# --- operational conflicts (exit 7) ------------------------------------------

class WorkdirBusy(SentibotError):
    exit_code = 7
