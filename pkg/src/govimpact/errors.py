"""Exception hierarchy.

Input problems (bad files, schema violations) derive from ``InputError`` and
map to CLI exit code 2; analysis failures derive from ``AnalysisError`` and map
to exit code 3.
"""


class GovImpactError(Exception):
    pass


class InputError(GovImpactError):
    pass


class AnalysisError(GovImpactError):
    pass


class SchemaError(InputError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class MissingInput(InputError):
    def __init__(self, path, what="input file"):
        self.path = str(path)
        super().__init__(f"missing {what}: {self.path}")


class DecodeError(InputError):
    pass


class DegenerateReserve(AnalysisError):
    pass


class WindowTooLong(AnalysisError):
    pass


class EmptySeries(AnalysisError):
    pass


class DegenerateSeries(AnalysisError):
    pass


class CannotNormalize(AnalysisError):
    pass


class InsufficientOverlap(AnalysisError):
    pass


class NoCounterfactuals(AnalysisError):
    pass


class CollinearityError(AnalysisError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("rank-deficient design; collinear columns: " + ", ".join(self.columns))


class TooFewClusters(AnalysisError):
    pass


class EventAborted(AnalysisError):
    pass


class MissingSupply(AnalysisError):
    pass


class SpecError(InputError):
    pass


class MissingRate(AnalysisError):
    pass
