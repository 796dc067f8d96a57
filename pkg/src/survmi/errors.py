"""Exception hierarchy.

DataError covers bad inputs and configuration (CLI exit code 1);
NumericalError covers fitting and resampling failures (exit code 2).
"""


class SurvmiError(Exception):
    pass


class DataError(SurvmiError):
    pass


class SchemaError(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class MissingWithNegativeScreen(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(
            f"row {row}: status is missing but the screener was negative; "
            "indicators can only be missing after a positive screen"
        )


class HasMissingStatus(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MTooSmall(DataError):
    pass


class ProbOutOfRange(DataError):
    pass


class CoverageMismatch(DataError):
    pass


class NumericalError(SurvmiError):
    pass


class SingularHessian(NumericalError):
    pass


class SingularInformation(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class DegenerateTrainingSet(NumericalError):
    pass


class ResampleDegenerate(NumericalError):
    pass


class AllReplicatesFailed(NumericalError):
    pass
