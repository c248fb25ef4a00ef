"""Exception hierarchy shared by every codedlab module."""


class CodedLabError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(CodedLabError, ValueError):
    pass


class InvalidInputError(CodedLabError, ValueError):
    pass


class SingularSystemError(CodedLabError):
    pass


class DegenerateDistributionError(CodedLabError, ValueError):
    pass


class RankDeficiencyError(CodedLabError):
    pass


class UnreachableTargetError(CodedLabError, ValueError):
    pass


class EvaluationPointError(CodedLabError):
    """An evaluation point is a root of a code polynomial's constant term."""


class DegreeOverflowError(InvalidParameterError):
    pass


class InvalidGraphError(InvalidInputError):
    pass


class InvalidDesignError(InvalidInputError):
    pass


class InfeasibleParametersError(InvalidParameterError):
    pass


class InvalidExponentsError(InvalidParameterError):
    pass


class InsufficientResponsesError(CodedLabError):
    pass


class BudgetExceededError(CodedLabError):
    pass


class UnrecoverableRoundError(CodedLabError):
    pass
