"""Exception hierarchy.

Hypothesis failures (a theorem's preconditions do not hold) are kept apart from
construction failures (a search or certification step gave up), because the CLI
maps them to different exit codes.
"""

from __future__ import annotations


class SublevelError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SublevelError, ValueError):
    """Non-finite entries, wrong dimensionality, or malformed arguments."""


class InvalidParamsError(InvalidInputError):
    """Parameter shapes do not match the network specification."""


class InvalidTargetError(InvalidInputError):
    """Targets are incompatible with the chosen loss."""


class InvalidEpsilonError(InvalidInputError):
    """Requested loss level is not above the loss infimum."""


class UnsupportedShapeError(InvalidInputError):
    """The operation is undefined for this matrix shape."""


class HypothesisError(SublevelError):
    """A theorem hypothesis failed; ``clause`` names the first failing clause."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        self.detail = detail
        msg = f"hypothesis failed: {clause}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class UnsupportedActivationError(HypothesisError):
    """The activation lacks an assumption the operation relies on."""

    def __init__(self, clause: str = "invertible activation", detail: str = ""):
        super().__init__(clause, detail)


class DataRankError(HypothesisError):
    """The (augmented) data matrix does not have rank N."""


class WidthError(HypothesisError):
    """Layer widths violate the required ordering or lower bound."""


class ConstructionError(SublevelError):
    """A construction step could not complete."""


class RankDeficiencyError(ConstructionError):
    """A chosen column basis does not span the column space."""


class PathNotFoundError(ConstructionError):
    """No certified full-rank detour was found within the retry budget."""

    def __init__(self, message: str, best_floor: float):
        self.best_floor = best_floor
        super().__init__(f"{message} (best min singular value {best_floor:.3e})")


class SearchFailureError(ConstructionError):
    """Bias search ran out of budget before reaching the target rank."""

    def __init__(self, message: str, achieved_rank: int, target_rank: int):
        self.achieved_rank = achieved_rank
        self.target_rank = target_rank
        super().__init__(f"{message} (achieved rank {achieved_rank} of {target_rank})")


class DegeneracyError(ConstructionError):
    """Generic-position nudges failed to separate coincident rows."""


class NothingToRewireError(ConstructionError):
    """The feature matrix already has full column rank."""


class DiscontinuityError(SublevelError):
    """Two paths do not meet; ``gap`` is the max-norm distance between them."""

    def __init__(self, gap: float):
        self.gap = gap
        super().__init__(f"paths do not join: max-norm gap {gap:.3e}")


class TrainingError(SublevelError):
    """Gradient descent did not reach the requested training loss."""

    def __init__(self, message: str, final_loss: float):
        self.final_loss = final_loss
        super().__init__(f"{message} (final loss {final_loss:.3e})")
