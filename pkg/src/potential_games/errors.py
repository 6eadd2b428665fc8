"""Exception hierarchy shared by every module."""


class PotentialGamesError(Exception):
    """Base class for all package errors."""


class ArgumentError(PotentialGamesError, ValueError):
    """A parameter is outside its allowed range."""


class DomainError(PotentialGamesError, ValueError):
    """A function was evaluated outside its domain (time range, kink, sign)."""


class DegeneratePotentialError(PotentialGamesError, ArithmeticError):
    """A normalizer (Z, Z^H) vanished, so weights are undefined."""


class PreconditionError(PotentialGamesError):
    """A final potential failed a strict-positivity gate."""


class ResourceError(PotentialGamesError):
    """A requested lattice or state would exceed the size guards."""


class GameRuleViolation(PotentialGamesError):
    """An adversary move broke a rule of the game.

    ``step`` is the 0-based iteration index at which the violation happened.
    """

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
