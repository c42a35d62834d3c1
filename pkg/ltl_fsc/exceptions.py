"""Errors raised by the synthesis toolkit."""
from __future__ import annotations


class SynthesisError(Exception):
    """Base class for all toolkit errors"""


class InvalidModel(SynthesisError):
    """A model violates its stochasticity or labeling invariants"""


class ModelParseError(SynthesisError):
    """A text file does not follow its grammar"""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ZeroLikelihood(SynthesisError):
    """An observation has zero probability under the current belief"""


class UnknownState(SynthesisError):
    """A state is not part of the automaton or model"""


class UnknownLetter(SynthesisError):
    """A letter is not a subset of the declared atomic propositions"""


class UnknownName(SynthesisError):
    """A builtin name is not recognized"""


class AlphabetMismatch(SynthesisError):
    """Model and automaton declare different atomic propositions"""


class EmptyRepeat(SynthesisError):
    """The selected Rabin pair has no Repeat state in the product"""


class EmptySteadyPartition(SynthesisError):
    """The controller has no steady-state I-state"""


class SingularSystem(SynthesisError):
    """A linear system that should be regular could not be solved"""


class StructureViolation(SynthesisError):
    """A steady I-state moves to a transient I-state"""


class ResidualTooLarge(SynthesisError):
    """A Poisson equation solution fails its own verification"""


class IterationLimit(SynthesisError):
    """An iterative method exceeded its iteration budget"""


class TimeLimitReached(IterationLimit):
    """A solver or search ran out of wall-clock time"""


class NumericalBreakdown(SynthesisError):
    """A solver produced a numerically unusable result"""


class UnboundedBilinearVariable(SynthesisError):
    """A variable in a bilinear product has an infinite bound"""


class LpFailure(SynthesisError):
    """A linear program did not reach an optimal solution"""


class Infeasible(SynthesisError):
    """No feasible controller was found within the size budget"""

    def __init__(self, message: str, attempted: list[tuple[int, int]]) -> None:
        super().__init__(message)
        self.attempted = attempted


class InvariantBreach(SynthesisError):
    """An accepted synthesis step broke a safety invariant"""


class InvalidSpec(SynthesisError):
    """A grid world specification is inconsistent"""


class InvalidConfig(SynthesisError):
    """A configuration value is missing or out of range"""


class SynthesisFailed(SynthesisError):
    """Synthesis failed for every Rabin pair"""
