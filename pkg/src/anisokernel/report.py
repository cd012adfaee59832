"""Verdict and report containers shared across modules."""

from dataclasses import dataclass, field


@dataclass
class PropertyVerdict:
    """Outcome of one executable property check."""

    name: str
    passed: bool
    measured: float
    threshold: float
    context: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": self.measured,
            "threshold": self.threshold,
            "context": self.context,
        }


@dataclass
class SolutionSummary:
    """Norms and residual data for one computed field."""

    tag: str
    energy: float
    grad_norm: float
    norm_x: float
    norm_l2: float
    norm_linf: float
    norm_c0delta: float
    hopf_quotient_min: float = None

    def to_json(self):
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class SolveReport:
    """Aggregate output of a multi-solution solve."""

    solutions: list
    verdicts: list
    context: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "solutions": [s.to_json() for s in self.solutions],
            "verdicts": [v.to_json() for v in self.verdicts],
            "context": self.context,
        }

    @property
    def all_passed(self):
        return all(v.passed for v in self.verdicts)
