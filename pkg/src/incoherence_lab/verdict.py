from __future__ import annotations

import json
from dataclasses import dataclass, field

from .covariance import CoefVector
from .incoherence import _jsonable

METHODS = ("closed_form", "lambda_sweep", "brute_force", "constructed", "search")


@dataclass(frozen=True)
class RecoveryVerdict:
    """Outcome of a uniform-recovery check.

    A failing verdict carries a witness ``beta`` (a member of the class under
    test) whose MR margin is non-positive, and the offending ``(j, k)`` pair.
    For passing verdicts ``margin`` is the smallest margin that was seen.
    """

    passed: bool
    witness_beta: CoefVector | None = None
    violated_pair: tuple | None = None
    margin: float = 0.0
    method: str = "closed_form"
    exact: bool = True
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        beta = None if self.witness_beta is None else [float(x) for x in self.witness_beta.beta]
        return _jsonable({
            "pass": self.passed,
            "method": self.method,
            "exact": self.exact,
            "margin": self.margin,
            "violated_pair": None if self.violated_pair is None else list(self.violated_pair),
            "witness_beta": beta,
            "detail": self.detail,
        })

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
