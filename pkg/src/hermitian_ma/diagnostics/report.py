from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


@dataclass
class InequalityReport:
    """Outcome of one inequality check.

    worst_margin is lhs - rhs oriented so that a valid inequality gives a
    nonnegative number; ``fitted`` holds empirically fitted constants.
    """

    name: str
    samples: int
    worst_margin: float
    passed: bool
    fitted: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(x, "item"):
        return _jsonable(x.item())
    return x
