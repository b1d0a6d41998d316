"""Check records shared by the audits, the continuation harness and the CLI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass


def _clean(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class Check:
    """One verified statement.

    ``margin`` is ``rhs - lhs`` for inequalities and ``-residual`` for
    identities; the check passes when ``margin >= -tolerance``.
    """

    name: str
    tag: str
    lhs: float | None = None
    rhs: float | None = None
    residual: float | None = None
    tolerance: float = 0.0
    informational: bool = False
    note: str = ""

    def __post_init__(self):
        for k in ("lhs", "rhs", "residual"):
            v = getattr(self, k)
            if v is not None:
                setattr(self, k, float(v))
        self.tolerance = float(self.tolerance)

    @property
    def margin(self) -> float | None:
        if self.lhs is not None and self.rhs is not None:
            return float(self.rhs) - float(self.lhs)
        if self.residual is not None:
            return -float(self.residual)
        return None

    @property
    def passed(self) -> bool:
        m = self.margin
        return bool(m is not None and not math.isnan(m) and m >= -self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lhs", "rhs", "residual", "tolerance"):
            d[k] = _clean(d[k])
        d["margin"] = _clean(self.margin)
        d["pass"] = self.passed
        return d


def inequality(name, tag, lhs, rhs, tolerance=0.0, **kw) -> Check:
    return Check(name, tag, lhs=float(lhs), rhs=float(rhs), tolerance=tolerance, **kw)


def identity(name, tag, residual, tolerance, **kw) -> Check:
    return Check(name, tag, residual=float(residual), tolerance=tolerance, **kw)


def all_passed(checks) -> bool:
    return all(c.passed for c in checks if not c.informational)
