"""Operation counters for complexity accounting.

Counts Euclidean distance evaluations and transcendental (exp/log) calls in
the per-observation metric paths. Setup-time constants (constellation priors,
decompositions) are not counted; the bounds are stated per observation and
exclude preprocessing.

Accounting unit: per-layer classifiers are counted per (observation, layer)
processed by one layer pipeline; joint classifiers per observation. Under
this convention every bound row is a valid upper bound, with the log row
tight for the Log-MAP family.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class OpCounter:
    dist: int = 0
    exp: int = 0
    log: int = 0

    def merge(self, other: "OpCounter") -> None:
        self.dist += other.dist
        self.exp += other.exp
        self.log += other.log

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.dist, self.exp, self.log)


def table_bound(classifier: str, n: int, s: int, xmax: int) -> OpCounter:
    """Per-observation upper bounds on (dist, exp, log) operation counts.

    xmax is the cardinality of the largest hypothesis constellation. The
    LORD variants share the subspace bounds (identical metric structure).
    """
    linear = n * s * xmax
    joint = (s**n) * (xmax**n)
    bounds = {
        "log-map": (joint, joint, s**n),
        "max-log-map": (joint, 0, 0),
        "zf-alrt": (linear, linear, s),
        "subspace-log-map": (linear, linear, s),
        "subspace-max-log-map": (linear, 0, 0),
        "lord-log-map": (linear, linear, s),
        "lord-max-log-map": (linear, 0, 0),
    }
    if classifier not in bounds:
        raise KeyError(f"no complexity bound for classifier {classifier!r}")
    d, e, l = bounds[classifier]
    return OpCounter(dist=d, exp=e, log=l)
