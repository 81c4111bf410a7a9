"""Sweeping a builder over functional values."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .. import sdpcore as sc


@dataclass
class CurvePoint:
    value: float
    bound: float
    report: sc.SolveReport
    problem: sc.SdpProblem | None = None

    @property
    def failed(self) -> bool:
        return not self.report.ok


def _solve_point(builder: Callable[[float], sc.SdpProblem], value: float,
                 settings: sc.SolveSettings, keep_problem: bool) -> CurvePoint:
    prob = builder(value)
    rep = sc.solve(prob, settings)
    bound = rep.objective if rep.ok else math.nan
    return CurvePoint(float(value), bound, rep, prob if keep_problem else None)


def bound_curve(builder: Callable[[float], sc.SdpProblem], sweep: Sequence[float],
                settings: sc.SolveSettings | None = None, workers: int = 1,
                keep_problems: bool = False) -> list[CurvePoint]:
    """Solve ``builder(v)`` for each ``v`` in ``sweep``, in sweep order.

    A failed or infeasible point is returned with ``bound = nan`` and its
    report; nothing is dropped.
    """
    settings = settings or sc.SolveSettings()
    sweep = list(sweep)
    if workers <= 1 or len(sweep) <= 1:
        return [_solve_point(builder, v, settings, keep_problems) for v in sweep]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(_solve_point, builder, v, settings, keep_problems) for v in sweep]
        return [f.result() for f in futs]
