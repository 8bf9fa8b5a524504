"""Common shape of a benchmark problem: per-level objectives, transfers and exports."""
from __future__ import annotations

import numpy as np

from ..smooth import Counters
from ..transfer import Level, LevelStack


class Problem:
    """A problem family that can build a hierarchy with any admissible number of levels.

    Subclasses implement ``dim``, ``smooth``, ``phi``, ``transfer`` and
    ``initial_point``.  Level indices count from 0 (coarsest) to ``levels - 1``.
    """

    name = "problem"
    label = "Problem"

    def dim(self, level: int, levels: int) -> int:
        raise NotImplementedError

    def smooth(self, level: int, levels: int, counters: Counters):
        raise NotImplementedError

    def phi(self, level: int, levels: int):
        raise NotImplementedError

    def transfer(self, level: int, levels: int):
        raise NotImplementedError

    def initial_point(self) -> np.ndarray:
        raise NotImplementedError

    def check_levels(self, levels: int):
        if levels < 1:
            raise ValueError("need at least one level")

    def build_stack(self, levels: int, counters: Counters | None = None) -> LevelStack:
        self.check_levels(levels)
        counters = counters if counters is not None else Counters()
        out = []
        for i in range(levels):
            out.append(
                Level(
                    dim=self.dim(i, levels),
                    phi=self.phi(i, levels),
                    smooth=self.smooth(i, levels, counters),
                    transfer=self.transfer(i, levels) if i > 0 else None,
                )
            )
        return LevelStack(out)

    def solution_columns(self, x) -> dict:
        """Named columns for CSV export of a top-level solution."""
        return {"z": np.asarray(x, dtype=float)}

    @property
    def fine_dim(self) -> int:
        return self.dim(0, 1)
