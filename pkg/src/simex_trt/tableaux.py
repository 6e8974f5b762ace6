"""IMEX Butcher pairs: strictly lower explicit part, DIRK implicit part, shared weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_L = 1.0 - 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class ButcherPair:
    name: str
    A_exp: np.ndarray
    A_imp: np.ndarray
    b: np.ndarray
    c_exp: np.ndarray
    c_imp: np.ndarray

    def __post_init__(self):
        for attr in ("A_exp", "A_imp", "b", "c_exp", "c_imp"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        s = self.b.size
        if self.A_exp.shape != (s, s) or self.A_imp.shape != (s, s):
            raise ValueError("tableau shapes disagree")
        if np.any(np.triu(self.A_exp) != 0):
            raise ValueError("explicit tableau must be strictly lower triangular")
        if np.any(np.triu(self.A_imp, 1) != 0):
            raise ValueError("implicit tableau must be lower triangular")

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def implicit_stages(self) -> int:
        return int(np.count_nonzero(np.diag(self.A_imp)))


def _pair(name, A_exp, A_imp, b):
    A_exp = np.asarray(A_exp, dtype=float)
    A_imp = np.asarray(A_imp, dtype=float)
    return ButcherPair(name, A_exp, A_imp, b, A_exp.sum(axis=1), A_imp.sum(axis=1))


def tableau(kind: str) -> ButcherPair:
    g = GAMMA_L
    if kind == "limex_euler":
        return _pair(kind, [[0.0]], [[1.0]], [1.0])
    if kind == "h_ldirk2_222":
        return _pair(kind,
                     [[0.0, 0.0], [1.0, 0.0]],
                     [[g, 0.0], [1.0 - 2.0 * g, g]],
                     [0.5, 0.5])
    if kind == "ssp_ldirk2_332":
        return _pair(kind,
                     [[0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0]],
                     [[0.25, 0, 0], [0, 0.25, 0], [1 / 3, 1 / 3, 1 / 3]],
                     [1 / 3, 1 / 3, 1 / 3])
    if kind == "ssp_ldirk3_332":
        return _pair(kind,
                     [[0, 0, 0], [1.0, 0, 0], [0.25, 0.25, 0]],
                     [[g, 0, 0], [1.0 - 2.0 * g, g, 0], [0.5 - g, 0, g]],
                     [1 / 6, 1 / 6, 2 / 3])
    raise ValueError(f"unknown tableau {kind!r}; choose from {', '.join(TABLEAUX)}")


TABLEAUX = ("limex_euler", "h_ldirk2_222", "ssp_ldirk2_332", "ssp_ldirk3_332")
