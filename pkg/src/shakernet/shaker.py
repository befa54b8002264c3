"""Shaker ranking by accumulated influence diffusion.

Row ``i`` of an influence matrix holds entity ``i``'s out-influence (for
``Y = X W``, ``W[i, j]`` is how much ``i`` at ``t`` moves ``j`` at ``t+1``).
A unit shock on entity ``u`` propagates to ``e_u W^s`` after ``s`` steps, so
the total footprint over ``r`` steps is row ``u`` of ``E = W + ... + W^r``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SpectralBlowup

BLOWUP_LIMIT = 1e12


@dataclass
class ShakerReport:
    E: np.ndarray
    f: np.ndarray
    entities: tuple
    ranking: tuple
    r: int
    top: int
    source_matrix: str = "W_tilde"

    @property
    def shakers(self) -> tuple:
        return self.ranking[: self.top]

    def rank_of(self, entity) -> int:
        return self.ranking.index(entity) + 1

    def to_dict(self) -> dict:
        pos = {e: i for i, e in enumerate(self.entities)}
        return {
            "r": self.r,
            "top": self.top,
            "source_matrix": self.source_matrix,
            "shakers": list(self.shakers),
            "ranking": [
                {"rank": i + 1, "entity": e, "f": float(self.f[pos[e]])}
                for i, e in enumerate(self.ranking)
            ],
        }

    def write(self, json_path, csv_path) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        pos = {e: i for i, e in enumerate(self.entities)}
        with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("entity", "f", "rank"))
            for i, e in enumerate(self.ranking):
                w.writerow((e, repr(float(self.f[pos[e]])), i + 1))


def accumulate_influence(W, r: int) -> np.ndarray:
    """``E = W + W^2 + ... + W^r`` by repeated multiplication."""
    W = np.asarray(W, dtype=np.float64)
    if r < 1:
        raise ValueError("r must be >= 1")
    if not np.all(np.isfinite(W)):
        raise ValueError("W must be finite")
    power = W.copy()
    E = W.copy()
    for step in range(2, r + 1):
        power = power @ W
        E = E + power
        if not np.all(np.isfinite(E)) or np.abs(E).max(initial=0.0) > BLOWUP_LIMIT:
            raise SpectralBlowup(
                f"accumulated influence exceeds {BLOWUP_LIMIT:g} at step {step}; "
                "rescale W (spectral radius >= 1) or shorten r"
            )
    return E


def rank_shakers(E, top: int = 1, entities=None, r: int = 1, source_matrix: str = "W_tilde") -> ShakerReport:
    """Rank entities by the Euclidean norm of their row of ``E``.

    Ties go to the smaller entity identifier.
    """
    E = np.asarray(E, dtype=np.float64)
    n = E.shape[0]
    if top < 1:
        raise ValueError("top must be >= 1")
    entities = tuple(str(e) for e in entities) if entities is not None else tuple(str(i) for i in range(n))
    f = np.linalg.norm(E, axis=1)
    order = sorted(range(n), key=lambda i: (-f[i], entities[i]))
    return ShakerReport(
        E=E, f=f, entities=entities, ranking=tuple(entities[i] for i in order),
        r=r, top=min(top, n), source_matrix=source_matrix,
    )


def detect_shakers(W, r: int = 3, top: int = 10, entities=None, source_matrix: str = "W_tilde") -> ShakerReport:
    return rank_shakers(accumulate_influence(W, r), top, entities, r, source_matrix)
