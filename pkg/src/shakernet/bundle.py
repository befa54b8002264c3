"""Result bundle: a manifest plus one ``.npy`` file per matrix.

Layout under the bundle root::

    manifest.json                   views, entities, solver params, matrix index
    config.json                     resolved run configuration (all defaults filled)
    matrices/<vv>-<view>/W.npy      phase 1: W, W_hat, Theta, lambda1
                         W_tilde.npy  phase 2: W_tilde, Phi, A, lambda2, phi_scores
    history/phase1_<vv>-<view>.csv  per-iteration diagnostics
    history/phase2.csv

Matrices are NPY v1.0 files holding little-endian float64 in C (row-major)
order; the NPY header records the shape. ``manifest.json`` repeats each
shape with a SHA-256 of the file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT = "shakernet-bundle/1"
MATRIX_ENCODING = "NPY 1.0, dtype '<f8', C order"
PHASE1_KEYS = ("W", "W_hat", "Theta", "lambda1")
PHASE2_KEYS = ("W_tilde", "Phi", "A", "lambda2", "phi_scores")


def view_dir(index: int, view: str) -> str:
    return f"{index:02d}-" + re.sub(r"[^A-Za-z0-9._-]", "_", view)


def save_matrix(path: Path, M) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(np.asarray(M, dtype="<f8"))
    with path.open("wb") as fh:
        np.save(fh, arr, allow_pickle=False)
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_matrix(path: Path) -> np.ndarray:
    return np.load(path, allow_pickle=False)


def _write_history(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if not rows:
            fh.write("iteration\n")
            return
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for row in rows:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])


def write_bundle(root, *, views, entities, timestamps, main_view, phase1, phase2, config: dict) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    matrices = {}

    def put(rel, M):
        digest = save_matrix(root / rel, M)
        matrices[rel] = {"shape": list(np.shape(M)), "sha256": digest}

    p1_meta, p2_meta = {}, {}
    for i, view in enumerate(views):
        d = f"matrices/{view_dir(i, view)}"
        fit = phase1.fits[view]
        for key in PHASE1_KEYS:
            put(f"{d}/{key}.npy", getattr(fit, key))
        put(f"{d}/W_tilde.npy", phase2.W_tilde[view])
        put(f"{d}/Phi.npy", phase2.Phi[view])
        put(f"{d}/A.npy", phase2.A[view])
        put(f"{d}/lambda2.npy", phase2.lambda2[view])
        put(f"{d}/phi_scores.npy", phase2.phi_scores[view])
        _write_history(root / f"history/phase1_{view_dir(i, view)}.csv", fit.history)
        p1_meta[view] = {"converged": fit.converged, "iterations": fit.iterations,
                         "monotone": fit.monotone, "params": fit.params}
    _write_history(root / "history/phase2.csv", phase2.history)
    p2_meta = {"converged": phase2.converged, "iterations": phase2.iterations,
               "degenerate": phase2.degenerate, "monotone": phase2.monotone, "params": phase2.params}

    manifest = {
        "format": FORMAT,
        "matrix_encoding": MATRIX_ENCODING,
        "views": list(views),
        "view_dirs": {v: view_dir(i, v) for i, v in enumerate(views)},
        "main_view": main_view,
        "entities": list(entities),
        "window": [timestamps[0], timestamps[-1]],
        "n_timestamps": len(timestamps),
        "phase1": p1_meta,
        "phase2": p2_meta,
        "matrices": dict(sorted(matrices.items())),
    }
    (root / "config.json").write_text(json.dumps(config, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return manifest


@dataclass
class Bundle:
    root: Path
    manifest: dict
    config: dict

    @property
    def views(self) -> list:
        return self.manifest["views"]

    @property
    def entities(self) -> tuple:
        return tuple(self.manifest["entities"])

    @property
    def main_view(self) -> str:
        return self.manifest["main_view"]

    def matrix(self, view: str, key: str) -> np.ndarray:
        if view not in self.manifest["view_dirs"]:
            raise DataError(f"bundle has no view {view!r}")
        return load_matrix(self.root / "matrices" / self.manifest["view_dirs"][view] / f"{key}.npy")


def read_bundle(root) -> Bundle:
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        config = json.loads((root / "config.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{root} is not a result bundle: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise DataError(f"{root}: unsupported bundle format {manifest.get('format')!r}")
    return Bundle(root, manifest, config)
