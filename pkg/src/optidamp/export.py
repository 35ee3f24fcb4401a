"""Matrix Market export of a model and its modal data."""
from __future__ import annotations

import json
import os

import numpy as np
import scipy.io as sio

from .errors import InputError
from .model import ModalModel, SecondOrderModel

__all__ = ["export_model", "MM_PRECISION"]

MM_PRECISION = 17


def _write(dirpath, name, arr, files):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if arr.shape[0] == 1 and arr.shape[1] > 1:
        arr = arr.T
    fname = f"{name}.mtx"
    sio.mmwrite(os.path.join(dirpath, fname), arr, precision=MM_PRECISION)
    files[name] = {"file": fname, "shape": list(arr.shape)}


def export_model(model: SecondOrderModel, modal: ModalModel, dirpath) -> str:
    """Write ``M, K, D_int, D_i, omega, gamma, R`` in array format plus ``manifest.json``.

    Vectors are written as single columns.  Returns the manifest path.
    """
    try:
        os.makedirs(dirpath, exist_ok=True)
        files = {}
        _write(dirpath, "M", model.M, files)
        _write(dirpath, "K", model.K, files)
        _write(dirpath, "D_int", model.D_int, files)
        for i, Dm in enumerate(model.dampers, start=1):
            _write(dirpath, f"D_{i}", Dm, files)
        _write(dirpath, "omega", modal.omega[:, None], files)
        _write(dirpath, "gamma", modal.gamma[:, None], files)
        _write(dirpath, "R", modal.R, files)
        manifest = {
            "name": model.name,
            "n": model.n,
            "k": model.k,
            "k_d": model.k_d,
            "block_sizes": [int(r) for r in model.r],
            "s": modal.s,
            "format": "MatrixMarket array real general",
            "precision": MM_PRECISION,
            "files": files,
        }
        path = os.path.join(dirpath, "manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2)
    except OSError as exc:
        raise InputError(f"cannot write to {dirpath}: {exc.strerror or exc}") from None
    return path
