"""JSON documents for trained models.

Floats are written with Python's shortest round-trip repr, so a saved model
predicts bit-identically after loading.  The recurrent matrix is stored as
``[row, col, value]`` triplets since grown reservoirs are sparse.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import LagSpec, Standardizer
from .lasso import LassoModel
from .reservoir import Readout, ReservoirNet
from .variants import HybridModel

__all__ = ["SCHEMA", "model_to_dict", "model_from_dict", "save_model", "load_model"]

SCHEMA = "hybrid-rscn-model/1"


def _net_to_dict(net: ReservoirNet) -> dict:
    rows, cols = np.nonzero(net.w_r)
    return {
        "n_nodes": net.n_nodes,
        "k_r": net.k_r,
        "alpha": net.alpha,
        "triangular": net.triangular,
        "w_in": net.w_in.tolist(),
        "b": net.b.tolist(),
        "w_r": [[int(i), int(j), float(net.w_r[i, j])] for i, j in zip(rows, cols)],
    }


def _net_from_dict(d) -> ReservoirNet:
    n = int(d["n_nodes"])
    w_r = np.zeros((n, n))
    for i, j, v in d["w_r"]:
        w_r[int(i), int(j)] = float(v)
    w_in = np.asarray(d["w_in"], dtype=np.float64).reshape(n, int(d["k_r"]))
    return ReservoirNet(w_in, w_r, np.asarray(d["b"], dtype=np.float64), float(d["alpha"]), bool(d["triangular"]))


def model_to_dict(model: HybridModel) -> dict:
    return {
        "schema": SCHEMA,
        "variant": model.variant,
        "washout": model.washout,
        "lag_spec": model.spec.to_dict(),
        "inputs": [{"name": n, "lag": l} for n, l in model.inputs],
        "standardizer": model.standardizer.to_dict(),
        "linear": model.linear.to_dict(),
        "reservoir": _net_to_dict(model.net),
        "readout": {"w_out": model.readout.w_out.tolist(), "c": model.readout.c, "c_l": model.readout.c_l},
    }


def model_from_dict(d) -> HybridModel:
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported model schema {d.get('schema')!r}; expected {SCHEMA!r}")
    ro = d["readout"]
    return HybridModel(
        d["variant"],
        LagSpec.from_dict(d["lag_spec"]),
        Standardizer.from_dict(d["standardizer"]),
        LassoModel.from_dict(d["linear"]),
        tuple((f["name"], int(f["lag"])) for f in d["inputs"]),
        _net_from_dict(d["reservoir"]),
        Readout(np.atleast_2d(np.asarray(ro["w_out"], dtype=np.float64)), float(ro["c"]), float(ro["c_l"])),
        int(d["washout"]),
    )


def save_model(model: HybridModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path) -> HybridModel:
    return model_from_dict(json.loads(Path(path).read_text()))
