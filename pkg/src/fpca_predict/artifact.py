"""Versioned JSON persistence of fitted FPCA models."""

import json
from typing import Optional

import numpy as np

from .data import Grid
from .errors import FpcaError
from .kernels import Kernel
from .smoothing import Bandwidths, CovarianceSurface, MeanFunction
from .spectral import EigenSystem, FittedFpcaModel

FORMAT = "fpca-predict-model"
VERSION = 1


def model_to_dict(model: FittedFpcaModel, bandwidths: Optional[Bandwidths] = None, kernel=Kernel.EPANECHNIKOV) -> dict:
    g = model.grid
    out = {
        "format": FORMAT,
        "version": VERSION,
        "grid": g.points.tolist(),
        "weights": g.weights.tolist(),
        "mean": model.mean.values.tolist(),
        "covariance": model.cov.values.tolist(),
        "sigma2": float(model.sigma2),
        "eigenvalues": model.eigen.eigenvalues.tolist(),
        "eigenfunctions": model.eigen.eigenfunctions.T.tolist(),
        "K": int(model.K),
        "kernel": Kernel(kernel).name.lower(),
    }
    if bandwidths is not None:
        out["bandwidths"] = {"h_mu": bandwidths.h_mu, "h_G": bandwidths.h_G, "h": bandwidths.h}
    return out


def model_from_dict(d: dict) -> FittedFpcaModel:
    if d.get("format") != FORMAT:
        raise FpcaError("not a model artifact")
    if d.get("version") != VERSION:
        raise FpcaError(f"unsupported model artifact version {d.get('version')!r}")
    try:
        grid = Grid(np.asarray(d["grid"], float), np.asarray(d["weights"], float))
        mean = MeanFunction(grid, np.asarray(d["mean"], float))
        cov = CovarianceSurface(grid, np.asarray(d["covariance"], float), float(d["sigma2"]))
        eigen = EigenSystem(grid, np.asarray(d["eigenvalues"], float), np.asarray(d["eigenfunctions"], float).T)
        return FittedFpcaModel(mean, cov, eigen, int(d["K"]))
    except KeyError as exc:
        raise FpcaError(f"model artifact lacks field {exc.args[0]!r}") from None


def save_model(model: FittedFpcaModel, path, bandwidths: Optional[Bandwidths] = None, kernel=Kernel.EPANECHNIKOV) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, bandwidths, kernel), fh)


def load_model(path) -> FittedFpcaModel:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FpcaError(f"model artifact is not valid JSON: {exc}") from None
    return model_from_dict(d)
