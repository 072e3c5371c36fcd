"""Run output: density frames, images, convergence logs and the run manifest."""

import datetime
import os
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple

import numpy as np
import pandas as pd
import toml

from crowd_mfg.fields import DensityField, total_mass
from crowd_mfg.grid import Grid
from crowd_mfg.utils import ConfigurationError

CONVERGENCE_COLUMNS = ["outer_step", "k", "E_k", "verdict"]
MANIFEST_FILE = "manifest.toml"


def run_directory(root: str | None = None, name: str = "run") -> str:
    """A fresh timestamped folder under root (default ./runs)."""
    timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    root = root or f"{os.getcwd()}/runs"
    return f"{root}/{name}_{timestamp}"


def frame_name(n: int, suffix: str) -> str:
    return f"frame_{n:06d}.{suffix}"


def write_density_csv(slice_: DensityField, path, g: Grid, t: float) -> Path:
    """n2 rows of n1 values, row j = 0 first, with a '# t=..., mass=...' header."""
    path = Path(path)
    mass = total_mass(slice_, g)
    np.savetxt(
        path,
        slice_.values.T,
        fmt="%.17g",
        delimiter=",",
        header=f"t={t:.17g}, mass={mass:.17g}",
        comments="# ",
    )
    return path


def read_density_csv(path) -> Tuple[DensityField, Dict[str, float]]:
    """Inverse of write_density_csv; returns the slice and its header fields."""
    path = Path(path)
    with open(path, "r") as file:
        first = file.readline()
    header = {}
    if first.startswith("#"):
        for item in first.lstrip("# ").strip().split(","):
            key, _, value = item.strip().partition("=")
            if key:
                header[key] = float(value)
    values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2).T
    return DensityField(values), header


def write_pgm(slice_: DensityField, path, scale: float) -> Path:
    """8-bit binary PGM; the top image row is the highest j."""
    if not scale > 0:
        raise ConfigurationError(f"PGM scale must be > 0, got {scale}")
    path = Path(path)
    image = np.flipud(slice_.values.T)
    pixels = np.rint(255.0 * np.minimum(image / scale, 1.0)).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as file:
        file.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        file.write(pixels.tobytes())
    return path


def write_convergence_log(records: Sequence[Any], path) -> Path:
    """One row per fixed-point iterate: outer_step, k, E_k, verdict."""
    rows = [
        {
            "outer_step": record.outer_step,
            "k": k,
            "E_k": e_k,
            "verdict": record.verdict.value,
        }
        for record in records
        for k, e_k in enumerate(record.iterates, start=1)
    ]
    frame = pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def load_convergence_log(path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_manifest(manifest: Dict[str, Any], directory) -> Path:
    os.makedirs(directory, exist_ok=True)
    path = Path(directory) / MANIFEST_FILE
    with open(path, "w") as file:
        toml.dump(manifest, file)
    return path


def load_manifest(directory) -> Dict[str, Any]:
    with open(Path(directory) / MANIFEST_FILE, "r") as file:
        return toml.load(file)
