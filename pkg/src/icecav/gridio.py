"""Grid archive layout: manifest.json plus one raw little-endian float32
file per variable, written x-fastest (x varies quickest, then y, z, t)."""

import json
import os

import numpy as np

from .errors import ConfigurationError
from .flowfield import FlowGrid, GridSpec

FORMAT = "icecav-grid-v1"

_STAGGER_NAMES = {"u": "x-face", "v": "y-face", "w": "z-face", "wetfrac": "center"}


def _var_shape(spec, name):
    base = {"u": (spec.nx + 1, spec.ny, spec.nz, spec.nt),
            "v": (spec.nx, spec.ny + 1, spec.nz, spec.nt),
            "w": (spec.nx, spec.ny, spec.nz + 1, spec.nt),
            "wetfrac": (spec.nx, spec.ny, spec.nz)}
    return base[name]


def write_grid(grid, out_dir):
    """Write a grid archive; large 4-D variables are streamed per time step."""
    os.makedirs(out_dir, exist_ok=True)
    spec = grid.spec
    variables = {}
    arrays = {"u": grid.u, "v": grid.v, "w": grid.w, "wetfrac": grid.wet_fraction}
    for name, arr in arrays.items():
        fname = f"{name}.raw"
        shape = _var_shape(spec, name)
        variables[name] = {
            "file": fname,
            "staggering": _STAGGER_NAMES[name],
            "shape": list(shape),
        }
        with open(os.path.join(out_dir, fname), "wb") as fh:
            if arr.ndim == 4:
                for n in range(arr.shape[3]):
                    fh.write(np.asarray(arr[..., n], dtype="<f4").tobytes(order="F"))
            else:
                fh.write(np.asarray(arr, dtype="<f4").tobytes(order="F"))
    manifest = {
        "format": FORMAT,
        "dims": {"nx": spec.nx, "ny": spec.ny, "nz": spec.nz, "nt": spec.nt},
        "spacing": {"dx": spec.dx, "dy": spec.dy, "dz": spec.dz, "dt": spec.dt},
        "origin": {"x0": spec.x0, "y0": spec.y0, "z0": spec.z0, "t0": spec.t0},
        "byte_order": "little",
        "dtype": "float32",
        "order": "x-fastest",
        "variables": variables,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_grid(in_dir):
    path = os.path.join(in_dir, "manifest.json")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ConfigurationError(f"unrecognized grid archive format in {path}")
    spec = GridSpec(**manifest["dims"], **manifest["spacing"], **manifest["origin"])
    arrays = {}
    for name, meta in manifest["variables"].items():
        shape = tuple(meta["shape"])
        expected = _var_shape(spec, name)
        if shape != expected:
            raise ConfigurationError(f"{name} shape {shape} inconsistent with dims {expected}")
        raw = np.fromfile(os.path.join(in_dir, meta["file"]), dtype="<f4")
        if raw.size != int(np.prod(shape)):
            raise ConfigurationError(f"{name}.raw has {raw.size} values, expected {np.prod(shape)}")
        arrays[name] = raw.reshape(shape, order="F")
    return FlowGrid(
        spec=spec,
        u=arrays["u"],
        v=arrays["v"],
        w=arrays["w"],
        wet_fraction=arrays["wetfrac"].astype(float),
    )
