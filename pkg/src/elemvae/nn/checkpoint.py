"""Checkpoint container.

Layout (format version 1): an uncompressed zip archive with fixed member
timestamps so identical models produce identical bytes.

``meta.json``
    UTF-8 JSON: ``{"format": "elemvae-checkpoint", "version": 1, "networks": {name:
    NetworkSpec dict}, ...}`` plus any caller metadata (train config, seed, recipe,
    history).
``<network>/<layer index>.<W|b>.npy``
    One float64 array per parameter in NumPy ``.npy`` format.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from .spec import NetworkSpec

FORMAT = "elemvae-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_member(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, networks: dict[str, tuple[NetworkSpec, list]], meta: dict):
    """Write ``networks`` (name -> (spec, params)) and JSON-able ``meta``."""
    header = dict(meta)
    header.update(format=FORMAT, version=VERSION,
                  networks={name: spec.to_dict() for name, (spec, _) in networks.items()})
    with zipfile.ZipFile(path, "w") as zf:
        _write_member(zf, "meta.json", json.dumps(header, sort_keys=True, indent=1).encode())
        for name, (_, params) in networks.items():
            for i, layer in enumerate(params):
                for key in sorted(layer):
                    buf = io.BytesIO()
                    np.lib.format.write_array(buf, np.ascontiguousarray(layer[key]),
                                              allow_pickle=False)
                    _write_member(zf, f"{name}/{i}.{key}.npy", buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, tuple[NetworkSpec, list]], dict]:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT or meta.get("version") != VERSION:
            raise ValueError(f"{path}: not a version {VERSION} {FORMAT} file")
        networks = {}
        for name, spec_dict in meta.pop("networks").items():
            spec = NetworkSpec.from_dict(spec_dict)
            params = [{} for _ in spec.layers]
            for member in zf.namelist():
                if member.startswith(name + "/"):
                    idx, key, _ = member[len(name) + 1:].split(".")
                    params[int(idx)][key] = np.lib.format.read_array(
                        io.BytesIO(zf.read(member)), allow_pickle=False)
            networks[name] = (spec, params)
    return networks, meta
