"""
Dreammap world model serialisation module.

A model file is `DMWM`, a little-endian uint32 format version, a uint32 length and the
UTF-8 JSON architecture descriptor, a uint64 parameter count, then every parameter as a
little-endian float32 in `state_dict` (declaration) order. A JSON sidecar next to it
(`<path>.json`) mirrors the descriptor and records the training provenance.
"""


import json
import logging
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from .networks import Architecture, WorldModel

logger = logging.getLogger(__name__)

MAGIC = b"DMWM"
VERSION = 1


class ModelFormatError(DataError):
    """Raised for malformed model files."""


def sidecar_path(path):
    path = Path(path)

    return path.with_name(path.name + ".json")


def save_model(path, model):
    """Write a model file and its JSON sidecar."""

    descriptor = json.dumps(model.arch.to_dict(), sort_keys=True).encode("utf-8")
    weights = [t.detach().cpu().numpy().astype("<f4").reshape(-1) for t in model.state_dict().values()]
    flat = np.concatenate(weights) if weights else np.zeros(0, dtype="<f4")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(descriptor)))
        fh.write(descriptor)
        fh.write(struct.pack("<Q", flat.size))
        fh.write(flat.tobytes())

    sidecar = {"architecture": model.arch.to_dict(), "provenance": model.provenance, "format_version": VERSION}
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    logger.info("wrote model (%d parameters) to %s", flat.size, path)


def load_model(path):
    """Read a model file (and its sidecar's provenance, when present)."""

    data = Path(path).read_bytes()

    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path} is not a DMWM model file")

    try:
        version, desc_len = struct.unpack_from("<II", data, 4)
        offset = 12
        arch = Architecture.from_dict(json.loads(data[offset : offset + desc_len].decode("utf-8")))
        offset += desc_len
        (count,) = struct.unpack_from("<Q", data, offset)
        offset += 8
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"malformed model header in {path}: {exc}") from exc

    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if len(data) - offset != 4 * count:
        raise ModelFormatError(f"{path} declares {count} parameters but holds {(len(data) - offset) // 4}")

    flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    model = WorldModel(arch)

    state = model.state_dict()
    if sum(t.numel() for t in state.values()) != count:
        raise ModelFormatError(f"{path} parameter count does not match its architecture")

    position = 0
    for name, tensor in state.items():
        n = tensor.numel()
        state[name] = torch.from_numpy(flat[position : position + n].copy()).reshape(tensor.shape)
        position += n
    model.load_state_dict(state)
    model.eval()

    sidecar = sidecar_path(path)
    if sidecar.exists():
        try:
            model.provenance = json.loads(sidecar.read_text(encoding="utf-8"))["provenance"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise ModelFormatError(f"malformed model sidecar {sidecar}: {exc}") from exc

    return model
