"""Unified checkpoint container: encoder, probabilistic layer, vocabulary, configs.

Checkpoints are numpy ``.npz`` archives holding one named float64 array per
parameter plus a JSON header with the configs, the vocabulary payload, the
declared array shapes, and a format version.  Loading rebuilds the modules
and validates every stored shape against the freshly constructed
parameters, so a checkpoint/config mismatch fails loudly instead of
producing garbage.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .encoder import DocumentEncoder, EncoderConfig
from .plda import TwoCovarianceModel
from .preprocess import PreprocessConfig, Vocabulary

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, mismatched, or wrong-version checkpoint file."""


@dataclass
class CheckpointBundle:
    encoder: DocumentEncoder
    plda: TwoCovarianceModel
    vocab: Vocabulary
    preprocess_config: PreprocessConfig
    encoder_config: EncoderConfig
    tau_s: float
    tau_d: float
    meta: dict = field(default_factory=dict)


def _state_arrays(module: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.{name}": tensor.detach().numpy().astype(np.float64)
        for name, tensor in module.state_dict().items()
    }


def save_checkpoint(bundle: CheckpointBundle, path: str | Path) -> None:
    path = Path(path)
    arrays = _state_arrays(bundle.encoder, "encoder") | _state_arrays(bundle.plda, "plda")
    header = {
        "version": CHECKPOINT_FORMAT_VERSION,
        "preprocess_config": asdict(bundle.preprocess_config),
        "encoder_config": asdict(bundle.encoder_config),
        "plda_dim": bundle.plda.dim,
        "tau_s": bundle.tau_s,
        "tau_d": bundle.tau_d,
        "vocab": bundle.vocab.to_payload(),
        "meta": bundle.meta,
        "shapes": {name: list(array.shape) for name, array in arrays.items()},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        with open(tmp, "wb") as handle:
            np.savez(handle, __header__=json.dumps(header), **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_module_state(
    module: torch.nn.Module, prefix: str, data, shapes: dict, path
) -> None:
    state = {}
    for name, tensor in module.state_dict().items():
        key = f"{prefix}.{name}"
        if key not in data:
            raise CheckpointError(f"{path}: missing array {key!r}")
        array = data[key]
        declared = tuple(shapes.get(key, ()))
        if tuple(array.shape) != declared:
            raise CheckpointError(
                f"{path}: array {key!r} has shape {array.shape}, header declares {declared}"
            )
        if tuple(array.shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"{path}: array {key!r} has shape {array.shape}, config expects "
                f"{tuple(tensor.shape)}"
            )
        state[name] = torch.as_tensor(array, dtype=torch.float64)
    module.load_state_dict(state)


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    if "__header__" not in data:
        raise CheckpointError(f"{path}: not a checkpoint file (missing header)")
    header = json.loads(str(data["__header__"]))
    if header.get("version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')!r}")

    vocab = Vocabulary.from_payload(header["vocab"])
    preprocess_config = PreprocessConfig(**header["preprocess_config"])
    encoder_config = EncoderConfig(**header["encoder_config"])
    encoder = DocumentEncoder(encoder_config, vocab, seed=0)
    plda = TwoCovarianceModel(header["plda_dim"])
    shapes = header.get("shapes", {})
    _load_module_state(encoder, "encoder", data, shapes, path)
    _load_module_state(plda, "plda", data, shapes, path)
    return CheckpointBundle(
        encoder=encoder,
        plda=plda,
        vocab=vocab,
        preprocess_config=preprocess_config,
        encoder_config=encoder_config,
        tau_s=header["tau_s"],
        tau_d=header["tau_d"],
        meta=header.get("meta", {}),
    )
