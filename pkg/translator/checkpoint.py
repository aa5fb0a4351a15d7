"""
Checkpoint I/O
Binary checkpoint files holding the model configuration, every named
parameter and the training position.

Layout (little-endian):
    b"R1CK" | u32 version | u32 n + ModelConfig text | u32 n + meta JSON |
    u32 count | per parameter: u16 n + name, u8 dtype code, u8 ndim,
    u32 dims..., raw payload
"""

import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .config import ModelConfig
from .errors import ContractError, FormatError, ParseError, SchemaError

logger = logging.getLogger(__name__)

MAGIC = b"R1CK"
VERSION = 1

DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    """Snapshot of a model plus where training stood when it was taken."""

    config: ModelConfig
    params: Dict[str, np.ndarray]
    stage: str = "init"
    epoch: int = 0
    best_val_loss: float = math.inf
    rng_state: Optional[str] = None
    version: int = VERSION
    extra: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def capture(cls, model, stage: str = "init", epoch: int = 0, best_val_loss: float = math.inf,
                rng_state: Optional[str] = None) -> "Checkpoint":
        """Copy the current parameters of ``model`` (anything with ``config`` and ``params``)."""
        return cls(model.config, model.params.state_dict(), stage, epoch, best_val_loss, rng_state)

    def restore(self, model) -> None:
        """
        Load the parameters into ``model`` in place.

        Raises:
            SchemaError: naming the first tensor that is missing or mis-shaped.
        """
        model.params.load_state_dict(self.params)

    def meta(self) -> Dict:
        return {
            "stage": self.stage,
            "epoch": self.epoch,
            "best_val_loss": self.best_val_loss,
            "rng_state": self.rng_state,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<I", self.version)]
        for block in (self.config.to_text(), json.dumps(self.meta(), sort_keys=True)):
            raw = block.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", len(self.params)))
        for name, array in self.params.items():
            array = np.ascontiguousarray(array)
            little = array.dtype.newbyteorder("<")
            if little not in DTYPE_CODES:
                raise ContractError(f"cannot store tensor '{name}' of dtype {array.dtype}")
            raw_name = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw_name)) + raw_name)
            parts.append(struct.pack("<BB", DTYPE_CODES[little], array.ndim))
            parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
            parts.append(array.astype(little, copy=False).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<bytes>") -> "Checkpoint":
        reader = _Reader(blob, source)
        if reader.take(len(MAGIC)) != MAGIC:
            raise FormatError(f"{source}: not a checkpoint (bad magic header)")
        (version,) = reader.unpack("<I")
        if version != VERSION:
            raise FormatError(
                f"{source}: checkpoint version {version}, this build reads version {VERSION}"
            )
        try:
            config_text = reader.block().decode("utf-8")
            config = ModelConfig.from_text(config_text, source=f"{source} config")
            meta = json.loads(reader.block().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError, ParseError) as e:
            raise FormatError(f"{source}: corrupt header ({e})") from None

        params: Dict[str, np.ndarray] = {}
        (count,) = reader.unpack("<I")
        for _ in range(count):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode("utf-8", errors="replace")
            code, ndim = reader.unpack("<BB")
            if code not in CODE_DTYPES:
                raise FormatError(f"{source}: tensor '{name}' has unknown dtype code {code}")
            shape = reader.unpack(f"<{ndim}I") if ndim else ()
            dtype = CODE_DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            array = np.frombuffer(reader.take(nbytes), dtype=dtype).reshape(shape)
            params[name] = array.astype(dtype.newbyteorder("="))
        if reader.remaining:
            raise FormatError(f"{source}: {reader.remaining} trailing bytes after the last tensor")

        return cls(
            config=config,
            params=params,
            stage=meta.get("stage", "init"),
            epoch=int(meta.get("epoch", 0)),
            best_val_loss=float(meta.get("best_val_loss", math.inf)),
            rng_state=meta.get("rng_state"),
            version=version,
            extra=meta.get("extra", {}),
        )

    def check_shapes(self, source: str = "<checkpoint>") -> None:
        """
        Compare the stored tensors with what ``config`` builds.

        Raises:
            SchemaError: naming the first tensor that is missing, unexpected or mis-shaped.
        """
        from .model import parameter_shapes  # model imports this module

        expected = parameter_shapes(self.config)
        for name, shape in expected.items():
            if name not in self.params:
                raise SchemaError(f"{source}: missing tensor '{name}'")
            stored = tuple(self.params[name].shape)
            if stored != shape:
                raise SchemaError(
                    f"{source}: tensor '{name}' has shape {stored}, its config implies {shape}"
                )
        extra = [n for n in self.params if n not in expected]
        if extra:
            raise SchemaError(f"{source}: unexpected tensor '{extra[0]}'")


class _Reader:
    """Cursor over a byte string; any short read is a truncated file."""

    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    @property
    def remaining(self) -> int:
        return len(self.blob) - self.pos

    def take(self, n: int) -> bytes:
        if n > self.remaining:
            raise FormatError(
                f"{self.source}: truncated checkpoint (needed {n} bytes at offset {self.pos})"
            )
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def block(self) -> bytes:
        (n,) = self.unpack("<I")
        return self.take(n)


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically (temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint.to_bytes())
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint ({checkpoint.stage}, epoch {checkpoint.epoch}) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Raises:
        FileNotFoundError: missing file.
        FormatError: bad magic, unknown version or truncated payload.
        SchemaError: a tensor is missing, unexpected or shaped unlike its config.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    checkpoint = Checkpoint.from_bytes(path.read_bytes(), str(path))
    checkpoint.check_shapes(str(path))
    logger.info(
        f"Loaded checkpoint {path} ({checkpoint.stage}, epoch {checkpoint.epoch}, "
        f"{len(checkpoint.params)} tensors)"
    )
    return checkpoint
