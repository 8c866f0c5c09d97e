"""Self-describing checkpoint files.

Layout::

    PACC-CKPT 1
    <manifest byte length>
    <manifest: key = value lines, one "array" line per blob>
    <little-endian blobs at the recorded offsets>
    sha256 <hex digest of every preceding byte>

Parameters and batch-norm statistics are float32; the expression transform is
stored as float64 so predictions survive a round trip bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..chem import Vocabulary
from ..data import ExpressionTransform, LabelTransform
from ..models import Model, ModelSpec
from ..nn import BatchNormState

MAGIC = b"PACC-CKPT 1\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    buffers: dict[str, BatchNormState]
    step: int
    val_rmse: float
    seed: int
    label_transform: LabelTransform
    expression_transform: ExpressionTransform
    vocab: Vocabulary
    genes: list[str]
    threads: int = 1
    extra: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: Model, step: int, val_rmse: float, seed: int, label_transform: LabelTransform,
                   expression_transform: ExpressionTransform, vocab: Vocabulary, genes, threads: int = 1
                   ) -> "Checkpoint":
        return cls(
            spec=model.spec,
            params={k: v.copy() for k, v in model.params.items()},
            buffers={k: BatchNormState(v.running_mean.copy(), v.running_var.copy(), v.momentum)
                     for k, v in model.buffers.items()},
            step=step,
            val_rmse=float(val_rmse),
            seed=seed,
            label_transform=label_transform,
            expression_transform=expression_transform,
            vocab=vocab,
            genes=list(genes),
            threads=threads,
        )

    def model(self) -> Model:
        m = Model(self.spec, seed=self.seed)
        if set(m.params) != set(self.params):
            raise CheckpointError("checkpoint parameters do not match the model layout")
        m.params = {k: v.copy() for k, v in self.params.items()}
        m.buffers = {k: BatchNormState(v.running_mean.copy(), v.running_var.copy(), v.momentum)
                     for k, v in self.buffers.items()}
        return m

    # -- serialization -------------------------------------------------------

    def _arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [(f"param:{k}", np.asarray(v, dtype="<f4")) for k, v in sorted(self.params.items())]
        for k, v in sorted(self.buffers.items()):
            out.append((f"bn_mean:{k}", np.asarray(v.running_mean, dtype="<f4")))
            out.append((f"bn_var:{k}", np.asarray(v.running_var, dtype="<f4")))
        out.append(("expr_mean", np.asarray(self.expression_transform.mean, dtype="<f8")))
        out.append(("expr_std", np.asarray(self.expression_transform.std, dtype="<f8")))
        return out

    def manifest_text(self) -> str:
        lines = [
            f"format_version = {FORMAT_VERSION}",
            f"step = {self.step}",
            f"val_rmse = {self.val_rmse!r}",
            f"seed = {self.seed}",
            f"threads = {self.threads}",
            f"label_transform = {self.label_transform.to_text()}",
            f"vocab = {json.dumps(self.vocab.itos)}",
            f"genes = {json.dumps(self.genes)}",
        ]
        lines += [f"extra.{k} = {v}" for k, v in sorted(self.extra.items())]
        lines += [f"spec.{line}" for line in self.spec.to_text().splitlines()]
        offset = 0
        for name, arr in self._arrays():
            nbytes = arr.nbytes
            digest = hashlib.sha256(arr.tobytes()).hexdigest()
            shape = ",".join(str(n) for n in arr.shape)
            lines.append(f"array = {name} {arr.dtype.str} {shape or '-'} {offset} {nbytes} {digest}")
            offset += nbytes
        return "\n".join(lines) + "\n"

    @property
    def manifest_hash(self) -> str:
        return hashlib.sha256(self.manifest_text().encode()).hexdigest()

    def to_bytes(self) -> bytes:
        manifest = self.manifest_text().encode()
        body = MAGIC + f"{len(manifest)}\n".encode() + manifest
        body += b"".join(arr.tobytes() for _, arr in self._arrays())
        return body + b"sha256 " + hashlib.sha256(body).hexdigest().encode() + b"\n"

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if not data.startswith(MAGIC):
            raise CheckpointError("not a checkpoint file (bad magic)")
        tail = data.rfind(b"sha256 ")
        if tail < 0 or hashlib.sha256(data[:tail]).hexdigest().encode() != data[tail + 7 :].strip():
            raise CheckpointError("checksum mismatch: file is corrupt or truncated")
        pos = len(MAGIC)
        nl = data.index(b"\n", pos)
        size = int(data[pos:nl])
        manifest = data[nl + 1 : nl + 1 + size].decode()
        blob_start = nl + 1 + size
        meta: dict[str, str] = {}
        spec_lines, arrays = [], {}
        for line in manifest.splitlines():
            key, _, value = line.partition(" = ")
            if key == "array":
                name, dtype, shape, offset, nbytes, digest = value.split(" ")
                raw = data[blob_start + int(offset) : blob_start + int(offset) + int(nbytes)]
                if hashlib.sha256(raw).hexdigest() != digest:
                    raise CheckpointError(f"array {name} fails its checksum")
                dims = () if shape == "-" else tuple(int(x) for x in shape.split(","))
                arrays[name] = np.frombuffer(raw, dtype=np.dtype(dtype)).reshape(dims).copy()
            elif key.startswith("spec."):
                spec_lines.append(f"{key[5:]} = {value}")
            else:
                meta[key] = value
        if int(meta.get("format_version", -1)) != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format {meta.get('format_version')}")
        params = {k[6:]: v.astype(np.float32) for k, v in arrays.items() if k.startswith("param:")}
        buffers = {k[8:]: BatchNormState(v.astype(np.float32), arrays[f"bn_var:{k[8:]}"].astype(np.float32))
                   for k, v in arrays.items() if k.startswith("bn_mean:")}
        return cls(
            spec=ModelSpec.from_text("\n".join(spec_lines)),
            params=params,
            buffers=buffers,
            step=int(meta["step"]),
            val_rmse=float(meta["val_rmse"]),
            seed=int(meta["seed"]),
            label_transform=LabelTransform.from_text(meta["label_transform"]),
            expression_transform=ExpressionTransform(arrays["expr_mean"].astype(np.float64),
                                                     arrays["expr_std"].astype(np.float64)),
            vocab=Vocabulary.from_text("".join(t + "\n" for t in json.loads(meta["vocab"]))),
            genes=json.loads(meta["genes"]),
            threads=int(meta.get("threads", 1)),
            extra={k[6:]: v for k, v in meta.items() if k.startswith("extra.")},
        )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
