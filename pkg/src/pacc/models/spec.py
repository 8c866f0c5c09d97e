"""Model hyperparameters and their key = value text form."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

KINDS = ("DNN", "bRNN", "SCNN", "SA", "CA", "MCA")
TOKEN_KINDS = ("bRNN", "SCNN", "SA", "CA", "MCA")
ATTENTION_KINDS = ("SA", "CA", "MCA")

DNN_DENSE = (512, 256, 128, 64, 32, 16)
SMILES_DENSE = (512, 128, 64)
MCA_WIDTHS = (3, 5, 11)
SCNN_WIDTHS = (5, 5, 5, 5)
SCNN_CHANNELS = (32, 32, 32, 16)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters.

    Fields left as ``None`` take kind-specific defaults: attention size 256
    for SA/CA and 64 for MCA, dense stack (512, 256, 128, 64, 32, 16) for the
    fingerprint baseline and (512, 128, 64) otherwise.
    """

    kind: str
    vocab_size: int = 2
    n_genes: int = 1
    max_len: int = 128
    fp_width: int = 512
    H: int = 16
    A: int | None = None
    f: int = 64
    m: int = 4
    kernel_widths: tuple[int, ...] | None = None
    channels: tuple[int, ...] | None = None
    dense: tuple[int, ...] | None = None
    rnn_hidden: int = 64
    rnn_layers: int = 2
    p_drop: float = 0.5
    mask_pads: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.A is None:
            set_("A", 64 if self.kind == "MCA" else 256)
        if self.kernel_widths is None:
            set_("kernel_widths", MCA_WIDTHS if self.kind == "MCA" else SCNN_WIDTHS)
        if self.channels is None:
            set_("channels", SCNN_CHANNELS)
        if self.dense is None:
            set_("dense", DNN_DENSE if self.kind == "DNN" else SMILES_DENSE)
        for name in ("kernel_widths", "channels", "dense"):
            set_(name, tuple(int(x) for x in getattr(self, name)))
        sizes = [self.vocab_size, self.n_genes, self.max_len, self.fp_width, self.H, self.A,
                 self.f, self.m, self.rnn_hidden, self.rnn_layers, *self.dense]
        if min(sizes) < 1:
            raise SpecError("all sizes must be >= 1")
        if not 0.0 <= self.p_drop < 1.0:
            raise SpecError("p_drop must lie in [0, 1)")
        if self.kind in ("MCA", "SCNN") and any(k % 2 == 0 for k in self.kernel_widths):
            raise SpecError("kernel widths must be odd")
        if self.kind == "SCNN" and len(self.channels) != len(self.kernel_widths):
            raise SpecError("SCNN needs one channel count per kernel width")

    @property
    def uses_tokens(self) -> bool:
        return self.kind in TOKEN_KINDS

    @property
    def has_attention(self) -> bool:
        return self.kind in ATTENTION_KINDS

    @property
    def n_channels(self) -> int:
        """MCA attention channels: one per conv width plus the residual one."""
        return len(self.kernel_widths) + 1

    @property
    def mca_concat_width(self) -> int:
        return len(self.kernel_widths) * self.m * self.f + self.m * self.H

    def receptive_field(self) -> int:
        return 1 + sum(k - 1 for k in self.kernel_widths)

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for fld in fields(self):
            value = getattr(self, fld.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{fld.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        raw = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SpecError(f"expected key = value, got {line!r}")
            raw[key.strip()] = value.strip()
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "ModelSpec":
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        for key, value in raw.items():
            if key not in known:
                raise SpecError(f"unknown model field {key!r}")
            kwargs[key] = _coerce(key, value)
        return cls(**kwargs)


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key == "kind":
        return value
    if key in ("kernel_widths", "channels", "dense"):
        return tuple(int(v) for v in value.split(",") if v.strip())
    if key == "A" and value == "None":
        return None
    if key == "p_drop":
        return float(value)
    if key == "mask_pads":
        if value not in ("True", "False"):
            raise SpecError(f"mask_pads must be True or False, got {value!r}")
        return value == "True"
    return int(value)
