"""The six encoders behind one ``Model`` interface.

Parameters live in a flat ``name -> array`` dict. ``forward`` wraps them in
leaf tensors (or takes leaves supplied by the caller), so training, gradient
checks and checkpoints all go through the same code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    BatchNormState,
    RngStream,
    ShapeMismatch,
    Tensor,
    batchnorm,
    bigru,
    concat,
    conv1d,
    dense,
    dropout,
    embedding,
    sigmoid,
)
from ..nn import init
from .layers import contextual_attention, gene_attention, masked_max, self_attention
from .spec import ModelSpec


class ModelWithoutAttention(ValueError):
    pass


@dataclass
class Batch:
    """Model inputs; ``ids``/``valid`` for token models, ``fingerprints`` for DNN."""

    genes: np.ndarray
    ids: np.ndarray | None = None
    valid: np.ndarray | None = None
    fingerprints: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.genes)

    def take(self, rows) -> "Batch":
        pick = lambda a: None if a is None else a[rows]  # noqa: E731
        return Batch(self.genes[rows], pick(self.ids), pick(self.valid), pick(self.fingerprints))


@dataclass
class ForwardOutput:
    prediction: Tensor  # [B], normalized label scale
    gene_attention: np.ndarray | None = None  # [B, |G|]
    smiles_attention: np.ndarray | None = None  # [B, heads, T]

    @property
    def values(self) -> np.ndarray:
        return self.prediction.data


class Model:
    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.seed = seed
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, BatchNormState] = {}
        self._rng = RngStream(seed).child("init")
        self._dtype = np.dtype(dtype)
        self._build()

    # -- construction --------------------------------------------------------

    def _glorot(self, name, shape, fan_in=None, fan_out=None):
        self.params[name] = init.glorot_uniform(self._rng.child(name), shape, fan_in, fan_out, self._dtype)

    def _zeros(self, name, shape):
        self.params[name] = init.zeros(shape, self._dtype)

    def _build(self):
        s = self.spec
        if s.uses_tokens:
            self.params["emb"] = init.embedding_uniform(self._rng.child("emb"), (s.vocab_size, s.H),
                                                        dtype=self._dtype)
        width = getattr(self, f"_build_{s.kind.lower()}")()
        for i, n in enumerate(s.dense):
            self._glorot(f"dense{i}.W", (width, n))
            self.params[f"bn{i}.gamma"] = np.ones(n, self._dtype)
            self._zeros(f"bn{i}.beta", (n,))
            self.buffers[f"bn{i}"] = BatchNormState.fresh(n, self._dtype)
            width = n
        self._glorot("out.W", (width, 1))
        self._zeros("out.b", (1,))

    def _gene_attention_params(self, prefix="ga"):
        G = self.spec.n_genes
        self._glorot(f"{prefix}.W", (G, G))
        self._zeros(f"{prefix}.b", (G,))

    def _build_dnn(self):
        return self.spec.fp_width + self.spec.n_genes

    def _build_brnn(self):
        s = self.spec
        h = s.rnn_hidden
        d = s.H
        for layer in range(s.rnn_layers):
            for direction in ("fw", "bw"):
                p = f"gru{layer}.{direction}"
                self._glorot(f"{p}.Wx", (d, 3 * h), fan_in=d, fan_out=h)
                self.params[f"{p}.Uh"] = np.concatenate(
                    [init.orthogonal(self._rng.child(f"{p}.Uh{k}"), h, self._dtype) for k in range(3)], axis=1)
                self._zeros(f"{p}.b", (3 * h,))
            d = 2 * h
        self._gene_attention_params()
        return 2 * h + s.n_genes

    def _build_scnn(self):
        s = self.spec
        c_in = s.H
        for i, (k, c) in enumerate(zip(s.kernel_widths, s.channels)):
            self._glorot(f"conv{i}.K", (k, c_in, c))
            self._zeros(f"conv{i}.b", (c,))
            c_in = c
        self._gene_attention_params()
        return c_in + s.n_genes

    def _build_sa(self):
        s = self.spec
        self._glorot("att.We", (s.H, s.A))
        self._zeros("att.b", (s.A,))
        self._glorot("att.V", (s.A,), fan_in=s.A, fan_out=1)
        self._gene_attention_params()
        return s.H + s.n_genes

    def _build_ca(self):
        s = self.spec
        self._glorot("att.We", (s.H, s.A))
        self._glorot("att.Wg", (s.n_genes, s.A))
        self._glorot("att.V", (s.A,), fan_in=s.A, fan_out=1)
        self._gene_attention_params()
        return s.H + s.n_genes

    def _build_mca(self):
        s = self.spec
        for c, k in enumerate(s.kernel_widths):
            self._glorot(f"conv{c}.K", (k, s.H, s.f))
            self._zeros(f"conv{c}.b", (s.f,))
        for c in range(s.n_channels):
            d = s.f if c < len(s.kernel_widths) else s.H
            self._gene_attention_params(f"ga{c}")
            for h in range(s.m):
                p = f"ch{c}.head{h}"
                self._glorot(f"{p}.We", (d, s.A))
                self._glorot(f"{p}.Wg", (s.n_genes, s.A))
                self._glorot(f"{p}.V", (s.A,), fan_in=s.A, fan_out=1)
        return s.mca_concat_width

    # -- utilities -------------------------------------------------------------

    @property
    def dtype(self):
        return self._dtype

    def astype(self, dtype) -> "Model":
        dtype = np.dtype(dtype)
        self._dtype = dtype
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        self.buffers = {k: BatchNormState(v.running_mean.astype(dtype), v.running_var.astype(dtype), v.momentum)
                        for k, v in self.buffers.items()}
        return self

    def leaves(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    # -- forward -----------------------------------------------------------------

    def forward(self, batch: Batch, mode: str = "eval", rng: RngStream | None = None,
                leaves: dict[str, Tensor] | None = None) -> ForwardOutput:
        """Run the encoder; ``mode`` selects dropout and batch-norm behaviour.

        Train mode updates the batch-norm running statistics in place.
        """
        s = self.spec
        P = self.leaves() if leaves is None else leaves
        dt = next(iter(P.values())).dtype
        genes = np.asarray(batch.genes, dtype=dt)
        if genes.ndim != 2 or genes.shape[1] != s.n_genes:
            raise ShapeMismatch(f"gene batch has shape {genes.shape}, panel size is {s.n_genes}")
        g = Tensor(genes)
        if s.uses_tokens:
            if batch.ids is None or batch.valid is None:
                raise ShapeMismatch(f"{s.kind} needs token ids and a validity mask")
            valid = np.asarray(batch.valid, dtype=bool)
            if batch.ids.shape != valid.shape or batch.ids.shape[0] != len(genes):
                raise ShapeMismatch(f"ids {batch.ids.shape}, mask {valid.shape}, genes {genes.shape}")
            emb = embedding(batch.ids, P["emb"])
            # pad embeddings are zeroed so conv windows see the same zero padding at any length
            emb = emb * valid[..., None].astype(dt)
            att_mask = valid if s.mask_pads else None
        encode = getattr(self, f"_encode_{s.kind.lower()}")
        if s.kind == "DNN":
            x, gene_att, smiles_att = encode(P, g, batch)
        else:
            x, gene_att, smiles_att = encode(P, g, emb, valid, att_mask)
        for i in range(len(s.dense)):
            # no bias here: batch norm's shift plays that role
            x = dense(x, P[f"dense{i}.W"])
            x = batchnorm(x, P[f"bn{i}.gamma"], P[f"bn{i}.beta"], self.buffers[f"bn{i}"], mode)
            x = sigmoid(x)
            x = dropout(x, s.p_drop, mode, rng)
        out = dense(x, P["out.W"], P["out.b"]).reshape(len(genes))
        return ForwardOutput(out, gene_att, smiles_att)

    def _encode_dnn(self, P, g, batch):
        if batch.fingerprints is None or batch.fingerprints.shape[1:] != (self.spec.fp_width,):
            raise ShapeMismatch(f"DNN needs fingerprints of width {self.spec.fp_width}")
        fp = Tensor(np.asarray(batch.fingerprints, dtype=g.dtype))
        return concat([fp, g], axis=1), None, None

    def _encode_brnn(self, P, g, emb, valid, att_mask):
        layers = [{d: (P[f"gru{i}.{d}.Wx"], P[f"gru{i}.{d}.Uh"], P[f"gru{i}.{d}.b"]) for d in ("fw", "bw")}
                  for i in range(self.spec.rnn_layers)]
        state = bigru(emb, valid, layers)
        filtered, alpha = gene_attention(g, P["ga.W"], P["ga.b"])
        return concat([state, filtered], axis=1), alpha.data, None

    def _encode_scnn(self, P, g, emb, valid, att_mask):
        x = emb
        keep = valid[..., None].astype(emb.dtype)
        for i in range(len(self.spec.kernel_widths)):
            # re-zero pads so the next layer sees the same context at any padded length
            x = conv1d(x, P[f"conv{i}.K"], P[f"conv{i}.b"], "sigmoid") * keep
        pooled = masked_max(x, valid)
        filtered, alpha = gene_attention(g, P["ga.W"], P["ga.b"])
        return concat([pooled, filtered], axis=1), alpha.data, None

    def _encode_sa(self, P, g, emb, valid, att_mask):
        pooled, tok = self_attention(emb, att_mask, P["att.We"], P["att.b"], P["att.V"])
        filtered, alpha = gene_attention(g, P["ga.W"], P["ga.b"])
        return concat([pooled, filtered], axis=1), alpha.data, tok.data[:, None, :]

    def _encode_ca(self, P, g, emb, valid, att_mask):
        filtered, alpha = gene_attention(g, P["ga.W"], P["ga.b"])
        pooled, tok = contextual_attention(emb, filtered, att_mask, P["att.We"], P["att.Wg"], P["att.V"])
        return concat([pooled, filtered], axis=1), alpha.data, tok.data[:, None, :]

    def _encode_mca(self, P, g, emb, valid, att_mask):
        s = self.spec
        seqs = [conv1d(emb, P[f"conv{c}.K"], P[f"conv{c}.b"], "relu") for c in range(len(s.kernel_widths))]
        seqs.append(emb)  # residual channel
        pooled, token_maps, gene_maps = [], [], []
        for c, S in enumerate(seqs):
            filtered, alpha = gene_attention(g, P[f"ga{c}.W"], P[f"ga{c}.b"])
            gene_maps.append(alpha.data)
            for h in range(s.m):
                p = f"ch{c}.head{h}"
                vec, tok = contextual_attention(S, filtered, att_mask, P[f"{p}.We"], P[f"{p}.Wg"], P[f"{p}.V"])
                pooled.append(vec)
                token_maps.append(tok.data)
        x = concat(pooled, axis=1)
        return x, np.mean(gene_maps, axis=0), np.stack(token_maps, axis=1)


def concat_width(spec: ModelSpec) -> int:
    """Width of the representation fed to the dense stack."""
    s = spec
    return {
        "DNN": s.fp_width + s.n_genes,
        "bRNN": 2 * s.rnn_hidden + s.n_genes,
        "SCNN": s.channels[-1] + s.n_genes,
        "SA": s.H + s.n_genes,
        "CA": s.H + s.n_genes,
        "MCA": s.mca_concat_width,
    }[s.kind]
