"""JSON-over-HTTP prediction endpoint.

``POST /v1/predict`` takes ``{"smiles": ..., "cell_id": ...}`` or
``{"smiles": ..., "expression": [...]}`` (plus optional ``top_k_genes``);
``GET /v1/health`` reports the loaded checkpoint's manifest hash.
"""
from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Sequence

import numpy as np

from .chem import SmilesError, TokenizationGap, canonical_form, morgan_fingerprint, parse_smiles, tokenize
from .data import CellRecord
from .models import Batch
from .train import Checkpoint, PanelMismatch

logger = logging.getLogger(__name__)


class Predictor:
    """Immutable model snapshot plus expression table; safe to share across threads."""

    def __init__(self, ckpt: Checkpoint, genes: Sequence[str], cells: Mapping[str, CellRecord]):
        if list(genes) != list(ckpt.genes):
            raise PanelMismatch("expression table panel differs from the checkpoint's panel")
        self.ckpt = ckpt
        self.model = ckpt.model()
        self.genes = list(genes)
        self.cells = dict(cells)
        self.manifest_hash = ckpt.manifest_hash

    def health(self) -> dict:
        return {"status": "ok", "manifest_sha256": self.manifest_hash, "model": self.ckpt.spec.kind}

    def query(self, request) -> tuple[int, dict]:
        """Return (HTTP status, JSON body) for a decoded request object."""
        if not isinstance(request, dict):
            return 400, {"error": "request body must be a JSON object"}
        smiles = request.get("smiles")
        if not isinstance(smiles, str):
            return 400, {"error": "field 'smiles' (string) is required"}
        has_cell, has_expr = "cell_id" in request, "expression" in request
        if has_cell == has_expr:
            return 400, {"error": "give exactly one of 'cell_id' or 'expression'"}
        top_k = request.get("top_k_genes", 10)
        if isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1:
            return 400, {"error": "'top_k_genes' must be a positive integer"}
        try:
            canonical = canonical_form(parse_smiles(smiles))
            tokens = tokenize(canonical)
        except (SmilesError, TokenizationGap) as exc:
            return 400, {"error": "invalid SMILES", "detail": f"{type(exc).__name__}: {exc}"}
        unknown = [t for t in tokens if t not in self.ckpt.vocab]
        if unknown:
            return 400, {"error": "SMILES uses tokens outside the model vocabulary", "detail": str(unknown[:5])}
        if len(tokens) > self.ckpt.spec.max_len:
            return 400, {"error": f"SMILES has {len(tokens)} tokens; the model accepts {self.ckpt.spec.max_len}"}
        if has_cell:
            cell = request["cell_id"]
            if not isinstance(cell, str) or cell not in self.cells:
                return 404, {"error": f"unknown cell_id {cell!r}"}
            raw = self.cells[cell].expression
        else:
            values = request["expression"]
            if not isinstance(values, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
                return 400, {"error": "'expression' must be a list of numbers"}
            if len(values) != len(self.genes):
                return 422, {"error": f"expression has {len(values)} values; the panel has {len(self.genes)} genes"}
            raw = np.array(values, dtype=np.float64)
            if not np.all(np.isfinite(raw)):
                return 400, {"error": "'expression' contains non-finite values"}
        return 200, self._predict(canonical, tokens, raw, top_k)

    def _predict(self, canonical: str, tokens: list[str], raw: np.ndarray, top_k: int) -> dict:
        T = self.ckpt.spec.max_len
        ids = self.ckpt.vocab.encode_array(tokens, T)[None, :]
        valid = np.zeros((1, T), dtype=bool)
        valid[0, : len(tokens)] = True
        fp = parse_fingerprint(canonical, self.ckpt.spec.fp_width)
        genes = self.ckpt.expression_transform.apply(raw[None, :])
        out = self.model.forward(Batch(genes=genes, ids=ids, valid=valid, fingerprints=fp), "eval")
        z = float(out.values[0])
        body = {
            "smiles": canonical,
            "ic50_log": float(self.ckpt.label_transform.invert(z)),
            "ic50_normalized": z,
            "gene_attention": [],
            "token_attention": [],
        }
        if out.gene_attention is not None:
            weights = out.gene_attention[0]
            order = sorted(range(len(self.genes)), key=lambda i: (-weights[i], self.genes[i]))[:top_k]
            body["gene_attention"] = [[self.genes[i], float(weights[i])] for i in order]
        if out.smiles_attention is not None:
            token_w = out.smiles_attention[0].mean(axis=0)
            body["token_attention"] = [[t, float(w)] for t, w in zip(tokens, token_w)]
        return body


def parse_fingerprint(smiles: str, width: int) -> np.ndarray:
    return morgan_fingerprint(parse_smiles(smiles), 2, width).to_array(np.float64)[None, :]


def encode_body(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, allow_nan=False).encode()


def make_handler(predictor: Predictor):
    class Handler(BaseHTTPRequestHandler):
        server_version = "pacc"

        def _send(self, status: int, body: dict):
            payload = encode_body(body)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            if self.path == "/v1/health":
                self._send(200, predictor.health())
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def do_POST(self):
            if self.path != "/v1/predict":
                self._send(404, {"error": f"no route {self.path}"})
                return
            ctype = self.headers.get("Content-Type", "")
            if ctype.split(";")[0].strip().lower() != "application/json":
                self._send(415, {"error": "Content-Type must be application/json"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            try:
                request = json.loads(self.rfile.read(length) or b"null")
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                self._send(400, {"error": "body is not valid JSON", "detail": str(exc)})
                return
            status, body = predictor.query(request)
            self._send(status, body)

        def log_message(self, fmt, *args):
            logger.info("%s %s", self.address_string(), fmt % args)

    return Handler


def make_server(predictor: Predictor, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(predictor))

