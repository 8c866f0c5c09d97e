"""Command-line entry point: ``pacc <command> [options]``.

Every command writes its outputs and a ``manifest.txt`` under ``--out``.
Exit status is 0 on success, 1 for usage errors and 2 for data errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    aggregate_gene_attention,
    attention_structure_correlation,
    collect_profiles,
    ora_enrichment,
    read_gmt,
    read_profiles_tsv,
    write_correlation_tsv,
    write_enrichment_tsv,
    write_profiles_tsv,
)
from .chem import Vocabulary, morgan_fingerprint, parse_smiles, tokenize
from .chem.io import read_smiles_tsv, write_fingerprints_tsv
from .data import (
    Dataset,
    SplitPlan,
    build_drug_record,
    lenient_split,
    read_expression_tsv,
    read_responses_tsv,
    strict_split,
)
from .models import ModelSpec
from .netprop import build_panel, read_edge_list, read_target_map, write_panel, write_topk
from .train import Checkpoint, FoldData, TrainConfig, ensemble_predict, metrics, train

logger = logging.getLogger("pacc")


class UsageError(Exception):
    pass


class DataError(ValueError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def threads() -> int:
    raw = os.environ.get("PACC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"PACC_THREADS must be an integer, got {raw!r}") from None


# -- config handling ----------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"--config {path}:{lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def _overrides(items, prefix) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        if key.startswith(prefix):
            out[key[len(prefix):]] = value
    return out


def config_hash(args: argparse.Namespace) -> str:
    items = sorted((k, str(v)) for k, v in vars(args).items() if k not in ("func", "out"))
    return hashlib.sha256("\n".join(f"{k}={v}" for k, v in items).encode()).hexdigest()


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, args: argparse.Namespace, inputs: dict[str, str], outputs: list[str]) -> None:
    lines = [
        "tool = pacc",
        f"version = {__version__}",
        f"command = {args.command}",
        f"config_hash = {config_hash(args)}",
        f"seed = {args.seed}",
        f"threads = {threads()}",
    ]
    for key, value in sorted(vars(args).items()):
        if key not in ("func", "out", "command"):
            lines.append(f"arg.{key} = {value}")
    for flag, path in sorted(inputs.items()):
        lines.append(f"input.{flag} = {path} sha256:{_file_digest(path)}")
    lines += [f"output = {name}" for name in sorted(outputs)]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require(args, *flags) -> dict[str, str]:
    """Check that file flags are set and exist; return {flag: path}."""
    found = {}
    for flag in flags:
        value = getattr(args, flag)
        if value is None:
            raise UsageError(f"--{flag.replace('_', '-')} is required")
        paths = value if isinstance(value, list) else [value]
        for i, p in enumerate(paths):
            if not Path(p).is_file():
                raise UsageError(f"--{flag.replace('_', '-')}: no such file {p}")
            found[flag if len(paths) == 1 else f"{flag}[{i}]"] = p
    return found


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_propagate(args):
    inputs = _require(args, "ppi", "targets")
    net = read_edge_list(args.ppi)
    panel = build_panel(net, read_target_map(args.targets), alpha=args.alpha, k=args.k, tol=args.tol,
                        max_iter=args.max_iter, workers=threads())
    out = _outdir(args)
    write_panel(out / "panel.txt", panel)
    write_topk(out / "topk.tsv", panel)
    (out / "skipped.txt").write_text("".join(d + "\n" for d in panel.skipped), encoding="utf-8")
    return out, inputs, ["panel.txt", "topk.tsv", "skipped.txt"]


def cmd_tokenize(args):
    inputs = _require(args, "smiles")
    smiles = read_smiles_tsv(args.smiles)
    tokens = {d: tokenize(s) for d, s in smiles.items()}
    vocab = Vocabulary(t for toks in tokens.values() for t in toks)
    out = _outdir(args)
    with open(out / "tokens.tsv", "w", encoding="utf-8") as fh:
        fh.write("drug_id\ttokens\n")
        for d, toks in tokens.items():
            fh.write(f"{d}\t{' '.join(toks)}\n")
    (out / "vocab.txt").write_text(vocab.to_text(), encoding="utf-8")
    return out, inputs, ["tokens.tsv", "vocab.txt"]


def cmd_augment(args):
    inputs = _require(args, "smiles")
    smiles = read_smiles_tsv(args.smiles)
    records = {d: build_drug_record(d, s, n_variants=args.n, seed=args.seed) for d, s in smiles.items()}
    out = _outdir(args)
    with open(out / "augmented.tsv", "w", encoding="utf-8") as fh:
        fh.write("drug_id\tvariant\tsmiles\n")
        for d, rec in records.items():
            for i, s in enumerate(rec.variant_smiles()):
                fh.write(f"{d}\t{i}\t{s}\n")
    return out, inputs, ["augmented.tsv"]


def cmd_fingerprint(args):
    inputs = _require(args, "smiles")
    smiles = read_smiles_tsv(args.smiles)
    fps = {d: morgan_fingerprint(parse_smiles(s), args.radius, args.width) for d, s in smiles.items()}
    out = _outdir(args)
    write_fingerprints_tsv(out / "fingerprints.tsv", fps)
    return out, inputs, ["fingerprints.tsv"]


def cmd_split(args):
    inputs = _require(args, "responses")
    rows = read_responses_tsv(args.responses)
    pairs = [(d, c) for d, c, _, _ in rows]
    if args.protocol == "strict":
        plan = strict_split([p[0] for p in pairs], [p[1] for p in pairs], pairs, args.seed)
    else:
        plan = lenient_split(pairs, args.seed)
    out = _outdir(args)
    (out / "split.txt").write_text(plan.to_text(), encoding="utf-8")
    summary = "".join(f"{k} = {v}\n" for k, v in plan.summary().items())
    (out / "split_summary.txt").write_text(summary, encoding="utf-8")
    return out, inputs, ["split.txt", "split_summary.txt"]


def _load_dataset(args) -> Dataset:
    smiles = read_smiles_tsv(args.smiles)
    panel = None
    if getattr(args, "panel", None):
        panel = [g for g in Path(args.panel).read_text(encoding="utf-8").split() if g]
    genes, cells = read_expression_tsv(args.expression, panel)
    rows = read_responses_tsv(args.responses) if getattr(args, "responses", None) else []
    return Dataset.build(smiles, genes, cells, rows, n_variants=args.variants, seed=args.seed,
                         max_len=getattr(args, "max_len", None))


def _pairs_for(plan: SplitPlan, subset: str):
    if subset == "test":
        return plan.test
    name, _, k = subset.partition(":")
    if name not in ("train", "validation") or not k.isdigit() or int(k) >= len(plan.folds):
        raise UsageError(f"--subset must be test, train:K or validation:K, got {subset!r}")
    fold = plan.folds[int(k)]
    return fold.train if name == "train" else fold.validation


def _read_plan(args, dataset: Dataset) -> SplitPlan:
    return SplitPlan.from_text(Path(args.split).read_text(encoding="utf-8"), [p.key for p in dataset.pairs])


def cmd_train(args):
    inputs = _require(args, "smiles", "expression", "responses", "split")
    if args.panel:
        inputs.update(_require(args, "panel"))
    dataset = _load_dataset(args)
    plan = _read_plan(args, dataset)
    if not 0 <= args.fold < len(plan.folds):
        raise UsageError(f"--fold must lie in [0, {len(plan.folds)})")
    fold = plan.folds[args.fold]
    cfg_raw = {**args.train_config, **_overrides(args.set, "train."), "seed": args.seed}
    cfg = TrainConfig.from_mapping(cfg_raw)
    data = FoldData.prepare(dataset, fold.train, fold.validation)
    model_raw = {**args.model_config, **_overrides(args.set, "model.")}
    spec = ModelSpec.from_mapping({**model_raw, "kind": args.kind, "vocab_size": len(data.vocab),
                                   "n_genes": len(data.genes), "max_len": data.max_len,
                                   "fp_width": data.store.fingerprints.shape[1]})
    result = train(spec, data, cfg, threads=threads())
    out = _outdir(args)
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    names = []
    for rank, ck in enumerate(result.checkpoints):
        name = f"checkpoints/rank{rank:02d}_step{ck.step:07d}.ckpt"
        ck.save(out / name)
        names.append(name)
    (out / "history.csv").write_text(result.history_csv(), encoding="utf-8")
    return out, inputs, names + ["history.csv"]


def _prediction_inputs(args):
    inputs = _require(args, "checkpoint", "smiles", "expression")
    ckpts = [Checkpoint.load(p) for p in args.checkpoint]
    smiles = read_smiles_tsv(args.smiles)
    genes, cells = read_expression_tsv(args.expression, ckpts[0].genes)
    n_variants = args.variants if args.augment_average else 1
    drugs = {d: build_drug_record(d, s, n_variants=n_variants, seed=args.seed,
                                  fp_width=ckpts[0].spec.fp_width) for d, s in smiles.items()}
    return inputs, ckpts, drugs, genes, cells


def cmd_predict(args):
    if args.query_smiles is not None:
        return _predict_single(args)
    inputs, ckpts, drugs, genes, cells = _prediction_inputs(args)
    if args.pairs:
        inputs.update(_require(args, "pairs"))
        rows = read_responses_tsv(args.pairs) if _has_label_header(args.pairs) else _read_pair_list(args.pairs)
        keys = [(r[0], r[1]) for r in rows]
    else:
        keys = [(d, c) for d in sorted(drugs) for c in sorted(cells)]
    for d, c in keys:
        if d not in drugs or c not in cells:
            raise KeyError(f"pair ({d}, {c}) references an unknown drug or cell")
    pred = ensemble_predict(ckpts, drugs, cells, genes, keys, augment_average=args.augment_average)
    out = _outdir(args)
    with open(out / "predictions.tsv", "w", encoding="utf-8") as fh:
        fh.write("drug_id\tcell_id\tlog_ic50_pred\n")
        for (d, c), y in zip(keys, pred):
            fh.write(f"{d}\t{c}\t{float(y)!r}\n")
    return out, inputs, ["predictions.tsv"]


def _predict_single(args):
    from .serve import Predictor, encode_body

    inputs = _require(args, "checkpoint", "expression")
    if len(args.checkpoint) != 1:
        raise UsageError("--query-smiles takes exactly one --checkpoint")
    if (args.cell_id is None) == (args.query_expression is None):
        raise UsageError("--query-smiles needs exactly one of --cell-id or --query-expression")
    ckpt = Checkpoint.load(args.checkpoint[0])
    genes, cells = read_expression_tsv(args.expression, ckpt.genes)
    request = {"smiles": args.query_smiles, "top_k_genes": args.top_k_genes}
    if args.cell_id is not None:
        request["cell_id"] = args.cell_id
    else:
        request["expression"] = [float(v) for v in args.query_expression.split(",")]
    status, body = Predictor(ckpt, genes, cells).query(request)
    out = _outdir(args)
    payload = encode_body({"status": status, **body}).decode()
    (out / "prediction.json").write_text(payload + "\n", encoding="utf-8")
    print(payload)
    if status != 200:
        raise DataError(body.get("detail", body["error"]))
    return out, inputs, ["prediction.json"]


def _has_label_header(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        return fh.readline().rstrip("\n").split("\t") == ["drug_id", "cell_id", "log_ic50"]


def _read_pair_list(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if lineno == 1 and parts[:2] == ["drug_id", "cell_id"]:
                continue
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected drug_id<TAB>cell_id")
            rows.append((parts[0], parts[1]))
    return rows


def cmd_evaluate(args):
    inputs, ckpts, drugs, genes, cells = _prediction_inputs(args)
    inputs.update(_require(args, "responses"))
    rows = read_responses_tsv(args.responses)
    truth = {(d, c): y for d, c, y, _ in rows}
    if args.split:
        inputs.update(_require(args, "split"))
        plan = SplitPlan.from_text(Path(args.split).read_text(encoding="utf-8"), list(truth))
        keys = _pairs_for(plan, args.subset)
    else:
        keys = sorted(truth)
    pred = ensemble_predict(ckpts, drugs, cells, genes, keys, augment_average=args.augment_average)
    report = metrics(pred, np.array([truth[k] for k in keys]), ckpts[0].label_transform)
    out = _outdir(args)
    lines = ["metric\tvalue"] + [f"{k}\t{v!r}" for k, v in report.as_dict().items()]
    (out / "metrics.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out, inputs, ["metrics.tsv"]


def cmd_attention(args):
    action = args.action
    if action == "profiles":
        inputs = _require(args, "checkpoint", "smiles", "expression")
        ckpt = Checkpoint.load(args.checkpoint[0])
        smiles = read_smiles_tsv(args.smiles)
        genes, cells = read_expression_tsv(args.expression, ckpt.genes)
        drugs = {d: build_drug_record(d, s, n_variants=1, fp_width=ckpt.spec.fp_width) for d, s in smiles.items()}
        profiles = collect_profiles(ckpt, drugs, cells, genes)
        out = _outdir(args)
        write_profiles_tsv(out / "profiles.tsv", profiles)
        return out, inputs, ["profiles.tsv"]
    if action == "correlation":
        inputs = _require(args, "profiles", "smiles")
        profiles = read_profiles_tsv(args.profiles)
        smiles = read_smiles_tsv(args.smiles)
        fps = {d: morgan_fingerprint(parse_smiles(s), args.radius, args.width) for d, s in smiles.items()}
        result = attention_structure_correlation(profiles, fps, mode=args.mode, workers=threads())
        out = _outdir(args)
        write_correlation_tsv(out / "correlation.tsv", result)
        return out, inputs, ["correlation.tsv"]
    if action == "genes":
        inputs = _require(args, "profiles", "checkpoint")
        panel = Checkpoint.load(args.checkpoint[0]).genes
        attended = aggregate_gene_attention(read_profiles_tsv(args.profiles), panel)
        out = _outdir(args)
        (out / "attended_genes.txt").write_text("".join(g + "\n" for g in attended), encoding="utf-8")
        return out, inputs, ["attended_genes.txt"]
    inputs = _require(args, "attended", "gene_sets", "universe")
    attended = Path(args.attended).read_text(encoding="utf-8").split()
    universe = Path(args.universe).read_text(encoding="utf-8").split()
    results = ora_enrichment(attended, read_gmt(args.gene_sets), universe)
    out = _outdir(args)
    write_enrichment_tsv(out / "enrichment.tsv", results)
    return out, inputs, ["enrichment.tsv"]


def cmd_serve(args):
    from .serve import Predictor, make_server

    _require(args, "checkpoint", "expression")
    ckpt = Checkpoint.load(args.checkpoint[0])
    genes, cells = read_expression_tsv(args.expression, ckpt.genes)
    server = make_server(Predictor(ckpt, genes, cells), args.host, args.port)
    logger.info("serving on http://%s:%d", args.host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return None, {}, []


# -- parser -------------------------------------------------------------------


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="pacc_run", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = Parser(prog="pacc", description="Drug-sensitivity prediction from SMILES and gene expression.")
    parser.add_argument("--version", action="version", version=f"pacc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("propagate", cmd_propagate, "build the gene panel by network propagation")
    p.add_argument("--ppi", help="edge list: gene_a<TAB>gene_b<TAB>weight")
    p.add_argument("--targets", help="drug_id<TAB>gene,gene,...")
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10_000)

    p = add("tokenize", cmd_tokenize, "tokenize SMILES and write the vocabulary")
    p.add_argument("--smiles", help="drug_id<TAB>smiles")

    p = add("augment", cmd_augment, "canonical plus randomized SMILES per compound")
    p.add_argument("--smiles")
    p.add_argument("--n", type=int, default=32, help="strings per compound, canonical included")

    p = add("fingerprint", cmd_fingerprint, "circular fingerprints as hex")
    p.add_argument("--smiles")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--radius", type=int, default=2)

    p = add("split", cmd_split, "write a strict or lenient cross-validation plan")
    p.add_argument("--responses", help="drug_id<TAB>cell_id<TAB>log_ic50")
    p.add_argument("--protocol", choices=("strict", "lenient"), default="strict")

    def data_flags(p, responses=True):
        p.add_argument("--smiles")
        p.add_argument("--expression", help="cell_id<TAB>gene... matrix")
        if responses:
            p.add_argument("--responses")
        p.add_argument("--variants", type=int, default=32, help="SMILES strings per compound")

    p = add("train", cmd_train, "train one fold of a split plan")
    data_flags(p)
    p.add_argument("--panel", help="gene panel file (one gene per line)")
    p.add_argument("--split")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--kind", choices=("DNN", "bRNN", "SCNN", "SA", "CA", "MCA"), default="MCA")
    p.add_argument("--max-len", type=int)
    p.add_argument("--set", action="append", metavar="model.KEY=V|train.KEY=V",
                   help="override a model or training field (repeatable)")

    p = add("predict", cmd_predict, "predict log-IC50 (bulk, or one query)")
    data_flags(p, responses=False)
    p.add_argument("--checkpoint", action="append", help="repeat to ensemble")
    p.add_argument("--pairs", help="pairs to score (drug_id<TAB>cell_id); default all combinations")
    p.add_argument("--augment-average", action="store_true")
    p.add_argument("--query-smiles", help="score one compound and print the JSON response")
    p.add_argument("--cell-id")
    p.add_argument("--query-expression", help="comma-separated panel values")
    p.add_argument("--top-k-genes", type=int, default=10)

    p = add("evaluate", cmd_evaluate, "metrics of checkpoint predictions against responses")
    data_flags(p)
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--split")
    p.add_argument("--subset", default="test", help="test, train:K or validation:K")
    p.add_argument("--augment-average", action="store_true")

    p = add("attention", cmd_attention, "attention profiles, correlation, gene filter, enrichment")
    p.add_argument("action", choices=("profiles", "correlation", "genes", "enrich"))
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--smiles")
    p.add_argument("--expression")
    p.add_argument("--profiles")
    p.add_argument("--mode", choices=("token", "gene"), default="token")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--attended", help="one gene per line")
    p.add_argument("--gene-sets", help="GMT file")
    p.add_argument("--universe", help="one gene per line")

    p = add("serve", cmd_serve, "HTTP prediction endpoint")
    p.add_argument("--checkpoint", action="append")
    p.add_argument("--expression")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.model_config, args.train_config = {}, {}
    if args.config:
        if not Path(args.config).is_file():
            parser.error(f"--config: no such file {args.config}")
        try:
            raw = read_config(args.config)
        except UsageError as exc:
            parser.error(str(exc))
        plain = {}
        for key, value in raw.items():
            if key.startswith("model."):
                args.model_config[key[6:]] = value
            elif key.startswith("train."):
                args.train_config[key[6:]] = value
            else:
                plain[key.replace("-", "_")] = value
        # re-parse with config values as defaults so explicit flags win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        for key, value in plain.items():
            if key not in known or key in ("help", "config"):
                parser.error(f"--config: unknown key {key!r} for {args.command}")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                value = value.lower() in ("1", "true", "yes")
            elif action.type is not None:
                try:
                    value = action.type(value)
                except ValueError:
                    parser.error(f"--config: bad value for {key}: {value!r}")
            elif isinstance(action, argparse._AppendAction):
                value = [v.strip() for v in value.split(",")]
            sub.set_defaults(**{key: value})
        model_config, train_config = args.model_config, args.train_config
        args = parser.parse_args(argv)
        args.model_config, args.train_config = model_config, train_config
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads()
        out, inputs, outputs = args.func(args)
    except UsageError as exc:
        print(f"pacc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, ArithmeticError) as exc:
        print(f"pacc {args.command}: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if out is not None:
        write_manifest(out, args, inputs, outputs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
