"""Train MCA on a 64-pair toy set and report how well it memorizes.

    python scripts/overfit_mca.py --steps 5000 --p-drop 0.0
"""
import argparse
import time

import numpy as np

from pacc.data import Dataset
from pacc.synthetic import toy_response_data
from pacc.train import FoldData, TrainConfig, train
from pacc.train.loop import predict_normalized
from pacc.train.metrics import rmse

parser = argparse.ArgumentParser()
parser.add_argument("--steps", type=int, default=5000)
parser.add_argument("--p-drop", type=float, default=0.0)
parser.add_argument("--lr", type=float, default=1e-3)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

smiles, genes, cells, rows = toy_response_data(8, 8, 6, seed=0)
ds = Dataset.build(smiles, genes, cells, rows, n_variants=1)
keys = [p.key for p in ds.pairs]
fold = FoldData.prepare(ds, keys, keys)
spec = fold.spec("MCA", H=8, f=8, m=2, dense=(32, 16), p_drop=args.p_drop)
cfg = TrainConfig(max_steps=args.steps, batch_size=64, eval_interval=max(1, args.steps // 10),
                  checkpoint_keep=1, seed=args.seed, augment=False, lr=args.lr)
t0 = time.perf_counter()
result = train(spec, fold, cfg)
elapsed = time.perf_counter() - t0
truth = fold.label_transform.apply([p.label for p in fold.train_pairs])
pred = predict_normalized(result.final.model(), fold.store, keys)
print(result.history_csv(), end="")
print(f"pairs={len(keys)} train_rmse={rmse(pred, truth):.5f} seconds={elapsed:.1f}")
