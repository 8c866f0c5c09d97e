"""Write a synthetic input corpus for trying the command-line tools.

    python scripts/make_toy_data.py --out toy
"""
import argparse

from pacc.synthetic import write_toy_corpus

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="toy")
parser.add_argument("--drugs", type=int, default=30)
parser.add_argument("--cells", type=int, default=30)
parser.add_argument("--genes", type=int, default=12)
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

for role, path in write_toy_corpus(args.out, args.drugs, args.cells, args.genes, args.seed).items():
    print(f"{role}\t{path}")
