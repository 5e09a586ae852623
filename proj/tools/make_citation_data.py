#!/usr/bin/env python3
"""Convert planetoid pickle files into the raw content/cites text format.

Expects the eight files ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}
in the input directory.  Emits <name>.content and <name>.cites laid out so
the fixed benchmark split holds by construction: the first 20 * num_classes
nodes are the training instances, the following 500 the validation
instances, and the last len(test.index) nodes the test instances (sorted by
their graph index).  Featureless nodes that only appear in the graph
structure are placed between the validation and test blocks and labeled
"unlabeled".
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_pickle(in_dir: Path, name: str, ext: str):
    path = in_dir / f"ind.{name}.{ext}"
    if not path.exists():
        sys.exit(f"missing input file: {path}")
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def load_test_index(in_dir: Path, name: str):
    path = in_dir / f"ind.{name}.test.index"
    if not path.exists():
        sys.exit(f"missing input file: {path}")
    with open(path) as f:
        return [int(line) for line in f if line.strip()]


def fmt(v: float) -> str:
    if v == int(v):
        return str(int(v))
    return f"{v:.10g}"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("name", help="dataset name, e.g. cora, citeseer, pubmed")
    ap.add_argument("--in", dest="in_dir", default=".",
                    help="directory holding the ind.* files")
    ap.add_argument("--out", dest="out_dir", default="data",
                    help="directory for <name>.content and <name>.cites")
    ap.add_argument("--labels", default=None,
                    help="comma-separated class names (default class<i>)")
    args = ap.parse_args()

    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    y = np.asarray(load_pickle(in_dir, args.name, "y"))
    allx = sp.csr_matrix(load_pickle(in_dir, args.name, "allx"))
    ally = np.asarray(load_pickle(in_dir, args.name, "ally"))
    tx = sp.csr_matrix(load_pickle(in_dir, args.name, "tx"))
    ty = np.asarray(load_pickle(in_dir, args.name, "ty"))
    graph = load_pickle(in_dir, args.name, "graph")
    test_index = load_test_index(in_dir, args.name)

    num_classes = ally.shape[1]
    num_train = len(y)
    if num_train != 20 * num_classes:
        print(f"warning: train block is {num_train}, not 20*{num_classes}",
              file=sys.stderr)
    if len(test_index) != tx.shape[0]:
        sys.exit("test.index length does not match tx rows")

    n_all = allx.shape[0]
    test_sorted = sorted(test_index)
    full_range = range(min(test_sorted), max(test_sorted) + 1)
    missing = sorted(set(full_range) - set(test_index))
    order = list(range(n_all)) + missing + test_sorted
    num_nodes = max(max(graph) + 1, max(test_sorted) + 1)
    if len(order) != num_nodes:
        sys.exit(f"node count mismatch: {len(order)} ordered vs {num_nodes} in graph")

    pos_in_tx = {g: i for i, g in enumerate(test_index)}
    label_names = (args.labels.split(",") if args.labels
                   else [f"class{i}" for i in range(num_classes)])
    if len(label_names) != num_classes:
        sys.exit(f"expected {num_classes} label names")

    dim = allx.shape[1]
    content_path = out_dir / f"{args.name}.content"
    with open(content_path, "w") as f:
        for g in order:
            if g < n_all:
                feats = allx.getrow(g).toarray().ravel()
                onehot = ally[g]
            elif g in pos_in_tx:
                feats = tx.getrow(pos_in_tx[g]).toarray().ravel()
                onehot = ty[pos_in_tx[g]]
            else:
                feats = np.zeros(dim)
                onehot = None
            if onehot is None or onehot.sum() == 0:
                label = "unlabeled"
            else:
                label = label_names[int(np.argmax(onehot))]
            f.write(f"n{g} " + " ".join(fmt(v) for v in feats) + f" {label}\n")

    cites_path = out_dir / f"{args.name}.cites"
    edge_count = 0
    with open(cites_path, "w") as f:
        for u in sorted(graph):
            for v in sorted(graph[u]):
                if u == v:
                    continue
                f.write(f"n{u} n{v}\n")
                edge_count += 1

    print(f"{args.name}: {len(order)} nodes, {edge_count} edge lines, "
          f"{num_classes} classes, {len(missing)} featureless")
    print(f"splits: train 0..{num_train - 1}, val {num_train}.."
          f"{num_train + 499}, test last {len(test_sorted)}")
    print(f"wrote {content_path} and {cites_path}")


if __name__ == "__main__":
    main()
