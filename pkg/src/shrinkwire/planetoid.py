"""Convert a public Planetoid archive into the plain-text dataset layout.

The archive holds ``ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}``.
These are Python pickles, so only run this on archives from a source you
trust. Usage::

    python -m shrinkwire.planetoid SRC_DIR NAME OUT_DIR

Node order follows the usual convention: ``allx`` rows first, then the test
rows placed at the positions listed in ``test.index``. Test positions that
never appear in ``test.index`` (Citeseer has some) get zero features and
class 0, and are counted in a warning.
"""

from __future__ import annotations

import argparse
import logging
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import RawGraphData, save_citation
from .errors import FormatError
from .graph import clean_edges

log = logging.getLogger(__name__)


def _load(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(m) -> np.ndarray:
    return np.asarray(m.todense() if sp.issparse(m) else m, dtype=float)


def read_planetoid(src_dir: str | Path, name: str) -> RawGraphData:
    d = Path(src_dir)
    parts = {}
    for key in ("x", "tx", "allx", "y", "ty", "ally", "graph"):
        p = d / f"ind.{name}.{key}"
        if not p.is_file():
            raise FileNotFoundError(f"missing archive file {p}")
        parts[key] = _load(p)
    idx_path = d / f"ind.{name}.test.index"
    if not idx_path.is_file():
        raise FileNotFoundError(f"missing archive file {idx_path}")
    test_idx = np.array([int(t) for t in idx_path.read_text().split()], dtype=np.int64)

    allx, tx = _dense(parts["allx"]), _dense(parts["tx"])
    ally, ty = _dense(parts["ally"]), _dense(parts["ty"])
    if len(test_idx) != tx.shape[0] or ty.shape[0] != tx.shape[0]:
        raise FormatError("test.index, tx and ty disagree in length")

    lo, hi = int(test_idx.min()), int(test_idx.max())
    n = max(allx.shape[0], hi + 1)
    if lo < allx.shape[0]:
        raise FormatError("test.index overlaps the allx rows")
    features = np.zeros((n, allx.shape[1]))
    onehot = np.zeros((n, ally.shape[1]))
    features[: allx.shape[0]] = allx
    onehot[: ally.shape[0]] = ally
    features[test_idx] = tx
    onehot[test_idx] = ty

    unlabeled = int(np.sum(onehot.sum(axis=1) == 0))
    if unlabeled:
        log.warning("%s: %d nodes without a label were assigned class 0", name, unlabeled)
    labels = onehot.argmax(axis=1)

    edges = []
    for i, nbrs in parts["graph"].items():
        for j in nbrs:
            if int(i) < n and int(j) < n:
                edges.append((int(i), int(j), 1.0))
    graph, dropped = clean_edges(n, False, edges)
    log.info("%s: %d nodes, %d edges, %d duplicates dropped", name, n, graph.m, dropped)
    return RawGraphData(graph, features, labels, onehot.shape[1])


def convert(src_dir: str | Path, name: str, out_dir: str | Path) -> RawGraphData:
    data = read_planetoid(src_dir, name)
    save_citation(out_dir, name, data)
    return data


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m shrinkwire.planetoid", description=__doc__.split("\n")[0])
    ap.add_argument("src_dir")
    ap.add_argument("name")
    ap.add_argument("out_dir")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        data = convert(args.src_dir, args.name, args.out_dir)
    except (FileNotFoundError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.name}: n={data.n} edges={data.graph.m} classes={data.class_count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
