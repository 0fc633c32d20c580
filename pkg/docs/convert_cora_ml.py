"""Convert a ``cora_ml.npz`` graph file to the holograph dataset directory format.

The ``.npz`` layout is the one used by the common citation-network
distributions (CSR arrays ``adj_*`` and ``attr_*`` plus ``labels``)::

    python docs/convert_cora_ml.py cora_ml.npz data/cora_ml

Writes ``edges.tsv``, ``features.csv``, ``labels.csv`` and ``counts.json``.
The counts describe the graph after the loader's cleaning rules
(symmetrise, drop self-loops and duplicates, then drop nodes that have no
edges or an all-zero feature row) so a later load can be checked against
them.
"""

import argparse
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_npz(path):
    with np.load(path, allow_pickle=True) as z:
        adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=tuple(z["adj_shape"]))
        if "attr_data" in z:
            attr = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]),
                                 shape=tuple(z["attr_shape"]))
        else:
            attr = sp.csr_matrix(z["attr_matrix"])
        labels = np.asarray(z["labels"], dtype=np.int64)
    return adj, attr, labels


def cleaned_counts(adj, attr, labels):
    sym = ((adj + adj.T) > 0).astype(np.int8).tolil()
    sym.setdiag(0)
    sym = sym.tocsr()
    sym.eliminate_zeros()
    keep = (np.asarray(sym.sum(axis=1)).ravel() > 0) & (attr.getnnz(axis=1) > 0)
    sub = sym[keep][:, keep]
    return {
        "num_nodes": int(keep.sum()),
        "num_edges": int(sub.nnz // 2),
        "num_features": int(attr.shape[1]),
        "num_classes": int(labels[keep].max() + 1),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("npz")
    ap.add_argument("out_dir")
    args = ap.parse_args()
    adj, attr, labels = load_npz(args.npz)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    upper = sp.triu(((adj + adj.T) > 0).astype(np.int8), k=1).tocoo()
    with open(out / "edges.tsv", "w", newline="\n") as fh:
        for u, v in sorted(zip(upper.row.tolist(), upper.col.tolist())):
            fh.write(f"{u}\t{v}\n")
    dense = attr.toarray()
    with open(out / "features.csv", "w", newline="\n") as fh:
        for row in dense:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out / "labels.csv", "w", newline="\n") as fh:
        fh.writelines(f"{int(c)}\n" for c in labels)
    counts = cleaned_counts(adj, attr, labels)
    (out / "counts.json").write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n")
    print(json.dumps(counts))


if __name__ == "__main__":
    main()
