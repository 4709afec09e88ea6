#!/usr/bin/env python3
"""Fetch the seven benchmark graphs and convert them to the repo's plain-text
dataset layout.

Converted layout per dataset (see include/h3gnn/data.hpp):
    data/<name>/nodes.txt     <id>\t<features>\t<label>
    data/<name>/edges.txt     <u> <v>
    data/<name>/splits.txt    <split> <train|val|test> <ids...>   (webkb/actor)
    data/<name>/manifest.txt  seed manifest; `h3gnn prepare <name>` completes it

Sources (the published releases):
  * cornell / texas / wisconsin / actor: the geom-gcn repository
    (new_data/<name>/out1_node_feature_label.txt, out1_graph_edges.txt and
    splits/<name>_split_0.6_0.2_<i>.npz; actor is published as "film").
  * cora / citeseer / pubmed: the planetoid repository index files
    (ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}).

Usage:
    python3 scripts/fetch_datasets.py [--data-dir data] [--only cornell,...]
    python3 scripts/fetch_datasets.py --raw-dir /path/to/mirror   # offline

--raw-dir expects the same file names under <raw-dir>/geom-gcn/... and
<raw-dir>/planetoid/... and skips all network access. After converting, run
`h3gnn prepare <name>` for every dataset to validate and write checksums.
"""

import argparse
import io
import pickle
import sys
import urllib.request
from collections import defaultdict
from pathlib import Path

GEOM_GCN_BASE = "https://raw.githubusercontent.com/graphdml-uiuc-jlu/geom-gcn/master"
PLANETOID_BASE = "https://github.com/kimiyoung/planetoid/raw/master/data"

WEBKB = {"cornell": "cornell", "texas": "texas", "wisconsin": "wisconsin", "actor": "film"}
PLANETOID = ["cora", "citeseer", "pubmed"]
PLANETOID_PARTS = ["x", "y", "tx", "ty", "allx", "ally", "graph", "test.index"]


def fetch(url: str, raw_path: Path | None) -> bytes:
    if raw_path is not None:
        if not raw_path.exists():
            sys.exit(f"missing raw file: {raw_path}")
        return raw_path.read_bytes()
    print(f"  GET {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def convert_webkb(name: str, remote: str, out_dir: Path, raw_dir: Path | None) -> None:
    print(f"[{name}]")
    raw = lambda rel: (raw_dir / "geom-gcn" / rel) if raw_dir else None  # noqa: E731

    nodes_bytes = fetch(f"{GEOM_GCN_BASE}/new_data/{remote}/out1_node_feature_label.txt",
                        raw(f"new_data/{remote}/out1_node_feature_label.txt"))
    edges_bytes = fetch(f"{GEOM_GCN_BASE}/new_data/{remote}/out1_graph_edges.txt",
                        raw(f"new_data/{remote}/out1_graph_edges.txt"))

    out_dir.mkdir(parents=True, exist_ok=True)
    node_lines = nodes_bytes.decode().splitlines()
    with open(out_dir / "nodes.txt", "w") as f:
        for line in node_lines[1:]:  # drop the header
            if not line.strip():
                continue
            node_id, feature, label = line.split("\t")
            f.write(f"{node_id}\t{feature}\t{label}\n")

    edge_lines = edges_bytes.decode().splitlines()
    with open(out_dir / "edges.txt", "w") as f:
        for line in edge_lines[1:]:
            if not line.strip():
                continue
            u, v = line.split()
            f.write(f"{u} {v}\n")

    import numpy as np

    with open(out_dir / "splits.txt", "w") as f:
        for i in range(10):
            rel = f"splits/{remote}_split_0.6_0.2_{i}.npz"
            blob = fetch(f"{GEOM_GCN_BASE}/{rel}", raw(rel))
            with np.load(io.BytesIO(blob)) as npz:
                for role, key in (("train", "train_mask"), ("val", "val_mask"),
                                  ("test", "test_mask")):
                    ids = [str(j) for j, m in enumerate(npz[key]) if m]
                    f.write(f"{i} {role} {' '.join(ids)}\n")

    fmt = "indices" if name == "actor" else "dense"
    (out_dir / "manifest.txt").write_text(f"feature_format = {fmt}\n")
    print(f"  wrote {out_dir}")


def load_planetoid_part(name: str, part: str, raw_dir: Path | None):
    rel = f"ind.{name}.{part}"
    blob = fetch(f"{PLANETOID_BASE}/{rel}",
                 (raw_dir / "planetoid" / rel) if raw_dir else None)
    if part == "test.index":
        return [int(tok) for tok in blob.decode().split()]
    return pickle.loads(blob, encoding="latin1")


def convert_planetoid(name: str, out_dir: Path, raw_dir: Path | None) -> None:
    import numpy as np
    import scipy.sparse as sp

    print(f"[{name}]")
    parts = {p: load_planetoid_part(name, p, raw_dir) for p in PLANETOID_PARTS}
    test_idx = parts["test.index"]        # file order
    test_sorted = sorted(test_idx)
    full_range = list(range(min(test_idx), max(test_idx) + 1))

    allx, tx = sp.csr_matrix(parts["allx"]), sp.csr_matrix(parts["tx"])
    ally, ty = np.asarray(parts["ally"]), np.asarray(parts["ty"])

    if len(test_idx) != len(full_range):
        # some test ids are absent from the published files (citeseer):
        # pad the extension with zero rows at the missing positions
        tx_ext = sp.lil_matrix((len(full_range), allx.shape[1]))
        tx_ext[[i - min(test_idx) for i in test_sorted], :] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((len(full_range), ally.shape[1]))
        ty_ext[[i - min(test_idx) for i in test_sorted], :] = ty
        ty = ty_ext

    # rows of tx/ty are in sorted-id order; move them to their true positions
    features = sp.vstack([allx, tx]).tolil()
    features[test_idx, :] = features[test_sorted, :]
    features = features.tocsr()
    labels = np.vstack([ally, ty])
    labels[test_idx, :] = labels[test_sorted, :]
    label_ids = labels.argmax(axis=1)

    out_dir.mkdir(parents=True, exist_ok=True)
    n = features.shape[0]
    with open(out_dir / "nodes.txt", "w") as f:
        for i in range(n):
            row = features.getrow(i)
            pairs = ",".join(f"{j}:{v:.17g}" for j, v in zip(row.indices, row.data))
            f.write(f"{i}\t{pairs}\t{int(label_ids[i])}\n")

    graph = defaultdict(list, parts["graph"])
    with open(out_dir / "edges.txt", "w") as f:
        for u in sorted(graph):
            for v in graph[u]:
                f.write(f"{u} {v}\n")

    (out_dir / "manifest.txt").write_text("feature_format = sparse\n")
    print(f"  wrote {out_dir} ({n} nodes, {features.shape[1]} features)")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default="data", help="output root (default: data)")
    ap.add_argument("--only", default="", help="comma-separated subset of dataset names")
    ap.add_argument("--raw-dir", default="",
                    help="offline mode: read raw files from this mirror instead of the network")
    args = ap.parse_args()

    data_dir = Path(args.data_dir)
    raw_dir = Path(args.raw_dir) if args.raw_dir else None
    only = {s.strip() for s in args.only.split(",") if s.strip()}

    names = list(WEBKB) + PLANETOID
    for name in names:
        if only and name not in only:
            continue
        out = data_dir / name
        if name in WEBKB:
            convert_webkb(name, WEBKB[name], out, raw_dir)
        else:
            convert_planetoid(name, out, raw_dir)

    print("\nconversion done; validate and checksum each dataset with:")
    for name in names:
        if only and name not in only:
            continue
        print(f"  h3gnn prepare {name} --data-dir {data_dir}")


if __name__ == "__main__":
    main()
