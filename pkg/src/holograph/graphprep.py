"""Graph ingestion and conversion of nodes into optical input fields.

Pipeline: load -> PCA to ``d`` features -> min-max normalise to ``[0, 1]``
-> for each node pick its top-``k`` nodes by approximate personalized
PageRank (push algorithm) -> place the ``k x d`` block in the centre of an
``n x n`` zero field (amplitude = feature value, phase = 0 or
``pi/2 * score``).
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from holograph.errors import (
    FormatError,
    InvalidArgumentError,
    LabelRangeError,
    MissingFileError,
    NodeIdError,
    ParseError,
)
from holograph.field import ComplexField, GridSpec
from holograph.rng import rng_stream

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.csv"


@dataclass(eq=False)
class Graph:
    """Undirected graph in CSR form (sorted, deduplicated, no self-loops)."""

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    original_ids: np.ndarray = None

    def __post_init__(self):
        V = self.num_nodes
        if self.features.shape[0] != V or self.labels.shape[0] != V:
            raise InvalidArgumentError("features and labels need one row per node")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("feature matrix contains non-finite values")
        if self.original_ids is None:
            self.original_ids = np.arange(V)

    @property
    def num_nodes(self) -> int:
        return self.indptr.size - 1

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.indices.size // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @classmethod
    def from_edges(cls, num_nodes: int, edges, features, labels, num_classes: int | None = None) -> "Graph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            raise InvalidArgumentError("edge endpoint outside [0, num_nodes)")
        edges = edges[edges[:, 0] != edges[:, 1]]
        both = np.concatenate([edges, edges[:, ::-1]])
        both = np.unique(both, axis=0) if both.size else both.reshape(0, 2)
        counts = np.bincount(both[:, 0], minlength=num_nodes) if both.size else np.zeros(num_nodes, int)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(
            indptr=indptr,
            indices=both[:, 1].astype(np.int64),
            features=np.asarray(features, dtype=np.float64),
            labels=labels,
            num_classes=num_classes,
        )

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def subgraph(self, keep: np.ndarray) -> "Graph":
        keep = np.asarray(keep, dtype=np.int64)
        remap = -np.ones(self.num_nodes, dtype=np.int64)
        remap[keep] = np.arange(keep.size)
        e = self.edge_array()
        e = remap[e]
        e = e[(e >= 0).all(axis=1)]
        g = Graph.from_edges(keep.size, e, self.features[keep], self.labels[keep], self.num_classes)
        g.original_ids = self.original_ids[keep]
        return g


# --- dataset files --------------------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingFileError("file not found", path=path)
    return path.read_text(encoding="utf-8").split("\n")


def load_dataset(dir_path, drop_isolated: bool = True) -> Graph:
    """Read ``edges.tsv``, ``features.csv`` and ``labels.csv`` from a directory.

    Edges are symmetrised and deduplicated, self-loops removed. With
    ``drop_isolated`` (default) nodes without edges or with an all-zero
    feature row are removed and the rest renumbered; ``original_ids`` keeps
    the file ids.
    """
    root = Path(dir_path)
    feat_path, label_path, edge_path = root / FEATURES_FILE, root / LABELS_FILE, root / EDGES_FILE

    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(feat_path), 1):
        if not line.strip():
            continue
        try:
            row = [float(x) for x in line.split(",")]
        except ValueError:
            raise ParseError("malformed feature value", path=feat_path, line=lineno) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} features, found {len(row)}", path=feat_path, line=lineno)
        if not all(math.isfinite(x) for x in row):
            raise ParseError("non-finite feature value", path=feat_path, line=lineno)
        rows.append(row)
    V = len(rows)
    if V == 0:
        raise ParseError("no feature rows", path=feat_path)
    features = np.array(rows, dtype=np.float64)

    labels = []
    for lineno, line in enumerate(_read_lines(label_path), 1):
        if not line.strip():
            continue
        try:
            lab = int(line.strip())
        except ValueError:
            raise ParseError("malformed label", path=label_path, line=lineno) from None
        if lab < 0:
            raise LabelRangeError(f"label {lab} is negative", path=label_path, line=lineno)
        labels.append(lab)
    if len(labels) != V:
        raise ParseError(f"{len(labels)} labels for {V} feature rows", path=label_path)
    labels = np.array(labels, dtype=np.int64)

    edges = []
    for lineno, line in enumerate(_read_lines(edge_path), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ParseError("expected two node ids", path=edge_path, line=lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError("malformed node id", path=edge_path, line=lineno) from None
        for x in (u, v):
            if not 0 <= x < V:
                raise NodeIdError(f"node id {x} outside [0, {V})", path=edge_path, line=lineno)
        edges.append((u, v))

    graph = Graph.from_edges(V, np.array(edges, dtype=np.int64).reshape(-1, 2), features, labels)
    if drop_isolated:
        keep = np.flatnonzero((graph.degrees > 0) & np.any(graph.features != 0, axis=1))
        if keep.size != V:
            graph = graph.subgraph(keep)
    return graph


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(graph: Graph, dir_path) -> None:
    """Write a graph in the directory format read by :func:`load_dataset`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    edges = "".join(f"{u}\t{v}\n" for u, v in graph.edge_array())
    feats = "".join(",".join(_fmt(x) for x in row) + "\n" for row in graph.features)
    labels = "".join(f"{int(c)}\n" for c in graph.labels)
    for name, text in ((EDGES_FILE, edges), (FEATURES_FILE, feats), (LABELS_FILE, labels)):
        _atomic_write_text(root / name, text)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


# --- PCA -------------------------------------------------------------------------

@dataclass(eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (D, d), orthonormal columns
    explained_variance: np.ndarray

    @property
    def d(self) -> int:
        return self.components.shape[1]


def pca_fit(features, d: int) -> PcaModel:
    """Top-``d`` eigenvectors of the sample covariance (dense symmetric solver).

    Each component's sign is fixed so its largest-magnitude entry is positive.
    """
    X = np.asarray(features, dtype=np.float64)
    V, D = X.shape
    if not 1 <= d <= min(V, D):
        raise InvalidArgumentError(f"PCA dimension d={d} outside [1, {min(V, D)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / max(V - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    comps = evecs[:, order]
    pivot = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    return PcaModel(mean=mean, components=comps * signs, explained_variance=np.clip(evals[order], 0, None))


def pca_transform(model: PcaModel, features) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - model.mean) @ model.components


def minmax_normalize(x: np.ndarray, per_node: bool = False) -> np.ndarray:
    """Map to ``[0, 1]`` globally (default) or row by row; constant input -> zeros."""
    x = np.asarray(x, dtype=np.float64)
    axis = 1 if per_node else None
    lo = x.min(axis=axis, keepdims=True)
    hi = x.max(axis=axis, keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


# --- personalized PageRank -----------------------------------------------------------

def ppr_push(graph: Graph, target: int, alpha: float = 0.15, epsilon: float = 1e-4):
    """Forward push approximation of personalized PageRank.

    Returns ``(estimate, residual)`` as dicts ``node -> mass``. On exit every
    residual is below ``epsilon * degree`` and estimate + residual mass sums
    to one. A node without neighbours keeps all its mass (restart only).
    """
    if not 0 <= target < graph.num_nodes:
        raise InvalidArgumentError(f"target {target} outside [0, {graph.num_nodes})")
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    indptr, indices = graph.indptr, graph.indices
    deg = graph.degrees
    if deg[target] == 0:
        return {target: 1.0}, {}
    p: dict[int, float] = {}
    r: dict[int, float] = {target: 1.0}
    queue = deque([target])
    queued = {target}
    while queue:
        u = queue.popleft()
        queued.discard(u)
        ru = r.get(u, 0.0)
        du = int(deg[u])
        if ru < epsilon * du:
            continue
        p[u] = p.get(u, 0.0) + alpha * ru
        r[u] = 0.0
        share = (1.0 - alpha) * ru / du
        for v in indices[indptr[u]:indptr[u + 1]].tolist():
            rv = r.get(v, 0.0) + share
            r[v] = rv
            if v not in queued and rv >= epsilon * deg[v]:
                queue.append(v)
                queued.add(v)
    return p, {k: v for k, v in r.items() if v > 0}


def ppr_topk(graph: Graph, target: int, alpha: float = 0.15, epsilon: float = 1e-4, k: int = 5):
    """``k`` highest-scoring nodes (descending, ties by id), target always included.

    If the target's own score does not make the cut it replaces the k-th
    entry. Fewer than ``k`` nodes are returned when fewer carry mass.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    p, _ = ppr_push(graph, target, alpha, epsilon)
    ranked = sorted(p.items(), key=lambda kv: (-kv[1], kv[0]))
    chosen = ranked[:k]
    if all(node != target for node, _ in chosen):
        chosen = chosen[:k - 1] + [(target, p.get(target, 0.0))]
        chosen.sort(key=lambda kv: (-kv[1], kv[0]))
    ids = np.array([node for node, _ in chosen], dtype=np.int64)
    scores = np.array([score for _, score in chosen], dtype=np.float64)
    return ids, scores


# --- input assembly ------------------------------------------------------------------

@dataclass(eq=False)
class NodeSample:
    target: int
    rows: np.ndarray  # (k, d) normalised features, zero rows pad
    scores: np.ndarray  # (k,)
    label: int
    node_ids: np.ndarray = None  # (k,), -1 for padding


def block_offsets(n: int, k: int, d: int) -> tuple[int, int]:
    if k > n or d > n:
        raise InvalidArgumentError(f"{k}x{d} feature block does not fit a {n}x{n} grid")
    return (n - k) // 2, (n - d) // 2


def assemble_batch(rows: np.ndarray, scores: np.ndarray, n: int, encode_score_on_phase: bool = False) -> np.ndarray:
    """Vectorised :func:`assemble_input` for ``rows (B, k, d)``, ``scores (B, k)``."""
    rows = np.asarray(rows, dtype=np.float64)
    B, k, d = rows.shape
    r0, c0 = block_offsets(n, k, d)
    out = np.zeros((B, n, n), dtype=np.complex128)
    if encode_score_on_phase:
        phase = (np.pi / 2) * np.asarray(scores, dtype=np.float64)
        block = rows * np.exp(1j * phase)[:, :, None]
    else:
        block = rows
    out[:, r0:r0 + k, c0:c0 + d] = block
    return out


def assemble_input(sample: NodeSample, grid: GridSpec, encode_score_on_phase: bool = False) -> ComplexField:
    """Centre the sample's ``k x d`` block in a zero ``n x n`` field."""
    vals = assemble_batch(sample.rows[None], np.asarray(sample.scores)[None], grid.n, encode_score_on_phase)[0]
    return ComplexField(grid, vals)


def split(num_nodes: int, test_size: int, seed: int):
    """Seeded uniform test sample without replacement; ``(train_ids, test_ids)`` sorted."""
    if isinstance(num_nodes, Graph):
        num_nodes = num_nodes.num_nodes
    if not 0 <= test_size <= num_nodes:
        raise InvalidArgumentError(f"test_size={test_size} exceeds the {num_nodes} available nodes")
    perm = rng_stream(seed, "split").permutation(num_nodes)
    return np.sort(perm[test_size:]), np.sort(perm[:test_size])


# --- preprocessed sample store ---------------------------------------------------

@dataclass(eq=False)
class SampleStore:
    """Everything training needs, independent of the raw dataset.

    Implements the dataset protocol of :func:`holograph.training.fit`.
    """

    features: np.ndarray  # (V, d) normalised to [0, 1]
    neighbor_ids: np.ndarray  # (V, k) int, -1 = padding
    scores: np.ndarray  # (V, k)
    labels: np.ndarray
    train_ids: np.ndarray
    test_ids: np.ndarray
    num_classes: int
    pca_mean: np.ndarray
    pca_components: np.ndarray
    meta: dict = field(default_factory=dict)
    n: int = 200
    encode_score_on_phase: bool = False

    @property
    def k(self) -> int:
        return self.neighbor_ids.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def rows(self, ids) -> np.ndarray:
        nb = self.neighbor_ids[np.asarray(ids)]
        rows = self.features[np.where(nb >= 0, nb, 0)]
        rows[nb < 0] = 0.0
        return rows

    def sample(self, node: int) -> NodeSample:
        return NodeSample(
            target=int(node),
            rows=self.rows([node])[0],
            scores=self.scores[node].copy(),
            label=int(self.labels[node]),
            node_ids=self.neighbor_ids[node].copy(),
        )

    def fields(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        return assemble_batch(self.rows(ids), self.scores[ids], self.n, self.encode_score_on_phase)

    def view(self, n: int | None = None, encode_score_on_phase: bool | None = None) -> "SampleStore":
        """Same samples, different grid size or phase-encoding flag."""
        return SampleStore(
            **{**self.__dict__,
               "n": self.n if n is None else n,
               "encode_score_on_phase": self.encode_score_on_phase if encode_score_on_phase is None
               else encode_score_on_phase}
        )

    _ARRAYS = ("features", "neighbor_ids", "scores", "labels", "train_ids", "test_ids",
               "pca_mean", "pca_components")

    def save(self, path) -> None:
        """Write an ``.npz`` whose bytes depend only on the contents."""
        path = Path(path)
        meta = dict(self.meta, num_classes=int(self.num_classes), n=int(self.n),
                    encode_score_on_phase=bool(self.encode_score_on_phase))
        arrays = {name: getattr(self, name) for name in self._ARRAYS}
        arrays["meta_json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        buf = io.BytesIO()
        # np.savez stamps members with the wall clock; fixed ZipInfo keeps bytes reproducible
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                member = io.BytesIO()
                np.lib.format.write_array(member, np.ascontiguousarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), member.getvalue())
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(buf.getvalue())
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "SampleStore":
        path = Path(path)
        if not path.is_file():
            raise MissingFileError("sample store not found", path=path)
        try:
            with np.load(path, allow_pickle=False) as z:
                arrays = {name: z[name] for name in cls._ARRAYS}
                meta = json.loads(bytes(z["meta_json"]).decode("utf-8"))
        except (KeyError, ValueError, OSError) as exc:
            raise FormatError(f"unreadable sample store {path}: {exc}") from None
        num_classes = meta.pop("num_classes")
        n = meta.pop("n")
        flag = meta.pop("encode_score_on_phase")
        return cls(**arrays, num_classes=num_classes, meta=meta, n=n, encode_score_on_phase=flag)


def build_store(
    graph: Graph,
    d: int,
    k: int,
    n: int,
    test_size: int,
    seed: int,
    alpha: float = 0.15,
    epsilon: float = 1e-4,
    per_node_normalization: bool = False,
    encode_score_on_phase: bool = False,
) -> SampleStore:
    """Run the full preprocessing pipeline over every node (transductive PCA)."""
    block_offsets(n, k, d)
    model = pca_fit(graph.features, d)
    feats = minmax_normalize(pca_transform(model, graph.features), per_node=per_node_normalization)
    V = graph.num_nodes
    nb = -np.ones((V, k), dtype=np.int64)
    sc = np.zeros((V, k), dtype=np.float64)
    for u in range(V):
        ids, scores = ppr_topk(graph, u, alpha, epsilon, k)
        nb[u, :ids.size] = ids
        sc[u, :ids.size] = scores
    train_ids, test_ids = split(V, test_size, seed)
    meta = {
        "d": d, "k": k, "alpha": alpha, "epsilon": epsilon, "seed": seed,
        "test_size": test_size, "num_nodes": V, "num_edges": graph.num_edges,
        "num_features": int(graph.features.shape[1]),
        "per_node_normalization": per_node_normalization,
    }
    return SampleStore(
        features=feats, neighbor_ids=nb, scores=sc, labels=graph.labels.copy(),
        train_ids=train_ids, test_ids=test_ids, num_classes=graph.num_classes,
        pca_mean=model.mean, pca_components=model.components, meta=meta,
        n=n, encode_score_on_phase=encode_score_on_phase,
    )
