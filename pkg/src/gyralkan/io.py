"""On-disk formats: graphs, tensors, feature sets, checkpoints, embeddings, matches."""

from __future__ import annotations

import base64
import csv
import hashlib
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import LAYER_NAMES, Autoencoder, TrainConfig
from .correspond import CorrespondenceSet
from .features import FeatureDataset
from .graph import GraphError, GyralNet, Hemisphere, NodeRecord
from .kan import KanLayer, SplineGrid
from .structsim import SimilarityMatrix

FORMAT_VERSION = "1.0"


class FormatError(ValueError):
    pass


def _check_version(doc: dict, kind: str, path) -> None:
    if doc.get("format") != kind:
        raise FormatError(f"{path}: expected a {kind!r} file, found format={doc.get('format')!r}")
    ver = str(doc.get("version", ""))
    try:
        major = int(ver.split(".")[0])
    except ValueError:
        raise FormatError(f"{path}: unreadable version {ver!r}") from None
    if major > int(FORMAT_VERSION.split(".")[0]):
        raise FormatError(f"{path}: format version {ver} is newer than supported {FORMAT_VERSION}")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def read_json(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def encode_tensor(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dims": list(a.shape), "dtype": "f64", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_tensor(d: dict) -> np.ndarray:
    if d.get("dtype") != "f64":
        raise FormatError(f"unsupported tensor dtype {d.get('dtype')!r}")
    raw = base64.b64decode(d["data"])
    dims = tuple(int(x) for x in d["dims"])
    expected = int(np.prod(dims, dtype=np.int64)) * 8
    if len(raw) != expected:
        raise FormatError(f"tensor payload has {len(raw)} bytes, dims {dims} need {expected}")
    return np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)


# graphs

def graph_to_dict(g: GyralNet) -> dict:
    nodes = []
    for nd in g.nodes:
        rec = {"id": nd.id, "roi": nd.roi, "hemisphere": nd.hemisphere.value}
        if nd.pos is not None:
            rec["pos"] = list(nd.pos)
        nodes.append(rec)
    return {"format": "gyralnet", "version": FORMAT_VERSION, "subject_id": g.subject_id,
            "n_rois": g.n_rois, "nodes": nodes, "edges": [list(e) for e in g.edges]}


def graph_from_dict(doc: dict, where: str = "<graph>") -> GyralNet:
    if "format" in doc:
        _check_version(doc, "gyralnet", where)
    for key in ("nodes", "edges"):
        if key not in doc:
            raise FormatError(f"{where}: missing field {key!r}")
    n_rois = doc.get("n_rois", 75)
    if not isinstance(n_rois, int) or isinstance(n_rois, bool):
        raise FormatError(f"{where}: field 'n_rois' must be an integer")
    nodes = []
    for i, rec in enumerate(doc["nodes"]):
        ctx = f"{where}: nodes[{i}]"
        try:
            nid, roi = rec["id"], rec["roi"]
        except (KeyError, TypeError):
            raise FormatError(f"{ctx}: needs integer fields 'id' and 'roi'") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (nid, roi)):
            raise FormatError(f"{ctx}: 'id' and 'roi' must be integers")
        try:
            hemi = Hemisphere(rec.get("hemisphere", "unspecified"))
        except ValueError:
            raise FormatError(f"{ctx}.hemisphere: unknown value {rec.get('hemisphere')!r}") from None
        pos = rec.get("pos")
        if pos is not None:
            if len(pos) != 3:
                raise FormatError(f"{ctx}.pos: expected 3 coordinates")
            pos = tuple(float(c) for c in pos)
        nodes.append(NodeRecord(nid, roi, hemi, pos))
    nodes.sort(key=lambda nd: nd.id)
    edges = []
    for i, e in enumerate(doc["edges"]):
        if not (isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise FormatError(f"{where}: edges[{i}] must be a pair of integers")
        edges.append((e[0], e[1]))
    try:
        return GyralNet(tuple(nodes), tuple(edges), n_rois, str(doc.get("subject_id", "")))
    except GraphError as exc:
        raise GraphError(f"{where}: {exc}") from None


def load_graph(path) -> GyralNet:
    return graph_from_dict(read_json(path), str(path))


def save_graph(g: GyralNet, path) -> None:
    write_json(path, graph_to_dict(g))


def load_graph_dir(path) -> list[GyralNet]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise FormatError(f"{path}: no graph files found")
    return [load_graph(f) for f in files]


def graph_hash(g: GyralNet) -> str:
    return hashlib.sha256(dump_json(graph_to_dict(g)).encode("utf-8")).hexdigest()


# ground truth

def save_ground_truth(gt: dict, path) -> None:
    write_json(path, {s: {str(k): int(v) for k, v in sorted(m.items())} for s, m in gt.items()})


def load_ground_truth(path) -> dict[str, dict[int, int]]:
    doc = read_json(path)
    return {s: {int(k): int(v) for k, v in m.items()} for s, m in doc.items()}


# similarity cache

def save_similarity(sim: SimilarityMatrix, g: GyralNet, path) -> None:
    coo = sim.matrix.tocoo()
    write_json(path, {"format": "similarity", "version": FORMAT_VERSION, "graph_hash": graph_hash(g),
                      "k": sim.k, "n": g.n, "rows": coo.row.tolist(), "cols": coo.col.tolist(),
                      "values": encode_tensor(coo.data)})


def load_similarity(path, g: GyralNet, k: int) -> SimilarityMatrix | None:
    """Cached S_k for ``g``, or ``None`` when the cache belongs to another graph or hop."""
    from scipy import sparse

    doc = read_json(path)
    _check_version(doc, "similarity", path)
    if doc["graph_hash"] != graph_hash(g) or doc["k"] != k:
        return None
    vals = decode_tensor(doc["values"])
    mat = sparse.csr_matrix((vals, (doc["rows"], doc["cols"])), shape=(doc["n"], doc["n"]))
    return SimilarityMatrix(k, mat)


# features

def save_features(ds: FeatureDataset, path) -> None:
    write_json(path, {"format": "features", "version": FORMAT_VERSION, "l": ds.l, "n_rois": ds.n_rois,
                      "subject_ids": list(ds.subject_ids), "node_ids": [int(v) for v in ds.node_ids],
                      "rois": [int(v) for v in ds.rois], "hemispheres": list(ds.hemispheres),
                      "features": encode_tensor(ds.data)})


def load_features(path) -> FeatureDataset:
    path = Path(path)
    if path.is_dir():
        path = path / "features.json"
    doc = read_json(path)
    _check_version(doc, "features", path)
    data = decode_tensor(doc["features"])
    if data.shape[1:] != (doc["l"] + 1, doc["n_rois"]):
        raise FormatError(f"{path}: feature tensor {data.shape} disagrees with l={doc['l']}, R={doc['n_rois']}")
    return FeatureDataset(doc["subject_ids"], np.asarray(doc["node_ids"], dtype=np.int64), data,
                          np.asarray(doc["rois"], dtype=np.int64), doc["hemispheres"])


# checkpoints

def checkpoint_to_dict(ae: Autoencoder, cfg: TrainConfig | None = None, history=None) -> dict:
    grid = ae.phi_roi.grid
    layers = {name: {pn: encode_tensor(arr) for pn, arr in layer.params().items()}
              for name, layer in ae.layers.items()}
    return {"format": "checkpoint", "version": FORMAT_VERSION, "tool_version": __version__,
            "l": ae.l, "n_rois": ae.n_rois, "d_theta": ae.d_theta, "latent": ae.latent,
            "grid": {"g_min": grid.g_min, "g_max": grid.g_max, "intervals": grid.intervals, "order": grid.order},
            "layers": layers, "config": cfg.to_dict() if cfg else None,
            "seed": cfg.seed if cfg else None, "epoch": len(history or []), "history": history or []}


def save_checkpoint(ae: Autoencoder, path, cfg: TrainConfig | None = None, history=None) -> None:
    write_json(path, checkpoint_to_dict(ae, cfg, history))


def load_checkpoint(path):
    """Returns ``(autoencoder, config or None, history)``."""
    path = Path(path)
    if path.is_dir():
        path = path / "checkpoint.json"
    doc = read_json(path)
    _check_version(doc, "checkpoint", path)
    grid = SplineGrid(**doc["grid"])
    layers = []
    for name in LAYER_NAMES:
        p = {pn: decode_tensor(t) for pn, t in doc["layers"][name].items()}
        layers.append(KanLayer(p["spline_coef"], p["base_weight"], p["spline_weight"], grid))
    ae = Autoencoder(*layers, l=doc["l"])
    cfg = TrainConfig(**doc["config"]) if doc.get("config") else None
    return ae, cfg, doc.get("history", [])


# embeddings

def save_embeddings(path, subject_ids, node_ids, delta: np.ndarray, theta: np.ndarray | None = None,
                    rois=None, hemispheres=None) -> None:
    doc = {"format": "embeddings", "version": FORMAT_VERSION, "subject_ids": list(subject_ids),
           "node_ids": [int(v) for v in node_ids], "delta": encode_tensor(delta)}
    if theta is not None:
        doc["theta"] = encode_tensor(theta)
    if rois is not None:
        doc["rois"] = [int(v) for v in rois]
    if hemispheres is not None:
        doc["hemispheres"] = list(hemispheres)
    write_json(path, doc)


def load_embeddings(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "embeddings.json"
    doc = read_json(path)
    _check_version(doc, "embeddings", path)
    out = {"subject_ids": doc["subject_ids"], "node_ids": np.asarray(doc["node_ids"], dtype=np.int64),
           "delta": decode_tensor(doc["delta"])}
    if "theta" in doc:
        out["theta"] = decode_tensor(doc["theta"])
    for key in ("rois", "hemispheres"):
        if key in doc:
            out[key] = doc[key]
    return out


# matches

MATCH_COLUMNS = ("anchor_node", "target_subject", "target_node", "score", "n_competing")


def matches_csv(corr: CorrespondenceSet) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATCH_COLUMNS)
    for m in corr.matches:
        w.writerow([m.anchor_node, m.target_subject, m.target_node, repr(m.score), len(m.competing)])
    return buf.getvalue()


def read_matches_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"anchor_node": int(r["anchor_node"]), "target_subject": r["target_subject"],
             "target_node": int(r["target_node"]), "score": float(r["score"]),
             "n_competing": int(r["n_competing"])} for r in rows]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
