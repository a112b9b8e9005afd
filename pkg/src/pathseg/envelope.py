"""One serialization envelope for every model family.

Layout: a magic line, a byte-length line, a JSON header (model structure,
shapes, seed, norm-params reference, split record), then a little-endian
float64 weight blob in declared layer order. Tree models keep their nested
nodes in the header and carry an empty blob; the file is self-contained, so
its size on disk is the model's memory footprint.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import EnvelopeError, ShapeError
from .nn.network import ArchitectureSpec, Network, NeuralNetClassifier
from .tree import DecisionTreeClassifier, RandomForestClassifier, TreeNode

MAGIC = "PATHSEG-ENVELOPE 1"
FORMAT_VERSION = 1


def _encode_node(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"c": [int(v) for v in node.class_counts]}
    return {
        "f": int(node.feature_index),
        "t": node.threshold,
        "n": int(node.n_samples),
        "g": node.gain,
        "l": _encode_node(node.left),
        "r": _encode_node(node.right),
    }


def _decode_node(d: dict) -> TreeNode:
    if "c" in d:
        counts = np.array(d["c"], dtype=np.float64)
        return TreeNode(n_samples=int(counts.sum()), class_counts=counts)
    return TreeNode(
        n_samples=int(d["n"]),
        feature_index=int(d["f"]),
        threshold=float(d["t"]),
        gain=float(d["g"]),
        left=_decode_node(d["l"]),
        right=_decode_node(d["r"]),
    )


def _net_of(model) -> Network:
    return model.net_ if isinstance(model, NeuralNetClassifier) else model


def save_model(
    model,
    path: str | Path,
    *,
    model_name: str,
    j: int,
    n_features: int,
    seed: int = 0,
    norm_params_ref: str | None = None,
    splits: dict | None = None,
    segment_labels: list[str] | None = None,
) -> None:
    """Write any trained model (tree, forest, or network) as one envelope file."""
    header: dict = {
        "format": FORMAT_VERSION,
        "model": model_name,
        "j": j,
        "n_features": n_features,
        "seed": seed,
        "norm_params": norm_params_ref,
        "splits": splits,
        "segment_labels": segment_labels,
    }
    blob = b""
    if isinstance(model, DecisionTreeClassifier):
        header["kind"] = "tree"
        header["classes"] = model.class_count_
        header["payload"] = {"max_depth": model.max_depth, "root": _encode_node(model.root_)}
    elif isinstance(model, RandomForestClassifier):
        header["kind"] = "forest"
        header["classes"] = model.class_count_
        header["payload"] = {
            "n_estimators": model.n_estimators,
            "max_depth": model.max_depth,
            "max_features": model.max_features,
            "bootstrap": model.bootstrap,
            "random_state": model.random_state,
            "roots": [_encode_node(r) for r in model.roots_],
        }
    elif isinstance(model, (Network, NeuralNetClassifier)):
        net = _net_of(model)
        header["kind"] = "net"
        header["classes"] = net.spec.classes
        manifest = []
        parts = []
        for li, name, param in net.named_params():
            manifest.append({"layer": li, "name": name, "shape": list(param.shape)})
            parts.append(param)
        buffers = []
        for li, name, buf in net.named_buffers():
            buffers.append({"layer": li, "name": name, "shape": list(buf.shape)})
            parts.append(buf)
        header["payload"] = {"spec": net.spec.to_dict(), "weights": manifest, "buffers": buffers}
        blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in parts)
    else:
        raise EnvelopeError(f"cannot serialize object of type {type(model).__name__}")

    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(f"{MAGIC}\n".encode("ascii"))
        fh.write(f"{len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        fh.write(blob)


def read_envelope(path: str | Path) -> tuple[dict, bytes]:
    """Parse an envelope file into (header, blob); raises EnvelopeError if corrupt."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise EnvelopeError(f"cannot read model file {path}: {exc}") from exc
    try:
        magic_end = raw.index(b"\n")
        magic = raw[:magic_end].decode("ascii")
        if magic != MAGIC:
            raise EnvelopeError(f"{path}: bad magic {magic!r}")
        len_end = raw.index(b"\n", magic_end + 1)
        header_len = int(raw[magic_end + 1:len_end])
        header_start = len_end + 1
        header = json.loads(raw[header_start:header_start + header_len].decode("utf-8"))
        blob = raw[header_start + header_len:]
    except EnvelopeError:
        raise
    except Exception as exc:
        raise EnvelopeError(f"{path}: corrupt envelope ({exc})") from exc
    if header.get("format") != FORMAT_VERSION:
        raise EnvelopeError(f"{path}: unsupported format version {header.get('format')!r}")
    if header.get("kind") not in ("tree", "forest", "net"):
        raise EnvelopeError(f"{path}: unknown model kind {header.get('kind')!r}")
    return header, blob


class LoadedModel:
    """A deserialized model with the shared predict interface plus its header."""

    def __init__(self, header: dict, model):
        self.header = header
        self.model = model
        self.kind = header["kind"]
        self.model_name = header["model"]
        self.j = int(header["j"])
        self.n_features = int(header["n_features"])
        self.classes = int(header["classes"])

    def check_windows(self, j: int, n_features: int) -> None:
        if (j, n_features) != (self.j, self.n_features):
            raise ShapeError(
                f"model {self.model_name!r} was trained on (j={self.j}, n={self.n_features}), "
                f"got (j={j}, n={n_features})"
            )

    def predict(self, windows: np.ndarray) -> np.ndarray:
        return self.model.predict(windows)


def load_model(path: str | Path) -> LoadedModel:
    header, blob = read_envelope(path)
    kind = header["kind"]
    payload = header["payload"]
    if kind == "tree":
        clf = DecisionTreeClassifier(max_depth=payload["max_depth"])
        clf.root_ = _decode_node(payload["root"])
        clf.class_count_ = int(header["classes"])
        clf.n_features_in_ = int(header["j"]) * int(header["n_features"])
        return LoadedModel(header, clf)
    if kind == "forest":
        clf = RandomForestClassifier(
            n_estimators=payload["n_estimators"],
            max_depth=payload["max_depth"],
            max_features=payload["max_features"],
            bootstrap=payload["bootstrap"],
            random_state=payload.get("random_state", 0),
        )
        clf.roots_ = [_decode_node(r) for r in payload["roots"]]
        clf.class_count_ = int(header["classes"])
        clf.n_features_in_ = int(header["j"]) * int(header["n_features"])
        return LoadedModel(header, clf)
    # network: rebuild the architecture, then overwrite params and buffers from the blob
    spec = ArchitectureSpec.from_dict(payload["spec"])
    net = Network(spec, seed=int(header.get("seed", 0)))
    offset = 0

    def _take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += count * 8
        return arr

    try:
        for entry in payload["weights"]:
            arr = _take(entry["shape"])
            net.layers[entry["layer"]].params[entry["name"]][...] = arr
        for entry in payload["buffers"]:
            arr = _take(entry["shape"])
            net.layers[entry["layer"]].buffers[entry["name"]][...] = arr
    except ValueError as exc:
        raise EnvelopeError(f"{path}: weight blob does not match manifest ({exc})") from exc
    if offset != len(blob):
        raise EnvelopeError(f"{path}: weight blob has {len(blob) - offset} trailing bytes")
    return LoadedModel(header, net)
