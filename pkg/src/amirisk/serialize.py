"""Versioned text serialization for trained models.

Models persist as JSON: an ensemble header plus member trees as node
lists with explicit child indices (-1 marks a leaf / missing child).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cart import Tree
from .ensembles import TrainedModel

FORMAT_VERSION = 1


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "n_features": tree.n_features,
        "nodes": [
            {
                "feature": int(tree.feature[i]),
                "threshold": None if tree.feature[i] < 0 else float(tree.threshold[i]),
                "left": int(tree.left[i]),
                "right": int(tree.right[i]),
                "value": float(tree.value[i]),
                "weight": float(tree.weight[i]),
                "depth": int(tree.depth[i]),
            }
            for i in range(tree.n_nodes)
        ],
        "ledger": [float(v) for v in tree.ledger],
    }


def _tree_from_dict(d: dict) -> Tree:
    nodes = d["nodes"]
    return Tree(
        feature=np.array([n["feature"] for n in nodes], dtype=np.int64),
        threshold=np.array(
            [np.nan if n["threshold"] is None else n["threshold"] for n in nodes],
            dtype=np.float64,
        ),
        left=np.array([n["left"] for n in nodes], dtype=np.int64),
        right=np.array([n["right"] for n in nodes], dtype=np.int64),
        value=np.array([n["value"] for n in nodes], dtype=np.float64),
        weight=np.array([n["weight"] for n in nodes], dtype=np.float64),
        depth=np.array([n["depth"] for n in nodes], dtype=np.int64),
        n_features=int(d["n_features"]),
        ledger=np.array(d["ledger"], dtype=np.float64),
    )


def model_to_text(model: TrainedModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "algorithm": model.algorithm,
        "columns": list(model.columns),
        "base_score": model.base_score,
        "intercept": model.intercept,
        "coef": None if model.coef is None else [float(v) for v in model.coef],
        "tree_coefs": None if model.tree_coefs is None
        else [float(v) for v in model.tree_coefs],
        "ledger": None if model.ledger is None else [float(v) for v in model.ledger],
        "trees": [_tree_to_dict(t) for t in model.trees],
    }
    return json.dumps(doc, indent=1)


def model_from_text(text: str) -> TrainedModel:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    return TrainedModel(
        algorithm=doc["algorithm"],
        columns=tuple(doc["columns"]),
        trees=tuple(_tree_from_dict(t) for t in doc["trees"]),
        tree_coefs=None if doc["tree_coefs"] is None
        else np.array(doc["tree_coefs"], dtype=np.float64),
        base_score=float(doc["base_score"]),
        coef=None if doc["coef"] is None else np.array(doc["coef"], dtype=np.float64),
        intercept=float(doc["intercept"]),
        ledger=None if doc["ledger"] is None
        else np.array(doc["ledger"], dtype=np.float64),
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(model_to_text(model))


def load_model(path) -> TrainedModel:
    return model_from_text(Path(path).read_text())
