"""Portable text format for fitted models.

    WATTLENS-MODEL 1
    kind: gboost
    feature_names: ["airtime_ul", "bsr_ul"]
    base_value: 0x1.b0a3d70a3d70ap+3
    learning_rate: 0x1.999999999999ap-4
    params: {"learning_rate": 0.1, ...}
    trees: 2
    TREE 0 3
    0 1 0x1.0p-1 1 2 0x1.8p+3 40
    1 -1 0x0.0p+0 -1 -1 0x1.4p+3 25
    2 -1 0x0.0p+0 -1 -1 0x1.cp+3 15
    TREE 1 1
    0 -1 0x0.0p+0 -1 -1 0x0.0p+0 40
    END

Node lines are ``id feature threshold left right value n_samples`` in
preorder; ``-1`` marks a leaf. Reals are written with ``float.hex`` so a
save/load round trip is bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Iterator, List, Union

import numpy as np

from app.core.errors import ModelFormatError
from app.models.ensemble import EnsembleModel
from app.models.tree import RegressionTree
from app.schemas.params import BoostParams, ForestParams, ModelKind

logger = logging.getLogger(__name__)

MAGIC = "WATTLENS-MODEL"
FORMAT_VERSION = 1


def _hex(value: float) -> str:
    return float(value).hex()


def dump_tree(tree: RegressionTree, index: int) -> List[str]:
    lines = [f"TREE {index} {tree.n_nodes}"]
    for node in range(tree.n_nodes):
        lines.append(
            f"{node} {int(tree.feature[node])} {_hex(tree.threshold[node])} "
            f"{int(tree.left[node])} {int(tree.right[node])} "
            f"{_hex(tree.value[node])} {int(tree.n_samples[node])}"
        )
    return lines


def dump_model(model: EnsembleModel) -> str:
    params = json.dumps(
        model.params.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"kind: {model.kind.value}",
        f"feature_names: {json.dumps(list(model.feature_names))}",
        f"base_value: {_hex(model.base_value)}",
        f"learning_rate: {_hex(model.learning_rate)}",
        f"params: {params}",
        f"trees: {len(model.trees)}",
    ]
    for index, tree in enumerate(model.trees):
        lines.extend(dump_tree(tree, index))
    lines.append("END")
    return "\n".join(lines) + "\n"


def _header(lines: Iterator[str], key: str) -> str:
    try:
        line = next(lines)
    except StopIteration:
        raise ModelFormatError(f"Model file ended before '{key}'")
    prefix = f"{key}: "
    if not line.startswith(prefix):
        raise ModelFormatError(f"Expected '{key}:' header, got: {line[:40]!r}")
    return line[len(prefix):]


def _parse_tree(lines: Iterator[str], index: int, n_features: int) -> RegressionTree:
    try:
        tag, tree_index, n_nodes = next(lines).split()
    except (StopIteration, ValueError):
        raise ModelFormatError(f"Malformed TREE header for tree {index}")
    if tag != "TREE" or int(tree_index) != index:
        raise ModelFormatError(f"Expected TREE {index}")

    columns = [[] for _ in range(6)]
    for expected_id in range(int(n_nodes)):
        try:
            fields = next(lines).split()
        except StopIteration:
            raise ModelFormatError(f"Tree {index} ended early")
        if len(fields) != 7 or int(fields[0]) != expected_id:
            raise ModelFormatError(f"Malformed node line in tree {index}")
        columns[0].append(int(fields[1]))
        columns[1].append(float.fromhex(fields[2]))
        columns[2].append(int(fields[3]))
        columns[3].append(int(fields[4]))
        columns[4].append(float.fromhex(fields[5]))
        columns[5].append(int(fields[6]))

    return RegressionTree(
        feature=np.array(columns[0], dtype=np.int64),
        threshold=np.array(columns[1], dtype=np.float64),
        left=np.array(columns[2], dtype=np.int64),
        right=np.array(columns[3], dtype=np.int64),
        value=np.array(columns[4], dtype=np.float64),
        n_samples=np.array(columns[5], dtype=np.int64),
        n_features=n_features,
    )


def load_model(text: str) -> EnsembleModel:
    lines = iter(text.splitlines())
    first = next(lines, "")
    if first != f"{MAGIC} {FORMAT_VERSION}":
        raise ModelFormatError(f"Not a {MAGIC} v{FORMAT_VERSION} file")
    try:
        kind = ModelKind(_header(lines, "kind"))
        feature_names = tuple(json.loads(_header(lines, "feature_names")))
        base_value = float.fromhex(_header(lines, "base_value"))
        learning_rate = float.fromhex(_header(lines, "learning_rate"))
        raw_params = json.loads(_header(lines, "params"))
        n_trees = int(_header(lines, "trees"))
        params_type = ForestParams if kind == ModelKind.FOREST else BoostParams
        params = params_type.model_validate(raw_params)
        trees = [_parse_tree(lines, i, len(feature_names)) for i in range(n_trees)]
    except ModelFormatError:
        raise
    except Exception as e:
        raise ModelFormatError(f"Corrupt model file: {e}")
    if next(lines, None) != "END":
        raise ModelFormatError("Missing END marker")

    return EnsembleModel(
        kind=kind,
        feature_names=feature_names,
        base_value=base_value,
        learning_rate=learning_rate,
        trees=tuple(trees),
        params=params,
    )


def save_model(model: EnsembleModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_model(model), encoding="utf-8")
    logger.info(f"Saved {model.kind.value} model with {len(model.trees)} trees to {path}")
    return path


def read_model(path: Union[str, Path]) -> EnsembleModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    return load_model(path.read_text(encoding="utf-8"))
