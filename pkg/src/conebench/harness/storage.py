"""Versioned single-file containers for datasets and model checkpoints.

Layout: one JSON header line (format tag, version, payload byte count,
SHA-256 of the payload) followed by an npz payload. Loads verify the
checksum before touching the payload, so truncation or corruption never
yields a partially constructed object.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json

import numpy as np

from ..cone import ConeConfig
from ..datagen import GenConfig, GroundTruth, NetworkedDataset
from ..graph import build_graph

DATASET_FORMAT = "conebench.dataset"
DATASET_VERSION = 1
MODEL_FORMAT = "conebench.model"
MODEL_VERSION = 1


class StorageError(Exception):
    pass


class ChecksumError(StorageError):
    pass


class VersionError(StorageError):
    pass


def _write_container(path, fmt: str, version: int, arrays: dict, meta: dict):
    buf = io.BytesIO()
    payload_arrays = dict(arrays)
    payload_arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez_compressed(buf, **payload_arrays)
    payload = buf.getvalue()
    header = {
        "format": fmt,
        "version": version,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        fh.write(payload)


def _read_container(path, fmt: str, version: int):
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StorageError(f"{path}: not a {fmt} file (bad header)") from exc
    if header.get("format") != fmt:
        raise StorageError(
            f"{path}: format {header.get('format')!r}, expected {fmt!r}")
    if header.get("version") != version:
        raise VersionError(
            f"{path}: version {header.get('version')!r} is not supported "
            f"(expected {version})")
    if (len(payload) != header.get("payload_bytes")
            or hashlib.sha256(payload).hexdigest() != header.get("sha256")):
        raise ChecksumError(f"{path}: payload checksum mismatch (truncated or corrupt)")
    with np.load(io.BytesIO(payload), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(bytes(arrays.pop("__meta__")).decode("utf-8"))
    return arrays, meta


def save_dataset(ds: NetworkedDataset, path) -> None:
    arrays = {
        "features": ds.features,
        "treatments": ds.treatments,
        "outcomes": ds.outcomes,
        "edges": ds.graph.edges,
        "gt.y0": ds.ground_truth.y0,
        "gt.y1": ds.ground_truth.y1,
        "gt.weighted_adjacency": ds.ground_truth.weighted_adjacency,
        "gt.topic_mixtures": ds.ground_truth.topic_mixtures,
        "gt.centroid_treated": ds.ground_truth.centroid_treated,
        "gt.centroid_control": ds.ground_truth.centroid_control,
        "gt.scores": ds.ground_truth.scores,
        "gt.prob_treated": ds.ground_truth.prob_treated,
    }
    meta = {"n": ds.n, "gen_config": dataclasses.asdict(ds.config) if ds.config else None}
    _write_container(path, DATASET_FORMAT, DATASET_VERSION, arrays, meta)


def load_dataset(path) -> NetworkedDataset:
    arrays, meta = _read_container(path, DATASET_FORMAT, DATASET_VERSION)
    gt = GroundTruth(
        y0=arrays["gt.y0"], y1=arrays["gt.y1"],
        weighted_adjacency=arrays["gt.weighted_adjacency"],
        topic_mixtures=arrays["gt.topic_mixtures"],
        centroid_treated=arrays["gt.centroid_treated"],
        centroid_control=arrays["gt.centroid_control"],
        scores=arrays["gt.scores"],
        prob_treated=arrays["gt.prob_treated"],
    )
    cfg_dict = meta.get("gen_config")
    cfg = None
    if cfg_dict is not None:
        seed = cfg_dict.pop("seed")
        cfg = GenConfig(seed=tuple(seed) if isinstance(seed, list) else seed,
                        **cfg_dict)
    graph = build_graph(meta["n"], arrays["edges"])
    return NetworkedDataset(features=arrays["features"], graph=graph,
                            treatments=arrays["treatments"],
                            outcomes=arrays["outcomes"], ground_truth=gt,
                            config=cfg)


def save_model(params: dict, cfg: ConeConfig, path) -> None:
    """Checkpoint: named parameter tensors plus a config echo."""
    meta = {"cone_config": dataclasses.asdict(cfg)}
    _write_container(path, MODEL_FORMAT, MODEL_VERSION,
                     {f"param:{k}": v for k, v in params.items()}, meta)


def load_model(path):
    arrays, meta = _read_container(path, MODEL_FORMAT, MODEL_VERSION)
    params = {k[len("param:"):]: v for k, v in arrays.items()}
    cfg_dict = meta["cone_config"]
    for key in ("critic_hidden", "outcome_hidden"):
        cfg_dict[key] = tuple(cfg_dict[key])
    seed = cfg_dict.pop("seed")
    cfg = ConeConfig(seed=tuple(seed) if isinstance(seed, list) else seed,
                     **cfg_dict)
    return params, cfg
