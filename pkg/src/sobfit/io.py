"""Problem files, artifact persistence and deterministic round trips.

Problem files are CSV (one point per row: x_1,...,x_n,f) with an optional
JSON manifest carrying  m, n, p, the space selector, the bit budget and
constants overrides.  Artifacts are stored in a versioned binary container;
floats travel as exact bit patterns, so a load reproduces query answers
bit-for-bit.
"""

import hashlib
import json
import pickle

import numpy as np

FORMAT_VERSION = 1
MAGIC = b"SOBFIT"


class ParseError(ValueError):
    pass


def read_problem_csv(path):
    """Points and values from a CSV of rows x_1,...,x_n,f."""
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append([float(t) for t in parts])
            except ValueError as e:
                raise ParseError(f"{path}:{ln}: {e}")
    if not rows:
        return np.zeros((0, 1)), np.zeros(0)
    width = len(rows[0])
    for ln, r in enumerate(rows, start=1):
        if len(r) != width:
            raise ParseError(f"{path}:{ln}: expected {width} columns")
    arr = np.asarray(rows, dtype=float)
    pts, fs = arr[:, :-1], arr[:, -1]
    # duplicate points are a contract violation of the problem format
    if len(pts) > 1:
        key = {tuple(x) for x in pts}
        if len(key) != len(pts):
            raise ParseError(f"{path}: duplicate points")
    return pts, fs


def read_values_csv(path, count=None):
    vals = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(float(line.split(",")[-1]))
            except ValueError as e:
                raise ParseError(f"{path}:{ln}: {e}")
    v = np.asarray(vals, dtype=float)
    if count is not None and len(v) != count:
        raise ParseError(f"{path}: expected {count} values, found {len(v)}")
    return v


def read_manifest(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: {e}")


def provenance_hash(pts, fs=None):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(pts).tobytes())
    if fs is not None:
        h.update(np.ascontiguousarray(fs).tobytes())
    return h.hexdigest()


def save_artifact(path, artifacts, pts_raw, meta=None):
    manifest = {
        "version": FORMAT_VERSION,
        "space": artifacts.space,
        "m": artifacts.jets.m if hasattr(artifacts, "jets") else artifacts.m,
        "n": artifacts.jets.n if hasattr(artifacts, "jets") else artifacts.n,
        "p": float(artifacts.p),
        "constants": artifacts.consts.manifest(),
        "provenance": provenance_hash(pts_raw),
    }
    if meta:
        manifest.update(meta)
    blob = pickle.dumps(artifacts, protocol=4)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        mjson = json.dumps(manifest, sort_keys=True).encode()
        fh.write(len(mjson).to_bytes(8, "little"))
        fh.write(mjson)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)


def load_artifact(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ParseError(f"{path}: not an artifact container")
        version = int.from_bytes(fh.read(4), "little")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported container version {version}")
        mlen = int.from_bytes(fh.read(8), "little")
        manifest = json.loads(fh.read(mlen).decode())
        blen = int.from_bytes(fh.read(8), "little")
        artifacts = pickle.loads(fh.read(blen))
    return artifacts, manifest
