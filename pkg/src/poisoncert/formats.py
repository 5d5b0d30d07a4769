"""File formats: CSV and IDX datasets, the votes file, certificate/curve CSVs."""

from __future__ import annotations

import csv
import gzip
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .certify import ABSTAIN, Certificate, VoteRecord
from .ensemble import Dataset

VOTES_FORMAT = "poisoncert-votes/1"
IDX_IMAGES = 2051
IDX_LABELS = 2049


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- CSV datasets ------------------------------------------------------------

def read_csv_dataset(path: str | os.PathLike, n_classes: int | None = None) -> Dataset:
    """Header row required; ``label`` column holds class ids, an optional ``id``
    column holds sample ids, every other column is a numeric feature."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "label" not in header:
        raise ValueError(f"{path}: no 'label' column")
    li = header.index("label")
    ii = header.index("id") if "id" in header else None
    fcols = [j for j in range(len(header)) if j not in (li, ii)]
    if not fcols:
        raise ValueError(f"{path}: no feature columns")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    try:
        X = np.array([[float(r[j]) for j in fcols] for r in body])
        y = np.array([int(r[li]) for r in body])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    ids = [r[ii] for r in body] if ii is not None else [str(i) for i in range(len(body))]
    return Dataset(X, y, ids, n_classes)


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label"] + [f"x{j}" for j in range(data.dim)])
    for i in range(len(data)):
        w.writerow([data.ids[i], int(data.labels[i])] + [repr(float(v)) for v in data.features[i]])
    return buf.getvalue()


def write_csv_dataset(path: str | os.PathLike, data: Dataset) -> None:
    atomic_write(path, dataset_to_csv(data))


# -- IDX (MNIST) -------------------------------------------------------------

def _open(path):
    return gzip.open(path, "rb") if str(path).endswith(".gz") else open(path, "rb")


def read_idx(path: str | os.PathLike, expect_magic: int) -> np.ndarray:
    """Big-endian IDX array of unsigned bytes; the magic number must match."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise ValueError(f"{path}: IDX magic {magic} != expected {expect_magic}")
    ndim = raw[3]
    head = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    count = int(np.prod(dims))
    if len(raw) - head != count:
        raise ValueError(f"{path}: expected {count} data bytes, found {len(raw) - head}")
    return np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(dims)


def read_idx_dataset(images: str | os.PathLike, labels: str | os.PathLike,
                     classes: Sequence[int] | None = None) -> Dataset:
    """Images scaled to [0, 1] and flattened. ``classes`` keeps only those digits,
    relabelled ``0..len(classes)-1`` in the given order (e.g. ``(1, 7)``)."""
    X = read_idx(images, IDX_IMAGES)
    y = read_idx(labels, IDX_LABELS).astype(np.int64)
    if len(X) != len(y):
        raise ValueError("image and label counts differ")
    X = X.reshape(len(X), -1).astype(float) / 255.0
    ids = [str(i) for i in range(len(y))]
    if classes:
        keep = np.isin(y, list(classes))
        remap = {c: i for i, c in enumerate(classes)}
        idx = np.flatnonzero(keep)
        return Dataset(X[idx], np.array([remap[int(v)] for v in y[idx]]),
                       [ids[i] for i in idx], len(classes))
    return Dataset(X, y, ids)


def write_idx(path: str | os.PathLike, array: np.ndarray, magic: int) -> None:
    array = np.asarray(array, dtype=np.uint8)
    head = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(head + array.tobytes())


# -- votes file --------------------------------------------------------------

@dataclass
class VotesFile:
    """Self-describing JSON container of vote records plus training metadata."""

    T: int
    classes: list[int]
    scheme: dict
    n: int
    n_c: int
    master_seed: int
    config_digest: str = ""
    extra: dict = field(default_factory=dict)
    records: list[VoteRecord] = field(default_factory=list)

    def validate(self) -> None:
        known = set(self.classes)
        for r in self.records:
            if r.trials != self.T:
                raise ValueError(f"{r.example_id}: trials {r.trials} != header T {self.T}")
            if sum(r.counts.values()) != self.T:
                raise ValueError(f"{r.example_id}: votes sum to {sum(r.counts.values())}, not T")
            if not set(r.counts) <= known:
                raise ValueError(f"{r.example_id}: class outside the declared set")

    def dumps(self) -> str:
        self.validate()
        doc = {
            "format": VOTES_FORMAT,
            "header": {
                "T": self.T, "classes": list(self.classes), "scheme": self.scheme,
                "n": self.n, "n_c": self.n_c, "master_seed": self.master_seed,
                "config_digest": self.config_digest, **self.extra,
            },
            "records": [
                {"id": r.example_id,
                 "counts": {str(k): v for k, v in sorted(r.counts.items())},
                 "label": r.true_label}
                for r in self.records
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "VotesFile":
        doc = json.loads(text)
        if doc.get("format") != VOTES_FORMAT:
            raise ValueError(f"not a votes file (format {doc.get('format')!r})")
        h = dict(doc["header"])
        base = {k: h.pop(k) for k in ("T", "classes", "scheme", "n", "n_c", "master_seed")}
        digest = h.pop("config_digest", "")
        records = [VoteRecord(r["id"], {int(k): int(v) for k, v in r["counts"].items()},
                              int(base["T"]), r.get("label")) for r in doc["records"]]
        vf = cls(records=records, config_digest=digest, extra=h, **base)
        vf.validate()
        return vf


def write_votes(path: str | os.PathLike, votes: VotesFile) -> None:
    atomic_write(path, votes.dumps())


def read_votes(path: str | os.PathLike) -> VotesFile:
    if not Path(path).exists():
        raise FileNotFoundError(f"votes file {path} does not exist")
    return VotesFile.loads(Path(path).read_text())


# -- certificate and curve CSVs ----------------------------------------------

def certificates_to_csv(certs: Sequence[Certificate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example_id", "label", "radius", "p1_lower", "p2_upper", "abstain", "true_label"])
    for c in certs:
        label = "ABSTAIN" if c.abstained else c.label
        radius = "ABSTAIN" if c.radius == ABSTAIN else c.radius
        w.writerow([c.example_id, label, radius, repr(c.p1_lower), repr(c.p2_upper),
                    int(c.abstained), "" if c.true_label is None else c.true_label])
    return buf.getvalue()


def curve_to_csv(curve: Sequence[tuple[int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho", "certified_accuracy"])
    for rho, ca in curve:
        w.writerow([rho, repr(ca)])
    return buf.getvalue()
