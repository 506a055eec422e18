"""On-disk model bundle.

Layout: an ASCII manifest of ``key=value`` lines ending with ``END``, then
the binary payload.  Payload sections are row-major little-endian: the
router hyperplanes (float64), then for each cluster its selected column
indices (uint32), ``Z`` (float64) and ``W`` (float64), and last the k-means
centroids (float64).  Only the router, ``Z`` and ``W`` count as model
parameters.  Indices and centroids are bookkeeping (the centroids are only
used to score routing during evaluation) and are reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import RoutingClassifier
from .embed import EmbeddingModel
from .errors import BundleFormatError
from .pipeline import FORMAT_VERSION, ClusterModel, ModelBundle
from .ridge import RegressorModel
from .types import TrainConfig

MAGIC = "SASSE-BUNDLE"
_REAL = np.dtype("<f8")
_INDEX = np.dtype("<u4")


@dataclass(frozen=True)
class BundleSizes:
    manifest_bytes: int
    parameter_bytes: int
    index_bytes: int
    aux_bytes: int = 0

    @property
    def total(self) -> int:
        return self.manifest_bytes + self.parameter_bytes + self.index_bytes + self.aux_bytes


def _sections(bundle: ModelBundle):
    """(name, array, dtype, kind) with kind one of parameter / index / aux."""
    yield "classifier", bundle.classifier.hyperplanes, _REAL, "parameter"
    for j, cm in enumerate(bundle.clusters):
        yield f"cluster{j}.C", cm.embedding.C.reshape(1, -1), _INDEX, "index"
        yield f"cluster{j}.Z", cm.embedding.Z, _REAL, "parameter"
        yield f"cluster{j}.W", cm.regressor.W, _REAL, "parameter"
    if bundle.centroids is not None:
        yield "centroids", np.asarray(bundle.centroids), _REAL, "aux"


def dumps(bundle: ModelBundle) -> bytes:
    cfg = bundle.config
    head = [
        MAGIC,
        f"format_version={bundle.format_version}",
        f"d={bundle.d}",
        f"r={cfg.r}",
        f"b={cfg.b}",
        f"k={cfg.k}",
        f"lambda={cfg.lam!r}",
        f"threshold={cfg.threshold!r}",
        f"seed={cfg.seed}",
        f"css={cfg.css_strategy}",
        f"standardize={str(cfg.standardize).lower()}",
        "byte_order=little",
    ]
    blobs = []
    offset = 0
    totals = {"parameter": 0, "index": 0, "aux": 0}
    for name, arr, dt, kind in _sections(bundle):
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        rows, cols = arr.shape
        head.append(f"section={name} dtype={dt.str} rows={rows} cols={cols} offset={offset} nbytes={len(raw)}")
        blobs.append(raw)
        offset += len(raw)
        totals[kind] += len(raw)
    head += [f"{kind}_bytes={n}" for kind, n in totals.items()] + ["END", ""]
    return "\n".join(head).encode("ascii") + b"".join(blobs)


def save(bundle: ModelBundle, path) -> BundleSizes:
    data = dumps(bundle)
    with open(path, "wb") as fh:
        fh.write(data)
    return sizes(data)


def _split(data: bytes):
    marker = b"\nEND\n"
    at = data.find(marker)
    if not data.startswith(MAGIC.encode()) or at < 0:
        raise BundleFormatError("not a model bundle (missing header or END marker)")
    head = data[: at + len(marker)].decode("ascii")
    return head, data[at + len(marker) :]


def _parse_manifest(head: str):
    meta, sections = {}, {}
    for line in head.splitlines()[1:]:
        if line == "END" or not line:
            continue
        if line.startswith("section="):
            fields = dict(part.split("=", 1) for part in line.split())
            sections[fields["section"]] = fields
        else:
            key, _, val = line.partition("=")
            meta[key] = val
    return meta, sections


def sizes(data: bytes) -> BundleSizes:
    head, payload = _split(data)
    meta, _ = _parse_manifest(head)
    return BundleSizes(len(head), int(meta["parameter_bytes"]), int(meta["index_bytes"]),
                       int(meta.get("aux_bytes", 0)))


def loads(data: bytes) -> ModelBundle:
    head, payload = _split(data)
    meta, sections = _parse_manifest(head)
    try:
        version = int(meta["format_version"])
        if version != FORMAT_VERSION:
            raise BundleFormatError(f"unsupported format version {version}")
        cfg = TrainConfig(
            r=int(meta["r"]), k=int(meta["k"]), b=int(meta["b"]), lam=float(meta["lambda"]),
            threshold=float(meta["threshold"]), seed=int(meta["seed"]), css_strategy=meta["css"],
            standardize=meta.get("standardize", "false") == "true",
        )
        d = int(meta["d"])
    except KeyError as exc:
        raise BundleFormatError(f"manifest is missing {exc}") from None

    def read(name):
        if name not in sections:
            raise BundleFormatError(f"missing section {name}")
        s = sections[name]
        dt = np.dtype(s["dtype"])
        off, nbytes = int(s["offset"]), int(s["nbytes"])
        rows, cols = int(s["rows"]), int(s["cols"])
        if off + nbytes > len(payload) or rows * cols * dt.itemsize != nbytes:
            raise BundleFormatError(f"section {name} is truncated or inconsistent")
        return np.frombuffer(payload, dtype=dt, count=rows * cols, offset=off).reshape(rows, cols)

    clf = RoutingClassifier(read("classifier").astype(np.float64), cfg.k)
    clusters = []
    for j in range(cfg.k):
        C = read(f"cluster{j}.C").ravel().astype(np.int64)
        emb = EmbeddingModel(C, read(f"cluster{j}.Z").astype(np.float64))
        reg = RegressorModel(read(f"cluster{j}.W").astype(np.float64), cfg.lam)
        clusters.append(ClusterModel(emb, reg))
    centroids = read("centroids").astype(np.float64) if "centroids" in sections else None
    return ModelBundle(cfg, d, clf, tuple(clusters), centroids, version)


def load(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return loads(fh.read())
