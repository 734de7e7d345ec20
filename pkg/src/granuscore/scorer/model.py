"""The complete scoring model and its single-file archive.

Archive layout (a zip file)::

    manifest.json     format version, configs, feature order id, metadata
    ensemble.json     flat tree arrays
    anchors.npz       anchor index (frozen anchors only, or the full index)
    calibration.npy   sorted calibration scores

Entries are written with a fixed timestamp so saving the same model twice
produces identical bytes.
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import logging
import os
import zipfile
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..anchors import AnchorFeatureVector, AnchorIndex, FeatureConfig, Featurizer
from ..embedding.geometry import SpaceDescriptor
from ..embedding.providers import EmbeddingProvider
from ..errors import ArchiveError, ConfigurationError, FeatureOrderError, SpaceMismatchError
from .calibration import CalibrationTable, to_percentile
from .ensemble import RegressorConfig, TreeEnsemble

logger = logging.getLogger(__name__)

MODEL_FORMAT = "granuscore-model"
MODEL_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def default_training_date() -> str:
    """UTC date of training, overridable through ``SOURCE_DATE_EPOCH``."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        now = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        now = _dt.datetime.now(tz=_dt.timezone.utc)
    return now.date().isoformat()


@dataclass
class GranularityModel:
    ensemble: TreeEnsemble
    featurizer: Featurizer
    embedding_model_id: str
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    calibration: CalibrationTable | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ensemble.n_features != self.featurizer.width:
            raise ConfigurationError(
                f"ensemble expects {self.ensemble.n_features} features but the featurizer "
                f"produces {self.featurizer.width}"
            )

    @property
    def space(self) -> SpaceDescriptor:
        return self.featurizer.space

    @property
    def feature_order_id(self) -> str:
        return self.featurizer.feature_order_id

    # ------------------------------------------------------------ scoring

    def check_provider(self, provider: EmbeddingProvider) -> None:
        if provider.space != self.space:
            raise SpaceMismatchError(
                f"backend {provider.model_id!r} embeds into {provider.space}, model expects {self.space}"
            )
        if provider.model_id != self.embedding_model_id:
            raise ConfigurationError(
                f"model was trained on embeddings from {self.embedding_model_id!r}, "
                f"got backend {provider.model_id!r}"
            )

    def predict_matrix(self, X: np.ndarray, feature_order_id: str) -> np.ndarray:
        if feature_order_id != self.feature_order_id:
            raise FeatureOrderError(
                f"features were built with layout {feature_order_id!r}; model expects {self.feature_order_id!r}"
            )
        return self.ensemble.predict(X)

    def raw_from_embeddings(self, embeddings: np.ndarray, ordinals: Sequence[int] | None = None) -> np.ndarray:
        X = self.featurizer.transform(embeddings, ordinals)
        return self.ensemble.predict(X)

    def raw_scores(self, texts: Sequence[str], provider: EmbeddingProvider, batch_size: int = 1024) -> np.ndarray:
        self.check_provider(provider)
        texts = list(texts)
        out = np.empty(len(texts))
        for s in range(0, len(texts), batch_size):
            chunk = texts[s : s + batch_size]
            emb = provider.embed_array(chunk)
            out[s : s + len(chunk)] = self.raw_from_embeddings(emb, range(s, s + len(chunk)))
        return out

    def percentiles(self, raw, method: str = "mid"):
        if self.calibration is None:
            raise ConfigurationError("model has no calibration table; run calibration first")
        return to_percentile(raw, self.calibration, method)

    def score_texts(self, texts: Sequence[str], provider: EmbeddingProvider) -> np.ndarray:
        return np.asarray(self.percentiles(self.raw_scores(texts, provider)), dtype=np.float64)

    def with_calibration(self, table: CalibrationTable) -> "GranularityModel":
        return GranularityModel(self.ensemble, self.featurizer, self.embedding_model_id, self.regressor,
                                table, dict(self.metadata))


def predict_raw(model: GranularityModel, features: AnchorFeatureVector) -> float:
    """Raw granularity for one feature vector. Layout mismatches raise."""
    return float(model.predict_matrix(features.as_array()[None, :], features.feature_order_id)[0])


# ------------------------------------------------------------------- archive


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_model(model: GranularityModel, path) -> None:
    fz = model.featurizer
    strategy = fz.config.strategy
    sections = ["manifest.json", "ensemble.json"]
    frozen = fz.anchors is not None
    anchors_blob = None
    if strategy is not None:
        anchors_blob = (fz.frozen_index() if frozen else fz.index).to_bytes()
        sections.append("anchors.npz")
    if model.calibration is not None:
        sections.append("calibration.npy")
    manifest = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_VERSION,
        "sections": sections,
        "embedding": {"model_id": model.embedding_model_id, "space": model.space.to_dict()},
        "features": {
            "config": fz.config.to_dict(),
            "feature_order_id": fz.feature_order_id,
            "width": fz.width,
            "frozen_anchors": frozen,
            "anchor_labels": fz.anchors.labels if frozen else None,
            "index_digest": None if fz.source is None else fz.source["index_digest"],
            "index_source_id": None if fz.source is None else fz.source["index_source_id"],
        },
        "regressor": model.regressor.to_dict(),
        "calibration": None
        if model.calibration is None
        else {"corpus_id": model.calibration.corpus_id, "size": len(model.calibration)},
        "metadata": model.metadata,
    }
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode())
        _write_entry(zf, "ensemble.json", json.dumps(model.ensemble.to_dict(), separators=(",", ":")).encode())
        if anchors_blob is not None:
            _write_entry(zf, "anchors.npz", anchors_blob)
        if model.calibration is not None:
            buf = io.BytesIO()
            np.save(buf, np.asarray(model.calibration.scores), allow_pickle=False)
            _write_entry(zf, "calibration.npy", buf.getvalue())


def load_model(path) -> GranularityModel:
    path = Path(path)
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise ArchiveError(f"{path} is not a readable model archive: {exc}") from exc
    with zf:
        names = set(zf.namelist())

        def read(name: str) -> bytes:
            if name not in names:
                raise ArchiveError(f"{path}: archive is missing the {name!r} section")
            try:
                return zf.read(name)
            except (zipfile.BadZipFile, OSError, EOFError, ValueError) as exc:
                raise ArchiveError(f"{path}: section {name!r} is truncated or corrupt: {exc}") from exc

        try:
            manifest = json.loads(read("manifest.json"))
        except json.JSONDecodeError as exc:
            raise ArchiveError(f"{path}: manifest is not valid JSON") from exc
        if manifest.get("format") != MODEL_FORMAT:
            raise ArchiveError(f"{path} is not a granuscore model archive")
        version = manifest.get("format_version")
        if not isinstance(version, int) or version > MODEL_VERSION:
            raise ArchiveError(
                f"{path} was written with model format version {version}; "
                f"this release reads versions up to {MODEL_VERSION}"
            )
        for name in manifest.get("sections", []):
            if name not in names:
                raise ArchiveError(f"{path}: archive is missing the {name!r} section")
        try:
            ensemble = TreeEnsemble.from_dict(json.loads(read("ensemble.json")))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ArchiveError(f"{path}: ensemble section is corrupt: {exc}") from exc
        feat = manifest["features"]
        config = FeatureConfig.from_dict(feat["config"])
        space = SpaceDescriptor.from_dict(manifest["embedding"]["space"])
        index = None
        if config.strategy is not None:
            try:
                index = AnchorIndex.from_bytes(read("anchors.npz"))
            except ArchiveError:
                raise
            except Exception as exc:
                raise ArchiveError(f"{path}: anchors section is corrupt: {exc}") from exc
        source = None
        if feat.get("index_digest") is not None:
            source = {"index_digest": feat["index_digest"], "index_source_id": feat.get("index_source_id")}
        featurizer = Featurizer.restore(
            config, index, space, feat["feature_order_id"], feat["frozen_anchors"], source
        )
        calibration = None
        if manifest.get("calibration") is not None:
            try:
                scores = np.load(io.BytesIO(read("calibration.npy")), allow_pickle=False)
            except ArchiveError:
                raise
            except Exception as exc:
                raise ArchiveError(f"{path}: calibration section is corrupt: {exc}") from exc
            calibration = CalibrationTable(scores, manifest["calibration"].get("corpus_id", ""))
    return GranularityModel(
        ensemble,
        featurizer,
        manifest["embedding"]["model_id"],
        RegressorConfig.from_dict(manifest["regressor"]),
        calibration,
        manifest.get("metadata", {}),
    )
