"""Analysis-driven retrieval of ROI triplets.

Texts are embedded with a deterministic lexical model: word tokens and
character trigrams are hashed into a fixed number of buckets, weighted by
``(1 + ln tf) * idf`` with the idf table fitted on the ROI corpus, and
L2-normalised.  Retrieval is an exact cosine scan.
"""
from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from perfprompt.advisor import BottleneckDiagnosis
from perfprompt.cpg import SourceUnit
from perfprompt.errors import EmptyDatabase
from perfprompt.gateway import Gateway, GenerationRequest
from perfprompt.roi_store import RoiDatabase, RoiTriplet
from perfprompt.templating import fill, load_template

DEFAULT_DIM = 512
DEFAULT_K = 2
_WORD = re.compile(r"[a-z_][a-z0-9_]*|\d+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SCORE_DECIMALS = 12


def text_features(text: str) -> Counter:
    """Word-token and character-trigram feature counts of ``text``."""
    norm = " ".join(text.lower().split())
    feats: Counter = Counter("w:" + t for t in _WORD.findall(norm))
    feats.update("c:" + norm[i:i + 3] for i in range(len(norm) - 2))
    return feats


def feature_bucket(feature: str, dim: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class LexicalEmbedder:
    def __init__(self, dim: int = DEFAULT_DIM, idf: np.ndarray | None = None) -> None:
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self.idf = np.ones(dim) if idf is None else np.asarray(idf, dtype=float)
        if self.idf.shape != (dim,):
            raise ValueError("idf table does not match dimension")

    def fit(self, corpus: Iterable[str]) -> LexicalEmbedder:
        df = np.zeros(self.dim)
        n = 0
        for text in corpus:
            n += 1
            for b in {feature_bucket(f, self.dim) for f in text_features(text)}:
                df[b] += 1
        self.idf = np.log((1 + n) / (1 + df)) + 1.0
        return self

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for feat, count in text_features(text).items():
            vec[feature_bucket(feat, self.dim)] += count
        mask = vec > 0
        vec[mask] = (1.0 + np.log(vec[mask])) * self.idf[mask]
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class RoiIndex:
    embedder: LexicalEmbedder
    vectors: np.ndarray  # shape (len(db), dim), rows in database order

    @classmethod
    def build(cls, db: RoiDatabase, dim: int = DEFAULT_DIM) -> RoiIndex:
        texts = [t.instruction.as_text() for t in db]
        embedder = LexicalEmbedder(dim).fit(texts)
        vectors = np.array([embedder.embed(t) for t in texts]).reshape(len(texts), dim)
        return cls(embedder, vectors)

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, dim=np.array(self.embedder.dim), idf=self.embedder.idf, vectors=self.vectors)

    @classmethod
    def load(cls, path: str | Path) -> RoiIndex:
        with np.load(path) as data:
            dim = int(data["dim"])
            return cls(LexicalEmbedder(dim, data["idf"]), data["vectors"])


def index_path_for(db_path: str | Path) -> Path:
    return Path(f"{db_path}.index.npz")


def load_or_build_index(db: RoiDatabase, db_path: str | Path | None, dim: int = DEFAULT_DIM) -> RoiIndex:
    """Reuse the index stored next to the database when it is still current."""
    if db_path is not None:
        ipath = index_path_for(db_path)
        if ipath.exists() and ipath.stat().st_mtime >= Path(db_path).stat().st_mtime:
            index = RoiIndex.load(ipath)
            if index.vectors.shape == (len(db), dim):
                return index
    index = RoiIndex.build(db, dim)
    if db_path is not None:
        index.save(index_path_for(db_path))
    return index


@dataclass(frozen=True)
class PerformanceAnalysis:
    text: str
    source_id: str | None = None


@dataclass(frozen=True)
class RetrievalResult:
    ranked: tuple[tuple[RoiTriplet, float], ...]

    @property
    def triplets(self) -> list[RoiTriplet]:
        return [t for t, _ in self.ranked]


def analysis_prompt(src: SourceUnit) -> str:
    return fill(load_template("analysis"), {"src_code": src.text})


def analyze_performance(src: SourceUnit | str, gateway: Gateway, model_name: str = "mock",
                        temperature: float = 0.7) -> PerformanceAnalysis:
    """Ask the model for a fix-free bottleneck analysis of ``src``."""
    if isinstance(src, str):
        src = SourceUnit(src)  # rejects empty text before any request is sent
    resp = gateway.complete(GenerationRequest(analysis_prompt(src), model_name, temperature))
    return PerformanceAnalysis(resp.text.strip(), src.path)


def analysis_from_diagnoses(diagnoses: Sequence[BottleneckDiagnosis], source_id: str | None = None) -> PerformanceAnalysis:
    """Offline alternative to :func:`analyze_performance` built from advisor output."""
    return PerformanceAnalysis("\n".join(d.text for d in diagnoses), source_id)


def rank(query: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row order by descending cosine score, ties by row index."""
    scores = np.clip(vectors @ query, -1.0, 1.0) if len(vectors) else np.zeros(0)
    keys = np.round(scores, _SCORE_DECIMALS)
    order = np.lexsort((np.arange(len(scores)), -keys))
    return order, scores


def retrieve(analysis: PerformanceAnalysis | str, db: RoiDatabase, k: int = DEFAULT_K,
             index: RoiIndex | None = None) -> RetrievalResult:
    """Top-``k`` triplets whose instruction is most similar to the analysis."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(db) == 0:
        raise EmptyDatabase("the ROI database has no entries")
    index = index or RoiIndex.build(db)
    text = analysis.text if isinstance(analysis, PerformanceAnalysis) else analysis
    order, scores = rank(index.embedder.embed(text), index.vectors)
    return RetrievalResult(tuple((db[int(i)], float(scores[i])) for i in order[:k]))


def keyword_overlap_report(input_src: SourceUnit | str, retrieved: Sequence[SourceUnit | str],
                           n_top: int = 10) -> list[tuple[str, float]]:
    """Identifiers shared by the input and the retrieved code, by mean TF-IDF.

    TF-IDF uses raw counts, smoothed idf ``ln((1+n)/(1+df)) + 1`` and L2
    row normalisation over the corpus ``[input] + retrieved``.  A keyword's
    weight is its mean score over the documents that contain it.
    """
    docs = [d.text if isinstance(d, SourceUnit) else d for d in [input_src, *retrieved]]
    counts = [Counter(_IDENT.findall(d)) for d in docs]
    if len(docs) < 2:
        return []
    n = len(docs)
    df = Counter(tok for c in counts for tok in c)
    rows = []
    for c in counts:
        weights = {t: cnt * (math.log((1 + n) / (1 + df[t])) + 1.0) for t, cnt in c.items()}
        norm = math.sqrt(sum(w * w for w in weights.values())) or 1.0
        rows.append({t: w / norm for t, w in weights.items()})
    shared = set(counts[0]) & set().union(*counts[1:])
    report = []
    for tok in shared:
        present = [r[tok] for r in rows if tok in r]
        report.append((tok, sum(present) / len(present)))
    report.sort(key=lambda kv: (-kv[1], kv[0]))
    return report[:n_top]
