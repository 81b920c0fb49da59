"""Diversity statistics over radiomics vectors.

Two labeled modes are exposed because the source definition of
"mean variance of pairwise cosine similarities" admits more than one
reading:

  * similarity_stats: MV/SD are the mean and population SD of the
    pairwise cosine dissimilarities (1 - s) between per-feature z-scored
    vectors;
  * feature_variance: features are population z-scored across the set,
    zero-variance features dropped, and MV/SD summarize the per-feature
    variances (identically 1 for every kept feature, so MV is 1 whenever
    any feature survives).

Every report carries its mode tag.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..volumes.grid import ContractError
from .features import RadiomicsVector, extract_features

MODES = ("similarity_stats", "feature_variance")


@dataclass(frozen=True)
class DiversityReport:
    method_name: str
    n_samples: int
    mv: float
    sd: float
    mode: str
    organ: str = ""

    def __post_init__(self):
        if self.n_samples < 2:
            raise ContractError("diversity needs at least 2 samples")
        if self.sd < 0:
            raise ContractError("sd must be >= 0")
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}")


def _matrix(vectors: list[RadiomicsVector]) -> np.ndarray:
    if len(vectors) < 2:
        raise ContractError("need at least 2 vectors")
    lengths = {len(v.features) for v in vectors}
    if len(lengths) != 1:
        raise ContractError(f"vector lengths differ: {sorted(lengths)}")
    return np.stack([v.features for v in vectors]).astype(np.float64)


def _zscore_drop(mat: np.ndarray) -> np.ndarray:
    """Population z-score per feature; zero-variance columns are dropped."""
    std = mat.std(axis=0)
    keep = std > 0
    if not np.all(keep):
        dropped = [i for i, k in enumerate(keep) if not k]
        warnings.warn(
            f"dropping {len(dropped)} zero-variance feature(s): {dropped}",
            stacklevel=3,
        )
    mat = mat[:, keep]
    return (mat - mat.mean(axis=0)) / mat.std(axis=0) if mat.shape[1] else mat


def pairwise_cosine(
    vectors: list[RadiomicsVector], standardize: bool = False
) -> list[float]:
    """All n(n-1)/2 unordered-pair cosines, ordered by index pair."""
    mat = _matrix(vectors)
    if standardize:
        mat = _zscore_drop(mat)
    norms = np.linalg.norm(mat, axis=1)
    bad = [i for i, n in enumerate(norms) if n == 0]
    if bad:
        raise ContractError(
            f"zero-norm vector(s) make cosines undefined: indices {bad}"
        )
    unit = mat / norms[:, None]
    out = []
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            out.append(float(np.clip(np.dot(unit[i], unit[j]), -1.0, 1.0)))
    return out


def diversity_stats(
    vectors: list[RadiomicsVector],
    mode: str = "similarity_stats",
    method_name: str = "",
    organ: str = "",
) -> DiversityReport:
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    mat = _matrix(vectors)
    if mode == "similarity_stats":
        if np.allclose(mat.std(axis=0), 0.0):
            # identical vectors: no spread at all
            mv, sd = 0.0, 0.0
        else:
            sims = np.array(pairwise_cosine(vectors, standardize=True))
            dissim = 1.0 - sims
            mv = float(dissim.mean())
            sd = float(dissim.std())
    else:
        z = _zscore_drop(mat)
        per_feature_var = z.var(axis=0)  # identically 1 for kept features
        mv = float(per_feature_var.mean()) if per_feature_var.size else 0.0
        sd = float(per_feature_var.std()) if per_feature_var.size else 0.0
    return DiversityReport(
        method_name=method_name,
        n_samples=len(vectors),
        mv=mv,
        sd=sd,
        mode=mode,
        organ=organ,
    )


def compare_methods(sample_sets: dict, mode: str = "similarity_stats") -> list[DiversityReport]:
    """One report per method (and per organ when sets are nested).

    `sample_sets` maps method name to either a list of (Volume, TumorMask)
    pairs or an organ -> list mapping.
    """
    reports = []
    for method, per_method in sample_sets.items():
        groups = per_method if isinstance(per_method, dict) else {"": per_method}
        for organ, samples in groups.items():
            vectors = [
                extract_features(v, m, source_id=f"{method}/{organ}/{i}")
                for i, (v, m) in enumerate(samples)
            ]
            reports.append(
                diversity_stats(vectors, mode=mode, method_name=method, organ=organ)
            )
    return reports


def format_report_table(reports: list[DiversityReport]) -> str:
    """Delimited table mirroring a methods-by-organ layout."""
    organs = sorted({r.organ for r in reports})
    methods = sorted({r.method_name for r in reports})
    by_key = {(r.method_name, r.organ): r for r in reports}
    header = "method\t" + "\t".join(o if o else "all" for o in organs)
    lines = [header]
    for m in methods:
        cells = []
        for o in organs:
            r = by_key.get((m, o))
            cells.append(f"{r.mv:.4f}±{r.sd:.4f}" if r else "-")
        lines.append(m + "\t" + "\t".join(cells))
    return "\n".join(lines)
