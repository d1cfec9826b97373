"""Neighborhood-structure search by maximal pseudo-likelihood.

Every candidate structure (optionally paired with a past-neighborhood whose
infected count enters as an ordinary covariate) is fitted by the EM
pseudo-likelihood scheme; candidates are ranked by the fitted log
pseudo-likelihood, ties broken by fewest graph edges and then by candidate
order. Failed fits are excluded from the ranking and reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .dataio import PAST_NEIGHBOR_COLUMN, build_past_neighbor_covariate
from .errors import EstimationError
from .estimation import FitResult, empl_fit
from .lattice import Ellipse, GridShape, NeighborhoodSpec, Rect, build_neighbor_graph
from .model import CovariateSeries

__all__ = [
    "Candidate",
    "CandidateSet",
    "SelectionReport",
    "enumerate_rect_candidates",
    "enumerate_ellipse_candidates",
    "select_by_pl",
    "misspecification_profile",
]


@dataclass(frozen=True)
class Candidate:
    """One structure to score: an instantaneous spec and an optional past spec."""

    label: str
    instantaneous: NeighborhoodSpec
    past: Optional[NeighborhoodSpec] = None


@dataclass
class CandidateSet:
    candidates: list[Candidate]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set must be nonempty")
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise ValueError("candidate labels must be unique")

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


def enumerate_rect_candidates(v_r_range: Sequence[int], v_c_range: Sequence[int],
                              *, restrict_vc_le_vr: bool = False) -> CandidateSet:
    """Cartesian product of row/column neighbor counts, deduplicated, in
    (v_r, v_c) lexicographic order; optionally keep only v_c <= v_r."""
    seen = set()
    out = []
    for v_r in sorted(set(int(v) for v in v_r_range)):
        for v_c in sorted(set(int(v) for v in v_c_range)):
            if restrict_vc_le_vr and v_c > v_r:
                continue
            if (v_r, v_c) in seen:
                continue
            seen.add((v_r, v_c))
            spec = Rect(v_r, v_c)
            out.append(Candidate(spec.label(), spec))
    return CandidateSet(out)


def enumerate_ellipse_candidates(
    r_values: Sequence[float],
    c_values: Sequence[float],
    past_r_values: Optional[Sequence[float]] = None,
    past_c_values: Optional[Sequence[float]] = None,
) -> CandidateSet:
    """Elliptical instantaneous structures, optionally crossed with a grid of
    past structures (axis value lists in each lattice direction)."""
    inst = [Ellipse(float(a), float(b)) for a in r_values for b in c_values]
    if past_r_values is None:
        return CandidateSet([Candidate(s.label(), s) for s in inst])
    if past_c_values is None:
        past_c_values = past_r_values
    past = [Ellipse(float(a), float(b)) for a in past_r_values for b in past_c_values]
    out = [
        Candidate(f"{s.label()}+past{p.label()[7:]}", s, p)
        for s in inst
        for p in past
    ]
    return CandidateSet(out)


@dataclass
class SelectionReport:
    """Per-candidate fits, the log-PL ranking, and the winner."""

    candidates: CandidateSet
    results: dict[str, FitResult]
    edges: dict[str, int]
    failures: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        order = {c.label: k for k, c in enumerate(self.candidates)}
        self.ranking = sorted(
            self.results,
            key=lambda lab: (-self.results[lab].pl_value, self.edges[lab], order[lab]),
        )
        if not self.ranking:
            raise EstimationError("every candidate fit failed; nothing to rank")
        self.winner = self.ranking[0]

    @property
    def winner_candidate(self) -> Candidate:
        return next(c for c in self.candidates if c.label == self.winner)

    def rank_of(self, label: str) -> int:
        """1-based position of ``label`` in the ranking."""
        return self.ranking.index(label) + 1

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for c in self.candidates:
            row = {"label": c.label}
            row.update(_spec_fields(c.instantaneous, prefix="v"))
            row.update(_spec_fields(c.past, prefix="p"))
            res = self.results.get(c.label)
            if res is None:
                message = next(m for lab, m in self.failures if lab == c.label)
                row.update({"log_pl": np.nan, "rank": np.nan, "error": message})
            else:
                row.update({"log_pl": res.pl_value, "rank": self.rank_of(c.label), "error": ""})
                sds = res.sd_sandwich()
                for k, name in enumerate(res.column_names):
                    key = {"intercept": "beta0", "spatial": "rho1", "past": "rho2"}.get(
                        name, f"beta_{name}"
                    )
                    row[key] = res.theta[k]
                    if sds is not None:
                        row[f"sd_{key}"] = sds[k]
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            "winner": self.winner,
            "ranking": self.ranking,
            "failures": [{"label": lab, "error": msg} for lab, msg in self.failures],
            "fits": {lab: res.to_dict() for lab, res in self.results.items()},
        }


def _spec_fields(spec: Optional[NeighborhoodSpec], prefix: str) -> dict:
    if spec is None:
        return {f"{prefix}_r": np.nan, f"{prefix}_c": np.nan}
    if isinstance(spec, Rect):
        return {f"{prefix}_r": spec.v_r, f"{prefix}_c": spec.v_c}
    return {f"{prefix}_r": spec.a_r, f"{prefix}_c": spec.a_c}


def _fit_candidate(candidate: Candidate, Z, X, shape, centering, fit_kwargs):
    graph = build_neighbor_graph(shape, candidate.instantaneous)
    X_c = X
    if candidate.past is not None:
        past_graph = build_neighbor_graph(shape, candidate.past)
        X_c = X.with_column(
            build_past_neighbor_covariate(Z, past_graph), PAST_NEIGHBOR_COLUMN
        )
        edges = graph.n_edges + past_graph.n_edges
    else:
        edges = graph.n_edges
    result = empl_fit(Z, X_c, graph, centering=centering, **fit_kwargs)
    return result, edges


def select_by_pl(
    Z: np.ndarray,
    X: CovariateSeries,
    shape: GridShape,
    candidates: CandidateSet,
    *,
    centering: str = "centered",
    n_jobs: int = 1,
    **fit_kwargs,
) -> SelectionReport:
    """Fit every candidate and rank by log pseudo-likelihood (descending).

    Individual fit failures are dropped from the ranking and listed in the
    report. Candidate fits are independent; ``n_jobs`` fans them out while
    keeping the report deterministic (assembled in candidate order).
    """

    def one(candidate):
        try:
            result, edges = _fit_candidate(candidate, Z, X, shape, centering, fit_kwargs)
            return candidate.label, result, edges, None
        except (EstimationError, np.linalg.LinAlgError) as exc:
            return candidate.label, None, 0, str(exc)

    if n_jobs != 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(delayed(one)(c) for c in candidates)
    else:
        outcomes = [one(c) for c in candidates]

    results, edges, failures = {}, {}, []
    for label, result, n_edges, error in outcomes:
        if error is None:
            results[label] = result
            edges[label] = n_edges
        else:
            failures.append((label, error))
    return SelectionReport(candidates=candidates, results=results, edges=edges,
                           failures=failures)


def misspecification_profile(
    Z: np.ndarray,
    X: CovariateSeries,
    shape: GridShape,
    candidates: CandidateSet,
    *,
    centering: str = "centered",
    n_jobs: int = 1,
    **fit_kwargs,
) -> pd.DataFrame:
    """Estimates under every candidate structure, side by side, for studying
    how the fitted spatial coefficient reacts to the assumed neighborhood."""
    report = select_by_pl(Z, X, shape, candidates, centering=centering,
                          n_jobs=n_jobs, **fit_kwargs)
    return report.to_frame()
