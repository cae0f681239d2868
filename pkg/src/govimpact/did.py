"""Dynamic difference-in-differences with asset and time fixed effects.

The model regresses the normalized series on an intercept, asset dummies,
time dummies and one treated-by-slot interaction per slot except the anchor.
Standard errors are clustered by asset.

With a single treated asset every treated cell is absorbed by its own
interaction, so the treated asset's residuals are identically zero and a
plain cluster sandwich only sees the controls' noise. ``se_method="cr1"``
reports that sandwich as is. The default ``"cr1_exchangeable"`` adds the
treated asset's own noise variance, estimated from the controls' residual
changes relative to the anchor under the assumption that treated and control
idiosyncratic noise are exchangeable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from govimpact.aggregate import DAY, DEFAULT_DT, IntervalSeries, normalize_at
from govimpact.errors import CannotNormalize, CollinearityError, EventAborted, TooFewClusters

SE_METHODS = ("cr1_exchangeable", "cr1")
SIGNIFICANCE_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "·"))
CLASS_RANK = {"***": 4, "**": 3, "*": 2, "·": 1, "ns": 0}


def classify(p: float) -> str:
    if not 0 <= p <= 1:
        raise ValueError(f"p-value outside [0, 1]: {p}")
    for cut, label in SIGNIFICANCE_LEVELS:
        if p < cut:
            return label
    return "ns"


def is_significant(cls: str, p_threshold: float = 0.1) -> bool:
    cuts = {label: cut for cut, label in SIGNIFICANCE_LEVELS}
    return cls != "ns" and cuts[cls] <= p_threshold


@dataclass(frozen=True)
class PanelSpec:
    event_id: int = 0
    kind: str = "price"
    dt: int = DEFAULT_DT
    analysis_span: tuple[float, float] = (-10, 2)  # days
    event_window: tuple[float, float] = (-1, 2)
    short_window: tuple[float, float] = (-10, -1)
    anchor: float = -1

    def _slot(self, days: float) -> int:
        s = days * DAY / self.dt
        if s != int(s):
            raise ValueError(f"{days} days is not a whole number of slots")
        return int(s)

    @property
    def span_slots(self) -> tuple[int, int]:
        return self._slot(self.analysis_span[0]), self._slot(self.analysis_span[1])

    @property
    def event_slots(self) -> tuple[int, int]:
        return self._slot(self.event_window[0]), self._slot(self.event_window[1])

    @property
    def short_slots(self) -> tuple[int, int]:
        return self._slot(self.short_window[0]), self._slot(self.short_window[1])

    @property
    def anchor_slot(self) -> int:
        return self._slot(self.anchor)

    @property
    def normalization_slot(self) -> int:
        return self.short_slots[0]

    def validate(self) -> None:
        lo, hi = self.span_slots
        elo, ehi = self.event_slots
        if not lo <= self.anchor_slot < hi:
            raise ValueError("anchor outside analysis span")
        if not (lo <= elo and ehi <= hi):
            raise ValueError("event window not inside analysis span")
        if self.anchor_slot != elo:
            raise ValueError("anchor must be the first slot of the event window")


@dataclass
class Panel:
    assets: list[str]
    treated: str
    asset: np.ndarray
    slot: np.ndarray
    y: np.ndarray
    missing: list[tuple[str, int]] = field(default_factory=list)
    dropped_controls: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def controls(self) -> list[str]:
        return [a for a in self.assets if a != self.treated]


def build_panel(target: IntervalSeries, controls: Sequence[IntervalSeries],
                spec: PanelSpec, tau: int | None = None) -> Panel:
    """Stack normalized treated and control series over the analysis span.

    Series are re-indexed so slot 0 starts at ``tau`` (default: each series'
    own origin) and divided by their value at the start of the short window.
    Cumulative-volume series whose base is zero move the base forward inside
    the short window. Controls that cannot be normalized are dropped.
    """
    spec.validate()
    lo, hi = spec.span_slots
    t_s = spec.normalization_slot
    search = spec.short_slots[1] if target.kind == "cumulative_volume" else None

    def prepare(s: IntervalSeries) -> IntervalSeries:
        if tau is not None:
            s = s.rebase(tau)
        return normalize_at(s, t_s, search_until=search).window(lo, hi)

    try:
        t_norm = prepare(target)
    except CannotNormalize as exc:
        raise EventAborted(f"event {spec.event_id}: treated asset {target.asset}: {exc}") from None
    if t_norm.value_at(spec.anchor_slot) is None:
        raise EventAborted(f"event {spec.event_id}: treated asset has no value at the anchor")

    dropped = {}
    prepared = {}
    for s in sorted(controls, key=lambda s: s.asset):
        if s.asset == target.asset:
            continue
        try:
            prepared[s.asset] = prepare(s)
        except CannotNormalize as exc:
            dropped[s.asset] = str(exc)
    if not prepared:
        raise EventAborted(f"event {spec.event_id}: no usable counterfactual assets")

    covered = set()
    for s in prepared.values():
        covered.update(s.slots.tolist())
    assets = [target.asset] + sorted(prepared)
    series = {target.asset: t_norm, **prepared}
    a_col, s_col, y_col, missing = [], [], [], []
    for a in assets:
        have = series[a].as_dict()
        for k in range(lo, hi):
            if k in have and k in covered:
                a_col.append(a)
                s_col.append(k)
                y_col.append(have[k])
            else:
                missing.append((a, k))
    return Panel(assets, target.asset, np.array(a_col, dtype=object),
                 np.array(s_col, dtype=np.int64), np.array(y_col, dtype=float),
                 missing, dropped)


@dataclass
class OLSFit:
    names: list[str]
    coef: np.ndarray
    resid: np.ndarray
    X: np.ndarray
    xtx_inv: np.ndarray

    @property
    def nobs(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


def fit_ols(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None,
            rtol: float | None = None) -> OLSFit:
    """Least squares via column-pivoted QR; rank deficiency raises."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{i}" for i in range(k)]
    if n < k:
        raise CollinearityError(names[n:])
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = (rtol if rtol is not None else max(n, k) * np.finfo(float).eps) * (diag[0] if k else 0)
    rank = int(np.sum(diag > tol))
    if rank < k:
        raise CollinearityError([names[j] for j in sorted(piv[rank:])])
    coef = np.empty(k)
    coef[piv] = scipy.linalg.solve_triangular(R, Q.T @ y)
    r_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = r_inv @ r_inv.T
    return OLSFit(names, coef, y - X @ coef, X, xtx_inv)


def cluster_robust_cov(fit: OLSFit, clusters: Sequence, small_sample: bool = True) -> np.ndarray:
    """Cluster sandwich ``(X'X)^-1 (sum_g s_g s_g') (X'X)^-1`` with CR1 scaling.

    CR1 multiplies by ``G/(G-1) * (N-1)/(N-k)``; ``small_sample=False`` gives CR0.
    A saturated fit (N = k) leaves no residual information and returns zeros.
    """
    labels = np.asarray(clusters)
    uniq, inv = np.unique(labels, return_inverse=True)
    G = len(uniq)
    if G < 2:
        raise TooFewClusters(f"need at least 2 clusters, got {G}")
    if fit.nobs <= fit.k:
        return np.zeros((fit.k, fit.k))
    scores = np.zeros((G, fit.k))
    np.add.at(scores, inv, fit.X * fit.resid[:, None])
    meat = scores.T @ scores
    V = fit.xtx_inv @ meat @ fit.xtx_inv
    if small_sample:
        V *= cr1_factor(G, fit.nobs, fit.k)
    return (V + V.T) / 2


def cr1_factor(G: int, n: int, k: int) -> float:
    return G / (G - 1) * (n - 1) / (n - k)


@dataclass(frozen=True)
class Gamma:
    estimate: float
    se: float
    t_stat: float
    p_value: float
    cls: str


@dataclass
class DiDFit:
    event_id: int
    kind: str
    treated: str
    gamma: dict[int, Gamma]
    alpha0: float
    asset_effects: dict[str, float]
    time_effects: dict[int, float]
    residuals: np.ndarray
    n_clusters: int
    dof: int
    anchor_slot: int
    se_method: str
    nobs: int
    controls: list[str] = field(default_factory=list)

    def ci(self, slot: int, level: float = 0.90) -> tuple[float, float]:
        g = self.gamma[slot]
        q = stats.t.ppf(0.5 + level / 2, self.dof)
        return g.estimate - q * g.se, g.estimate + q * g.se


def _design(panel: Panel, anchor: int) -> tuple[np.ndarray, list[str], list[int]]:
    controls = panel.controls
    ref_asset = controls[0]
    slots = sorted(set(panel.slot.tolist()))
    if anchor not in slots:
        raise EventAborted("anchor slot has no observations")
    treated_slots = sorted(set(panel.slot[panel.asset == panel.treated].tolist()) - {anchor})
    asset_cols = [a for a in panel.assets if a != ref_asset]
    time_cols = [k for k in slots if k != anchor]
    names = (["const"] + [f"asset[{a}]" for a in asset_cols] + [f"slot[{k}]" for k in time_cols]
             + [f"D[{k}]" for k in treated_slots])
    n = len(panel)
    X = np.zeros((n, len(names)))
    X[:, 0] = 1.0
    a_idx = {a: 1 + i for i, a in enumerate(asset_cols)}
    t_idx = {k: 1 + len(asset_cols) + i for i, k in enumerate(time_cols)}
    d_idx = {k: 1 + len(asset_cols) + len(time_cols) + i for i, k in enumerate(treated_slots)}
    for row, (a, k) in enumerate(zip(panel.asset, panel.slot.tolist())):
        if a in a_idx:
            X[row, a_idx[a]] = 1.0
        if k in t_idx:
            X[row, t_idx[k]] = 1.0
        if a == panel.treated and k in d_idx:
            X[row, d_idx[k]] = 1.0
    return X, names, treated_slots


def _treated_noise_var(panel: Panel, resid: np.ndarray, anchor: int,
                       slots: Sequence[int]) -> dict[int, float]:
    """Per-slot variance of the treated asset's change since the anchor.

    Estimated as sum_c u_ck^2 / (m_k - 1) with ``u_ck`` the control residual at
    slot ``k`` minus its residual at the anchor and ``m_k`` the number of
    controls observed at both.
    """
    by_asset: dict[str, dict[int, float]] = {}
    for a, k, e in zip(panel.asset, panel.slot.tolist(), resid.tolist()):
        if a != panel.treated:
            by_asset.setdefault(a, {})[k] = e
    out = {}
    for k in slots:
        u = [cells[k] - cells[anchor] for cells in by_asset.values()
             if k in cells and anchor in cells]
        out[k] = float(np.dot(u, u)) / (len(u) - 1) if len(u) >= 2 else 0.0
    return out


def fit_dynamic_did(panel: Panel, spec: PanelSpec = PanelSpec(),
                    se_method: str = "cr1_exchangeable") -> DiDFit:
    if se_method not in SE_METHODS:
        raise ValueError(f"unknown se_method {se_method!r}")
    if len(panel.assets) < 2:
        raise TooFewClusters("panel needs the treated asset and at least one control")
    anchor = spec.anchor_slot
    X, names, d_slots = _design(panel, anchor)
    fit = fit_ols(X, panel.y, names)
    V = cluster_robust_cov(fit, panel.asset)
    G = len(panel.assets)
    dof = G - 1

    extra = (_treated_noise_var(panel, fit.resid, anchor, d_slots)
             if se_method == "cr1_exchangeable" else {k: 0.0 for k in d_slots})
    scale = max(1.0, float(np.max(np.abs(panel.y)))) if len(panel) else 1.0
    first_d = len(names) - len(d_slots)
    gamma = {}
    for i, k in enumerate(d_slots):
        j = first_d + i
        est = float(fit.coef[j])
        se = float(np.sqrt(max(V[j, j], 0.0) + extra[k]))
        if se <= 1e-12 * scale:
            # exact fit: the effect is either exactly zero or perfectly determined
            null = abs(est) <= 1e-10 * scale
            t_stat = 0.0 if null else float(np.copysign(np.inf, est))
            p = 1.0 if null else 0.0
        else:
            t_stat = est / se
            p = float(min(1.0, 2 * stats.t.sf(abs(t_stat), dof)))
        gamma[k] = Gamma(est, se, t_stat, p, classify(p))

    controls = panel.controls
    asset_effects = {controls[0]: 0.0}
    time_effects = {anchor: 0.0}
    for name, b in zip(names, fit.coef.tolist()):
        if name.startswith("asset["):
            asset_effects[name[6:-1]] = b
        elif name.startswith("slot["):
            time_effects[int(name[5:-1])] = b
    return DiDFit(spec.event_id, spec.kind, panel.treated, gamma, float(fit.coef[0]),
                  asset_effects, dict(sorted(time_effects.items())), fit.resid, G, dof, anchor,
                  se_method, len(panel), controls)
