"""Fits and summary statistics: logical decay, noise re-fit, convergence."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, nnls

from .noise import CHANNEL_PARAM, FaultLocation, NoiseParams
from .tracer import Hyperedge


class FitFailureError(RuntimeError):
    pass


# Logical error per round


def decay_model(r, eps_i, eps_m, eps):
    r = np.asarray(r, dtype=float)
    return 0.5 - 0.5 * (1 - 2 * eps_i) * (1 - 2 * eps_m) * np.exp(-2 * eps * r)


@dataclass
class DecayFit:
    eps_i: float
    eps_m: float
    eps: float
    covariance: np.ndarray
    points: list[tuple[int, float, float]]
    cost: float = 0.0
    tied: bool = True

    def predict(self, r):
        return decay_model(r, self.eps_i, self.eps_m, self.eps)

    @property
    def eps_stderr(self) -> float:
        return float(math.sqrt(max(self.covariance[2, 2], 0.0)))

    @property
    def amplitude(self) -> float:
        return (1 - 2 * self.eps_i) * (1 - 2 * self.eps_m)


def fit_decay(points, eps_m: float | None = None) -> DecayFit:
    """Weighted least-squares fit of ``P(r) = 1/2 - 1/2 (1-2ei)(1-2em) e^{-2 e r}``.

    The curve only constrains the product ``(1-2ei)(1-2em)``. By default the
    intercept is split equally (``ei == em``); passing ``eps_m`` fixes the
    measurement term and fits ``ei``.

    Parameters
    ----------
    points : iterable of (r, p_fail, stderr)
        Zero standard errors (noise-free data) mean an unweighted fit.
    eps_m : float, optional
        Known final-measurement error.
    """
    pts = [(int(r), float(p), float(s)) for r, p, s in points]
    rs = np.array([p[0] for p in pts], dtype=float)
    ps = np.array([p[1] for p in pts])
    ss = np.array([p[2] for p in pts])
    if len(set(rs.tolist())) < 3:
        raise FitFailureError("need at least three distinct round counts")
    if np.all(ps >= 0.5):
        raise FitFailureError("all failure rates at or above 1/2")
    sigma = ss if np.all(ss > 0) else np.ones_like(ps)
    ok = ps < 0.5
    y = np.log(1 - 2 * ps[ok])
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(rs[ok], y, 1, w=1 / sigma[ok])
    else:
        slope, icpt = 0.0, float(y[0])
    eps0 = float(np.clip(-slope / 2, 0.0, 0.49))
    amp = float(np.clip(math.exp(min(icpt, 0.0)), 1e-12, 1.0))
    if eps_m is None:
        s0 = (1 - math.sqrt(amp)) / 2
        lift = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

        def unpack(t):
            return t[0], t[0], t[1]
    else:
        s0 = (1 - amp / (1 - 2 * eps_m)) / 2
        lift = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])

        def unpack(t):
            return t[0], eps_m, t[1]

    x0 = np.clip([s0, eps0], 0.0, 0.49)

    def resid(t):
        return (decay_model(rs, *unpack(t)) - ps) / sigma

    def jac(t):
        ei, em, e = unpack(t)
        amp = (1 - 2 * ei) * (1 - 2 * em)
        ex = np.exp(-2 * e * rs)
        if eps_m is None:
            d0 = 2 * (1 - 2 * ei) * ex
        else:
            d0 = (1 - 2 * em) * ex
        d1 = amp * rs * ex
        return np.stack([d0, d1], axis=1) / sigma[:, None]

    fit = least_squares(resid, x0, jac=jac, bounds=(0.0, 0.5 - 1e-12), method="trf",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    if not fit.success:
        raise FitFailureError(fit.message)
    J = fit.jac
    try:
        cov2 = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov2 = np.full((2, 2), np.nan)
    ei, em, e = unpack(fit.x)
    return DecayFit(float(ei), float(em), float(e), lift @ cov2 @ lift.T, pts,
                    float(2 * fit.cost), eps_m is None)


def acceptance_per_round(rounds, acceptance) -> float:
    """Geometric acceptance factor ``a`` from ``acceptance(r) ~ c a^r``."""
    rs = np.asarray(rounds, dtype=float)
    acc = np.asarray(acceptance, dtype=float)
    slope, _ = np.polyfit(rs, np.log(acc), 1)
    return float(math.exp(slope))


# Noise model from hyperedge probabilities


class AnalyticModel:
    """Hyperedge probabilities as functions of the six noise parameters.

    ``first_order`` sums the source fault probabilities. ``exact`` combines the
    sources of distinct locations as independent toggles,
    ``1/2 (1 - prod(1 - 2 p_loc))``, which is what the correlation estimate
    converges to.
    """

    def __init__(self, hyperedges: list[Hyperedge], locations: list[FaultLocation]):
        names = NoiseParams.names()
        locs = {l.instruction_index: l for l in locations}
        self.keys = [h.events for h in hyperedges]
        self.terms = []
        for h in hyperedges:
            per = defaultdict(float)
            pidx = {}
            for i, f in h.sources:
                loc = locs[i]
                per[i] += loc.share
                pidx[i] = names.index(CHANNEL_PARAM[loc.channel])
            self.terms.append([(pidx[i], c) for i, c in sorted(per.items())])
        self.design = np.zeros((len(self.keys), len(names)))
        for row, terms in enumerate(self.terms):
            for j, c in terms:
                self.design[row, j] += c

    def vector(self, params, exact: bool = False) -> np.ndarray:
        p = np.asarray(params.as_tuple() if isinstance(params, NoiseParams) else params, float)
        if not exact:
            return self.design @ p
        out = np.empty(len(self.keys))
        for row, terms in enumerate(self.terms):
            prod = 1.0
            for j, c in terms:
                prod *= 1 - 2 * c * p[j]
            out[row] = 0.5 * (1 - prod)
        return out

    def alphas(self, params, exact: bool = False) -> dict:
        return dict(zip(self.keys, self.vector(params, exact).tolist()))


@dataclass
class NoiseFit:
    params: NoiseParams
    residual: float
    per_hyperedge: list[tuple[tuple[int, ...], float, float]]
    converged: bool = True
    exact: bool = False


def fit_noise_model(calibrated: dict, model: AnalyticModel, exact: bool = False) -> NoiseFit:
    """Least-squares six-parameter fit to calibrated hyperedge probabilities.

    ``per_hyperedge`` lists ``(events, measured, model)`` sorted by the fitted
    model probability, largest first.
    """
    try:
        y = np.array([calibrated[k] for k in model.keys], dtype=float)
    except KeyError as exc:
        raise ValueError(f"calibration lacks hyperedge {exc}") from None
    x0, _ = nnls(model.design, y)
    x0 = np.clip(x0, 0.0, 0.49)
    converged = True
    if exact:
        fit = least_squares(lambda p: model.vector(p, True) - y, x0, bounds=(0.0, 0.5 - 1e-12),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        x, converged = fit.x, bool(fit.success)
    else:
        x = x0
    params = NoiseParams(*map(float, x))
    pred = model.vector(params, exact)
    resid = float(np.sum((pred - y) ** 2))
    rows = sorted(zip(model.keys, y.tolist(), pred.tolist()), key=lambda t: (-t[2], t[0]))
    return NoiseFit(params, resid, rows, converged, exact)


# Convergence of the correlation estimate


def delta_metric(calibrated: dict, analytical: dict) -> float:
    """L1 distance between two maps over the same hyperedge set."""
    if calibrated.keys() != analytical.keys():
        raise ValueError("maps cover different hyperedges")
    return float(sum(abs(calibrated[k] - analytical[k]) for k in calibrated))


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


# Reports


@dataclass
class SweepRow:
    state: str
    rounds: int
    scheme: str
    strategy: str
    p_fail: float
    stderr: float
    acceptance: float
    n_shots: int


@dataclass
class Report:
    rows: list[SweepRow] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["state,rounds,scheme,strategy,p_fail,stderr,acceptance,n_shots"]
        for r in self.rows:
            lines.append(f"{r.state},{r.rounds},{r.scheme},{r.strategy},{r.p_fail!r},"
                         f"{r.stderr!r},{r.acceptance!r},{r.n_shots}")
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        out = []
        for name, fit in sorted(self.fits.items()):
            out.append(f"{name}.eps_i={fit.eps_i!r}")
            out.append(f"{name}.eps_m={fit.eps_m!r}")
            out.append(f"{name}.eps={fit.eps!r}")
            out.append(f"{name}.eps_stderr={fit.eps_stderr!r}")
        for k, v in sorted(self.values.items()):
            out.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(out) + "\n"


def points_csv(points) -> str:
    lines = ["rounds,p_fail,stderr"]
    lines += [f"{r},{p!r},{s!r}" for r, p, s in points]
    return "\n".join(lines) + "\n"


def hyperedge_curve_csv(fit: NoiseFit) -> str:
    """Measured and fitted probability per hyperedge, largest fitted first."""
    lines = ["rank,events,measured,model"]
    for i, (k, m, p) in enumerate(fit.per_hyperedge):
        lines.append(f"{i},{' '.join(map(str, k))},{m!r},{p!r}")
    return "\n".join(lines) + "\n"
