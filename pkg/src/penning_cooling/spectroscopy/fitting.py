"""Thermometry by fitting cooled-crystal spectra, and heating-rate regression."""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .hamiltonian import Observable
from .spectra import BroadeningRegion, CoherentModel, SpectrumPoint, apply_broadening, default_regions

NBAR_BOUNDS = (0.0, 5.0)
SIGMA_BOUNDS = (0.0, 5e3)


class FitWarning(UserWarning):
    pass


@dataclass
class FitConfig:
    model: CoherentModel
    observable: Observable = Observable.SINGLE_ION
    ion: int = 0
    rabi_guess: float = 14e3
    offset_guess: float | None = None       # None: centroid of the carrier window
    fit_broadening: bool = False
    regions: tuple[BroadeningRegion, ...] | None = None   # None: windows around the carrier estimate
    region_half_width: float = 10e3
    sidebands_half_width: float = 15e3      # how close a point must be to count as on a sideband
    restarts: int = 3
    chi2_tolerance: float = 3.0             # reduced chi^2 accepted without another start
    max_outer_evaluations: int = 120

    def __post_init__(self):
        self.observable = Observable(self.observable)
        if self.fit_broadening and self.regions is not None and not self.regions:
            raise ValueError("broadening needs at least one region")


@dataclass
class FitResult:
    nbar: tuple[float, ...]
    nbar_err: tuple[float, ...]
    sigma: tuple[float, ...]
    sigma_err: tuple[float, ...]
    offset: float
    offset_err: float
    rabi_frequency: float
    rabi_err: float
    chi2: float
    dof: int
    converged: bool = True
    upper_bound_only: bool = False
    starts: int = 1
    evaluations: int = 0
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if any(n < 0 for n in self.nbar) or any(s < 0 for s in self.sigma):
            raise ValueError("nbar and sigma must be non-negative")

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / max(self.dof, 1)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        d = json.loads(text)
        for k in ("nbar", "nbar_err", "sigma", "sigma_err"):
            d[k] = tuple(d[k])
        return cls(**d)


def _weights_any_sign(nbar: float, n_max: int) -> np.ndarray:
    # analytic in nbar around 0, so finite differences work at the boundary
    r = nbar / (nbar + 1.0)
    w = r ** np.arange(n_max + 1)
    return w / w.sum()


def _binomial_sigma(points: Sequence[SpectrumPoint]) -> np.ndarray:
    """Per-point standard error with add-one smoothing so empty bins keep a finite weight."""
    out = np.empty(len(points))
    for i, p in enumerate(points):
        n = p.shots if p.shots > 0 else 200
        k = p.excitation * n
        q = (k + 1.0) / (n + 2.0)
        out[i] = math.sqrt(q * (1.0 - q) / n)
    return out


def _select(data: Sequence[SpectrumPoint], cfg: FitConfig) -> list[SpectrumPoint]:
    pts = [p for p in data if p.observable is cfg.observable
           and (cfg.observable is not Observable.SINGLE_ION or p.ion == cfg.ion)]
    if not pts:
        raise ValueError("no data points match the requested observable")
    return sorted(pts, key=lambda p: p.detuning)


def _coverage(det: np.ndarray, freqs: Sequence[float], half: float, offset: float) -> dict[str, bool]:
    cov = {"carrier": bool(np.any(np.abs(det - offset) < half))}
    for k, f in enumerate(freqs):
        cov[f"red{k}"] = bool(np.any(np.abs(det - offset + f) < half))
        cov[f"blue{k}"] = bool(np.any(np.abs(det - offset - f) < half))
    return cov


def _carrier_centroid(det: np.ndarray, y: np.ndarray, half: float) -> float:
    near = np.abs(det) < half
    if not near.any() or y[near].sum() <= 0:
        return 0.0
    w = y[near] ** 2
    return float((det[near] * w).sum() / w.sum())


class _Objective:
    """chi^2 as a function of all parameters, with cached excitation tables."""

    def __init__(self, cfg: FitConfig, det: np.ndarray, y: np.ndarray, err: np.ndarray,
                 regions: Sequence[BroadeningRegion]):
        self.cfg, self.det, self.y, self.inv = cfg, det, y, 1.0 / err
        self.regions = tuple(regions)
        self.n_modes = cfg.model.n_modes
        self.evaluations = 0

    def table(self, rabi: float, offset: float) -> np.ndarray:
        model = self.cfg.model
        before = len(model._cache)
        t = model.excitation_table(self.det, rabi, offset, self.cfg.observable, self.cfg.ion)
        if len(model._cache) != before:
            self.evaluations += 1
        return t

    def predict(self, table: np.ndarray, nbars: Sequence[float], sigmas: Sequence[float]) -> np.ndarray:
        w = np.ones(1)
        for nb in nbars:
            w = np.outer(w, _weights_any_sign(nb, self.cfg.model.thermal_max)).ravel()
        y = table @ w
        if self.cfg.fit_broadening:
            y = apply_broadening(self.det, y, np.abs(sigmas), self.regions)
        return y

    def chi2(self, table: np.ndarray, inner: np.ndarray) -> float:
        nbars = inner[: self.n_modes]
        sigmas = inner[self.n_modes:] if self.cfg.fit_broadening else np.zeros(self.n_modes)
        r = (self.predict(table, nbars, sigmas) - self.y) * self.inv
        return float(r @ r)

    def full(self, theta: np.ndarray) -> float:
        return self.chi2(self.table(theta[0], theta[1]), theta[2:])

    def inner_bounds(self):
        b = [NBAR_BOUNDS] * self.n_modes
        if self.cfg.fit_broadening:
            b += [SIGMA_BOUNDS] * self.n_modes
        return b

    def solve_inner(self, table: np.ndarray, warm: np.ndarray | None) -> tuple[float, np.ndarray]:
        # coarse grid, then a bounded simplex from the best grid point
        nb_grid = (0.0, 0.05, 0.15, 0.4, 1.0)
        sg_grid = (300.0, 800.0, 1500.0) if self.cfg.fit_broadening else ()
        candidates = []
        for nbs in itertools.product(nb_grid, repeat=self.n_modes):
            if sg_grid:
                for sg in sg_grid:
                    candidates.append(np.array(nbs + (sg,) * self.n_modes))
            else:
                candidates.append(np.array(nbs))
        if warm is not None:
            candidates.append(np.asarray(warm, dtype=float))
        start = min(candidates, key=lambda c: self.chi2(table, c))
        scale = np.array([0.05] * self.n_modes + ([200.0] * self.n_modes if self.cfg.fit_broadening else []))
        simplex = [start] + [start + np.eye(len(start))[i] * scale[i] for i in range(len(start))]
        res = optimize.minimize(lambda x: self.chi2(table, x), start, method="Nelder-Mead",
                                bounds=self.inner_bounds(),
                                options={"initial_simplex": np.array(simplex), "xatol": 1e-4,
                                         "fatol": 1e-6, "maxiter": 2000})
        return float(res.fun), np.asarray(res.x)


def _hessian(f, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    n = len(x)
    h = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        h[i, i] = (f(x + e) - 2 * f0 + f(x - e)) / steps[i] ** 2
        for j in range(i + 1, n):
            g = np.zeros(n)
            g[j] = steps[j]
            h[i, j] = h[j, i] = (f(x + e + g) - f(x + e - g) - f(x - e + g) + f(x - e - g)) / (4 * steps[i] * steps[j])
    return h


def fit_sideband_spectrum(data: Sequence[SpectrumPoint], config: FitConfig) -> FitResult:
    """Fit n-bar per mode, Rabi frequency, carrier offset and (optionally) broadening.

    The Rabi frequency and offset are searched by an outer Nelder-Mead; for
    each trial the excitation table is computed once and the remaining
    parameters are found by an inner bounded Nelder-Mead on that table.
    """
    cfg = config
    pts = _select(data, cfg)
    det = np.array([p.detuning for p in pts])
    y = np.array([p.excitation for p in pts])
    err = _binomial_sigma(pts)
    freqs = cfg.model.mode_freqs
    half = cfg.sidebands_half_width

    offset0 = _carrier_centroid(det, y, half) if cfg.offset_guess is None else cfg.offset_guess
    cov = _coverage(det, freqs, half, offset0)
    if not cov["carrier"] or not all(cov[f"blue{k}"] for k in range(len(freqs))):
        raise ValueError(f"data must cover the carrier and the blue sideband of every mode: {cov}")
    no_red = not any(cov[f"red{k}"] for k in range(len(freqs)))

    regions = cfg.regions
    if regions is None:
        regions = tuple(default_regions(freqs, cfg.region_half_width, offset0)) if cfg.fit_broadening else ()
    obj = _Objective(cfg, det, y, err, regions)
    warm: dict[str, np.ndarray | None] = {"inner": None}
    rabi_scale, offset_scale = 0.01 * cfg.rabi_guess, 100.0

    def outer(u: np.ndarray) -> float:
        rabi = cfg.rabi_guess + u[0] * rabi_scale
        if rabi <= 0:
            return 1e30
        table = obj.table(rabi, offset0 + u[1] * offset_scale)
        val, x = obj.solve_inner(table, warm["inner"])
        warm["inner"] = x
        return val

    starts = [np.zeros(2), np.array([5.0, 5.0]), np.array([-5.0, -5.0]), np.array([10.0, 0.0])]
    best = None
    used = 0
    converged = False
    dof = max(len(pts) - 2 - len(obj.inner_bounds()), 1)
    for u0 in starts[: max(cfg.restarts, 1)]:
        used += 1
        simplex = np.array([u0, u0 + [2.0, 0.0], u0 + [0.0, 3.0]])
        res = optimize.minimize(outer, u0, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 0.3, "fatol": 0.2,
                                         "maxfev": cfg.max_outer_evaluations})
        if best is None or res.fun < best.fun:
            best = res
        if res.success and res.fun / dof <= cfg.chi2_tolerance:
            converged = True
            break

    rabi = cfg.rabi_guess + best.x[0] * rabi_scale
    offset = offset0 + best.x[1] * offset_scale
    _, inner = obj.solve_inner(obj.table(rabi, offset), warm["inner"])
    theta = np.concatenate([[rabi, offset], inner])
    chi2 = obj.full(theta)

    n = cfg.model.n_modes
    steps = np.concatenate([[2e-3 * rabi, 30.0], [0.01] * n, [30.0] * (len(inner) - n)])
    hess = _hessian(obj.full, theta, steps)
    notes = []
    try:
        cov_m = 2.0 * np.linalg.inv(hess)
        errs = np.sqrt(np.clip(np.diag(cov_m), 0.0, None))
        if np.any(np.diag(cov_m) < 0):
            notes.append("objective curvature not positive definite; some errors clipped")
    except np.linalg.LinAlgError:
        errs = np.full(len(theta), np.nan)
        notes.append("singular curvature matrix; errors unavailable")

    nbar = tuple(float(max(v, 0.0)) for v in inner[:n])
    nbar_err = tuple(float(e) for e in errs[2:2 + n])
    if cfg.fit_broadening:
        sigma = tuple(float(abs(v)) for v in inner[n:])
        sigma_err = tuple(float(e) for e in errs[2 + n:])
    else:
        sigma, sigma_err = (0.0,) * n, (0.0,) * n
    if no_red:
        notes.append("no red-sideband points: nbar reported as a two-sigma upper bound")
        nbar = tuple(v + 2 * e for v, e in zip(nbar, nbar_err))
    if not converged:
        warnings.warn(f"fit did not converge after {used} starts (reduced chi2 {chi2 / dof:.2f})",
                      FitWarning, stacklevel=2)
    return FitResult(nbar=nbar, nbar_err=nbar_err, sigma=sigma, sigma_err=sigma_err,
                     offset=float(offset), offset_err=float(errs[1]),
                     rabi_frequency=float(rabi), rabi_err=float(errs[0]),
                     chi2=float(chi2), dof=int(dof), converged=converged, upper_bound_only=no_red,
                     starts=used, evaluations=obj.evaluations, notes=notes)


def average_fits(results: Sequence[FitResult]) -> FitResult:
    """Mean of independent per-ion fits; uncertainties add in quadrature."""
    if not results:
        raise ValueError("nothing to average")
    k = len(results)

    def mean(attr):
        return tuple(float(np.mean(v)) for v in zip(*(getattr(r, attr) for r in results)))

    def quad(attr):
        return tuple(float(math.sqrt(sum(e * e for e in v)) / k) for v in zip(*(getattr(r, attr) for r in results)))

    return FitResult(
        nbar=mean("nbar"), nbar_err=quad("nbar_err"), sigma=mean("sigma"), sigma_err=quad("sigma_err"),
        offset=float(np.mean([r.offset for r in results])),
        offset_err=float(math.sqrt(sum(r.offset_err**2 for r in results)) / k),
        rabi_frequency=float(np.mean([r.rabi_frequency for r in results])),
        rabi_err=float(math.sqrt(sum(r.rabi_err**2 for r in results)) / k),
        chi2=float(sum(r.chi2 for r in results)), dof=int(sum(r.dof for r in results)),
        converged=all(r.converged for r in results),
        upper_bound_only=any(r.upper_bound_only for r in results),
        starts=max(r.starts for r in results), evaluations=sum(r.evaluations for r in results),
        notes=[n for r in results for n in r.notes])


# ---------------------------------------------------------------------------
# heating

@dataclass(frozen=True)
class HeatingFit:
    rate: float
    uncertainty: float
    intercept: float
    chi2: float

    def __iter__(self):
        # unpacks as (rate, uncertainty)
        return iter((self.rate, self.uncertainty))


def heating_rate_fit(nbar_vs_delay: Sequence[tuple[float, float, float]]) -> HeatingFit:
    """Weighted straight-line fit of n-bar against delay; slope in quanta per second.

    With all uncertainties zero the fit is unweighted and the slope error
    comes from the residual scatter.
    """
    pts = np.asarray(nbar_vs_delay, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 3:
        raise ValueError("need at least three (delay, nbar, uncertainty) points")
    t, nb, sig = pts.T
    if np.ptp(t) == 0:
        raise ValueError("delays must not all be equal")
    if np.any(sig < 0):
        raise ValueError("uncertainties must be non-negative")
    if np.all(sig == 0):
        coef, cov = np.polyfit(t, nb, 1, cov="unscaled")
        resid = nb - np.polyval(coef, t)
        s2 = float(resid @ resid) / max(len(t) - 2, 1)
        return HeatingFit(float(coef[0]), float(math.sqrt(cov[0, 0] * s2)), float(coef[1]), float(resid @ resid))
    if np.any(sig == 0):
        raise ValueError("mix of zero and non-zero uncertainties")
    coef, cov = np.polyfit(t, nb, 1, w=1.0 / sig, cov="unscaled")
    resid = (nb - np.polyval(coef, t)) / sig
    return HeatingFit(float(coef[0]), float(math.sqrt(cov[0, 0])), float(coef[1]), float(resid @ resid))
