"""Decay-rate fitting and decay reports for nonlinear runs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .linear import coercivity_constants
from .params import PhysicalParams
from .spectral import SobolevIndex, SpectralVectorField, TWO_PI

MIN_SAMPLES = 8
MODELS = ("exponential", "algebraic")


@dataclass(frozen=True)
class DecayFit:
    model: str
    fitted_rate: float
    window: tuple
    r_squared: float
    n_samples: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_decay(times: Sequence[float], values: Sequence[float], model: str = "exponential", *,
              t_min: Optional[float] = None, t_max: Optional[float] = None) -> DecayFit:
    """Least-squares decay rate.

    exponential: log v = c - rate * t
    algebraic:   log v = c - rate * log(1 + t)
    """
    if model not in MODELS:
        raise DomainError(f"unknown decay model {model!r}")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise DomainError("times and values differ in length")
    keep = np.ones(t.shape, dtype=bool)
    if t_min is not None:
        keep &= t >= t_min
    if t_max is not None:
        keep &= t <= t_max
    t, v = t[keep], v[keep]
    if t.size < MIN_SAMPLES:
        raise DomainError(f"fit_decay needs at least {MIN_SAMPLES} samples, got {t.size}")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise DomainError("fit_decay needs strictly positive finite samples")
    if t.max() <= t.min():
        raise DomainError("degenerate fit window")
    x = t if model == "exponential" else np.log1p(t)
    y = np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(model, float(-slope), (float(t.min()), float(t.max())), r2, int(t.size))


def _regularity(theta: float, s: float) -> float:
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    return (1.0 - theta) * (1.0 + s)


def _weighted_sq(f: SpectralVectorField, index: SobolevIndex) -> float:
    w = index.weights(f.grid)
    return float(np.sum(w * np.sum(np.abs(f.coeffs) ** 2, axis=0)))


def interpolated_norm(u, omega, zeta, theta: float, s: float = 0.0) -> float:
    """||u||^2 in the homogeneous space of order (1-theta)(1+s) plus ||omega - zeta||^2 in the inhomogeneous one.

    The mean of u (a Galilean constant) is excluded.
    """
    a = _regularity(theta, s)
    h = omega - zeta if zeta is not None else omega
    return _weighted_sq(u, SobolevIndex(a, homogeneous=True)) + _weighted_sq(h, SobolevIndex(a))


def interpolation_bound(u, omega, zeta, theta: float, s: float = 0.0) -> float:
    """Hoelder bound Q(0)^(1-theta) Q(1)^theta for :func:`interpolated_norm` Q(theta)."""
    _regularity(theta, s)
    top = interpolated_norm(u, omega, zeta, 0.0, s)
    low = interpolated_norm(u, omega, zeta, 1.0, s)
    return top ** (1.0 - theta) * low**theta


def slowest_linear_rate(params: PhysicalParams) -> float:
    """Smallest uncoupled decay rate of the linear flows on the lattice (|k| >= 1 for u)."""
    alpha, beta, gamma, delta = params.micro_lame
    return min(TWO_PI**2 * params.velocity_diffusivity, delta)


def default_burn_in(params: PhysicalParams, horizon: float) -> float:
    return min(3.0 / slowest_linear_rate(params), 0.1 * horizon)


def theory_constants(params: PhysicalParams) -> dict:
    c = coercivity_constants(params)
    return {"C0": c.C0, "C1": c.C1}


def decay_report(records: Sequence[dict], params: PhysicalParams, *, envelope: str = "none", mu: float = 0.0,
                 theta_ladder: Sequence[float] = (0.25, 0.5, 1.0), zeta_is_zero: bool = True,
                 t_burn: Optional[float] = None, energy_slack: float = 0.05, envelope_slack: float = 0.1) -> dict:
    """Compare fitted decay rates of a run against the theoretical envelopes.

    ``records`` are diagnostics rows holding ``t``, ``E0`` and ``interp_<theta>``.
    """
    if len(records) < MIN_SAMPLES:
        raise DomainError(f"decay report needs at least {MIN_SAMPLES} samples")
    t = np.array([r["t"] for r in records], dtype=float)
    horizon = float(t[-1])
    burn = default_burn_in(params, horizon) if t_burn is None else float(t_burn)
    consts = theory_constants(params)
    C0 = consts["C0"]
    criteria = []

    def positive(series):
        arr = np.asarray(series, dtype=float)
        return arr > 0

    energy = np.array([r["E0"] for r in records], dtype=float)
    if envelope == "none":
        mask = positive(energy) & (t >= burn)
        fit = fit_decay(t[mask], energy[mask], "exponential")
        need = (1.0 - energy_slack) * C0
        criteria.append({
            "name": "unforced_energy_rate",
            "status": "pass" if fit.fitted_rate >= need else "fail",
            "fit": fit.as_dict(),
            "threshold": need,
            "note": "" if zeta_is_zero else "microflow present; bound derived for zeta0 = 0",
        })
    else:
        criteria.append({"name": "unforced_energy_rate", "status": "skipped", "note": "forcing active"})

    for theta in theta_ladder:
        name = f"envelope_theta_{theta:g}"
        if envelope == "none":
            criteria.append({"name": name, "status": "skipped", "note": "forcing envelope off"})
            continue
        key = interp_key(theta)
        series = np.array([r[key] for r in records], dtype=float)
        mask = positive(series) & (t >= burn)
        if envelope == "algebraic":
            fit = fit_decay(t[mask], series[mask], "algebraic")
            need = (1.0 - envelope_slack) * mu * theta
        else:
            fit = fit_decay(t[mask], series[mask], "exponential")
            need = (1.0 - envelope_slack) * min(C0 / 2.0, mu) * theta
        criteria.append({
            "name": name,
            "status": "pass" if fit.fitted_rate >= need else "fail",
            "fit": fit.as_dict(),
            "threshold": need,
        })
    checked = [c for c in criteria if c["status"] != "skipped"]
    return {
        "scenario": {"envelope": envelope, "mu": mu, "theta_ladder": list(theta_ladder), "t_burn": burn,
                     "horizon": horizon, "zeta0_zero": zeta_is_zero},
        "theory": consts,
        "criteria": criteria,
        "passed": all(c["status"] == "pass" for c in checked),
    }


def interp_key(theta: float) -> str:
    return f"interp_{theta:g}"


def render_text(report: dict) -> str:
    lines = ["decay report", "============"]
    sc = report["scenario"]
    lines.append(f"envelope: {sc['envelope']} (mu={sc['mu']:g}), burn-in t >= {sc['t_burn']:.4g}, horizon {sc['horizon']:.4g}")
    lines.append(f"C0 = {report['theory']['C0']:.6g}, C1 = {report['theory']['C1']:.6g}")
    for c in report["criteria"]:
        if c["status"] == "skipped":
            lines.append(f"  [skipped] {c['name']}: {c.get('note', '')}")
            continue
        fit = c["fit"]
        lines.append(f"  [{c['status']}] {c['name']}: fitted {fit['model']} rate {fit['fitted_rate']:.6g}"
                     f" >= {c['threshold']:.6g} (R^2 {fit['r_squared']:.4f})")
        if c.get("note"):
            lines.append(f"      note: {c['note']}")
    lines.append("overall: " + ("PASS" if report["passed"] else "FAIL"))
    return "\n".join(lines) + "\n"


def plot_csv(records: Sequence[dict], theta_ladder: Sequence[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = [interp_key(th) for th in theta_ladder]
    writer.writerow(["t", "E0"] + [f"norm_theta_{th:g}" for th in theta_ladder])
    for r in records:
        writer.writerow([repr(float(r["t"])), repr(float(r["E0"]))] + [repr(float(r[k])) for k in keys])
    return buf.getvalue()


def is_finite_record(rec: dict) -> bool:
    return all(not isinstance(v, float) or math.isfinite(v) for v in rec.values())
