"""Reluctivity curves, the magnetic energy density, and their certification.

A reluctivity model maps a field magnitude s = |B| to a positive
reluctivity nu(s).  The solver requires the secant slopes of s -> nu(s)*s
to be bounded below by some m_hat > 0 (strong monotonicity) and above by
some L_hat < inf (Lipschitz continuity); both constants are certified
numerically on a grid by :func:`estimate_constants`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NegativeArgument, NegativeFieldMagnitude

REGION_CONDUCTOR = "C"
REGION_INSULATOR = "I"

_KINDS = ("constant", "rational_saturation", "user_tabulated")


@dataclass(frozen=True)
class ReluctivityModel:
    """Isotropic reluctivity curve, optionally different per subdomain.

    Parameters per kind:
      constant:             nu0 > 0
      rational_saturation:  nu_min > 0, nu_max >= nu_min,
                            nu(s) = nu_min + (nu_max - nu_min)/(1 + s^2)
      user_tabulated:       table (k, 2) of (s, nu) samples, s increasing;
                            nu(s)*s is interpolated piecewise linearly.

    ``params`` maps a subdomain label ("C" or "I") to that region's
    parameter dict.  A single entry under label "*" applies everywhere.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown reluctivity kind {self.kind!r}")

    def region_params(self, region):
        if region in self.params:
            return self.params[region]
        return self.params["*"]


def constant_model(nu0):
    return ReluctivityModel("constant", {"*": {"nu0": float(nu0)}})


def rational_saturation_model(nu_min, nu_max):
    return ReluctivityModel(
        "rational_saturation",
        {"*": {"nu_min": float(nu_min), "nu_max": float(nu_max)}},
    )


def tabulated_model(table):
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
        raise ValueError("table must be (k, 2) with k >= 2")
    if not np.all(np.diff(table[:, 0]) > 0):
        raise ValueError("table s-column must be strictly increasing")
    return ReluctivityModel("user_tabulated", {"*": {"table": table}})


def _tab_g(table, s):
    # g(s) = nu(s)*s, piecewise linear in s; extended with the last slope.
    sk = table[:, 0]
    gk = table[:, 0] * table[:, 1]
    s = np.asarray(s, dtype=float)
    out = np.interp(s, sk, gk)
    beyond = s > sk[-1]
    if np.any(beyond):
        slope = (gk[-1] - gk[-2]) / (sk[-1] - sk[-2])
        out = np.where(beyond, gk[-1] + slope * (s - sk[-1]), out)
    return out


def model_eval(model, region, s):
    """Evaluate nu(s) and d/ds[nu(s)*s] for scalar or array s >= 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise NegativeFieldMagnitude("field magnitude s must be >= 0")
    p = model.region_params(region)
    if model.kind == "constant":
        nu = np.full_like(s, p["nu0"])
        dgds = np.full_like(s, p["nu0"])
    elif model.kind == "rational_saturation":
        delta = p["nu_max"] - p["nu_min"]
        one_p = 1.0 + s * s
        nu = p["nu_min"] + delta / one_p
        dgds = p["nu_min"] + delta * (1.0 - s * s) / (one_p * one_p)
    else:
        table = p["table"]
        eps = 1e-8 * max(1.0, float(table[-1, 0]))
        g = _tab_g(table, s)
        nu = np.where(s > 0, g / np.where(s > 0, s, 1.0), table[0, 1])
        dgds = (_tab_g(table, s + eps) - _tab_g(table, np.maximum(s - eps, 0.0))) / (
            eps + np.minimum(s, eps)
        )
    if np.ndim(s) == 0:
        return float(nu), float(dgds)
    return nu, dgds


def theta_eval(model, region, rho):
    """Magnetic energy density theta(rho) = int_0^sqrt(rho) nu(z) z dz.

    Closed form for the constant and rational-saturation kinds, adaptive
    quadrature (abs tol 1e-12) for tabulated curves.  Accepts scalars or
    arrays of rho >= 0.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 0):
        raise NegativeArgument("energy density argument rho must be >= 0")
    p = model.region_params(region)
    if model.kind == "constant":
        out = 0.5 * p["nu0"] * rho_arr
    elif model.kind == "rational_saturation":
        delta = p["nu_max"] - p["nu_min"]
        out = 0.5 * p["nu_min"] * rho_arr + 0.5 * delta * np.log1p(rho_arr)
    else:
        table = p["table"]

        def _one(r):
            if r == 0.0:
                return 0.0
            val, _ = integrate.quad(
                lambda z: _tab_g(table, z), 0.0, np.sqrt(r), epsabs=1e-12, limit=200
            )
            return val

        out = np.vectorize(_one)(rho_arr)
    if np.ndim(rho) == 0:
        return float(out)
    return out


@dataclass
class MaterialValidationReport:
    """Certified secant constants of s -> nu(s)*s on a sample grid."""

    m_hat: float
    L_hat: float
    grid: np.ndarray
    violations: list

    @property
    def passed(self):
        return self.m_hat > 0.0 and not self.violations


def estimate_constants(model, region="*", s_max=100.0, n_grid=2000):
    """Estimate monotonicity/Lipschitz constants over all grid pairs.

    m_hat is the smallest secant slope of g(s) = nu(s)*s over the grid,
    L_hat the largest absolute secant slope.  The two-sided pointwise
    bound m_hat <= nu(s) <= L_hat is checked as well; failures land in
    the violations list.
    """
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if n_grid < 2:
        raise ValueError("n_grid must be at least 2")
    s = np.linspace(0.0, s_max, n_grid)
    nu, _ = model_eval(model, region, s)
    g = nu * s
    ds = np.subtract.outer(s, s)
    dg = np.subtract.outer(g, g)
    iu = np.triu_indices(n_grid, k=1)
    slopes = dg[iu] / ds[iu]
    m_hat = float(slopes.min())
    L_hat = float(np.abs(slopes).max())

    violations = []
    if m_hat <= 0.0:
        worst = int(np.argmin(slopes))
        violations.append((float(s[iu[1][worst]]), float(s[iu[0][worst]]), m_hat))
    # pointwise bound implied by the secant constants (s > 0 only; nu(0)
    # itself does not enter the secant slopes)
    pos = s > 0
    bad_low = pos & (nu < m_hat - 1e-12)
    bad_high = pos & (nu > L_hat + 1e-12)
    for idx in np.flatnonzero(bad_low | bad_high):
        violations.append((float(s[idx]), float(s[idx]), float(nu[idx])))
    return MaterialValidationReport(m_hat=m_hat, L_hat=L_hat, grid=s, violations=violations)


@dataclass
class AssumptionReport:
    passed: bool
    reasons: list
    material: MaterialValidationReport | None = None


def validate_assumptions(model, sigma_C, R, s_max=100.0, n_grid=2000):
    """Check conductivity, resistance-matrix, and reluctivity requirements.

    Passes iff sigma_C > 0, R is symmetric positive definite, and the
    reluctivity curve certifies with m_hat > 0 on all subdomains.
    """
    reasons = []
    if not sigma_C > 0:
        reasons.append("conductivity sigma_C must be positive")
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        reasons.append("resistance matrix R must be square")
    else:
        if np.linalg.norm(R - R.T) > 1e-12 * max(np.linalg.norm(R), 1e-300):
            reasons.append("resistance matrix R must be symmetric")
        else:
            try:
                np.linalg.cholesky(R)
            except np.linalg.LinAlgError:
                reasons.append("resistance matrix R must be positive definite")
    mat_report = None
    regions = sorted(model.params.keys())
    for region in regions:
        rep = estimate_constants(model, region, s_max=s_max, n_grid=n_grid)
        if mat_report is None or rep.m_hat < mat_report.m_hat:
            mat_report = rep
        if not rep.passed:
            reasons.append(
                f"reluctivity curve on region {region!r} is not strongly "
                f"monotone (m_hat = {rep.m_hat:.3e})"
            )
    return AssumptionReport(passed=not reasons, reasons=reasons, material=mat_report)
