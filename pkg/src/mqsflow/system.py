"""Coupled field-circuit system: discrete operators, energy, and solve paths.

The lumped circuit injects current through winding densities; the metric
map stacks the square-root conducting mass with the resistance-weighted
flux-linkage map, so one prox step minimizes

    J(a) = Phi(a) + 1/(2 tau) sigma_C ||a - a_prev||^2_{M_C}
         + 1/(2 tau) || R^{-1/2} (C^T a - C^T a_prev - tau v_k) ||^2.

Currents are recovered per step as i_k = R^{-1} (v_k - d/dt C^T a).
An independent Schur-reduced Newton path eliminates the current unknown
up front and serves as an equivalence witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import core, fem, material
from .errors import NonConvergence, SingularStep, ValidationFailure


@dataclass(frozen=True)
class VoltageSignal:
    """Applied winding voltages as a function of time.

    kinds: "constant" (value for all t), "step" (0 at t <= 0, value for
    t > 0), "table" (piecewise-linear interpolation of (t, v) samples).
    """

    kind: str
    value: np.ndarray = None          # (m,) for constant/step
    table: np.ndarray = None          # (k, 1+m) rows of t, v_1..v_m

    def __call__(self, t):
        if self.kind == "constant":
            return np.array(self.value, dtype=float)
        if self.kind == "step":
            v = np.array(self.value, dtype=float)
            return v if t > 0 else np.zeros_like(v)
        ts = self.table[:, 0]
        return np.array([
            np.interp(t, ts, self.table[:, 1 + j])
            for j in range(self.table.shape[1] - 1)
        ])

    @property
    def m(self):
        if self.kind == "table":
            return self.table.shape[1] - 1
        return np.atleast_1d(self.value).shape[0]


DEFAULT_WINDING = fem.WindingSpec(
    rectangles=(
        ((0.1, 0.2, 0.4, 0.6, 100.0), (0.8, 0.9, 0.4, 0.6, -100.0)),
    )
)


@dataclass(frozen=True)
class MQSConfig:
    n: int = 32
    conductor_center: tuple = (0.5, 0.5)
    conductor_radius: float = 0.2
    winding: fem.WindingSpec = DEFAULT_WINDING
    model: material.ReluctivityModel = field(
        default_factory=lambda: material.rational_saturation_model(1.0, 5.0)
    )
    sigma_C: float = 1.0
    R: np.ndarray = field(default_factory=lambda: np.array([[1.0]]))
    T: float = 1.0
    tau: float = 1.0 / 64.0
    voltage: VoltageSignal = field(
        default_factory=lambda: VoltageSignal("step", np.array([1.0]))
    )
    a0_kind: str = "zero"       # zero | random | file
    a0_path: str = ""
    seed: int = 42
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    newton_start: str = "prev"  # "prev" or "zero" initial Newton guess
    oracle_dim_limit: int = 64
    # optional manufactured volumetric forcing added to the field equation;
    # callable (mesh, dofs, t) -> load vector, used only by convergence studies
    forcing: Optional[Callable] = None

    @property
    def n_steps(self):
        return int(round(self.T / self.tau))


@dataclass
class MQSOperators:
    mesh: fem.Mesh2D
    dofs: fem.DofMap
    model: material.ReluctivityModel
    sigma_C: float
    R: np.ndarray
    R_inv: np.ndarray
    R_inv_sqrt: np.ndarray
    msigma: sp.csr_matrix      # sigma_C-weighted conducting mass
    mass_C: sp.csr_matrix      # unit-conductivity conducting mass
    mass: sp.csr_matrix        # full mass
    stiffness: sp.csr_matrix   # unit-coefficient stiffness K_lin
    coupling: np.ndarray       # C, (n_dofs, m)
    m_hat: float
    L_hat: float
    L_C: float

    @property
    def m(self):
        return self.coupling.shape[1]

    @property
    def n_dofs(self):
        return self.dofs.n_dofs

    def K(self, a):
        return fem.curlcurl_residual(self.mesh, self.dofs, self.model, a)

    def K_tangent(self, a):
        return fem.curlcurl_jacobian(self.mesh, self.dofs, self.model, a)

    def energy(self, a):
        return fem.magnetic_energy(self.mesh, self.dofs, self.model, a)

    @property
    def coercivity_constant(self):
        """Certified lower-bound constant for the omega=1 shifted energy."""
        return min(self.m_hat, self.sigma_C) / (2.0 * self.L_C)


@dataclass
class MQSTrajectory:
    times: np.ndarray       # (N+1,)
    fields: np.ndarray      # (N+1, n_dofs)
    currents: np.ndarray    # (N+1, m); row 0 is nan (undefined by the scheme)
    energies: np.ndarray    # (N+1,)
    fluxes: np.ndarray      # (N+1, m), C^T a_k
    balance_residuals: np.ndarray  # (N+1,); row 0 is nan
    voltages: np.ndarray    # (N+1, m), samples v(t_k)
    core_trajectory: core.DaeTrajectory

    @property
    def tau(self):
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self):
        return self.times.shape[0] - 1


def _principal_inv_sqrt(R):
    w, V = np.linalg.eigh(R)
    if np.any(w <= 0):
        raise ValidationFailure("resistance matrix R must be positive definite")
    return (V * (1.0 / np.sqrt(w))) @ V.T


def _metric_matrix(mesh, dofs, sigma_C, coupling, R_inv_sqrt):
    """Sparse factor E with E^T E = sigma_C M_C + C R^{-1} C^T.

    The conducting-mass part is factored element by element through the
    Cholesky factors of the 3x3 local mass blocks, so the adjoint identity
    holds exactly in floating point up to rounding.
    """
    areas, _ = fem._geometry(mesh)
    c_elems = np.flatnonzero(mesh.element_labels == fem.LABEL_C)
    local_chol = np.linalg.cholesky(fem._LOCAL_MASS)  # M_loc = L L^T
    rows, cols, vals = [], [], []
    for r, e in enumerate(c_elems):
        gd = dofs.vertex_to_dof[mesh.triangles[e]]
        block = np.sqrt(sigma_C * areas[e]) * local_chol.T  # block^T block = sigma area M_loc
        for a in range(3):
            for b in range(3):
                if gd[b] >= 0 and block[a, b] != 0.0:
                    rows.append(3 * r + a)
                    cols.append(gd[b])
                    vals.append(block[a, b])
    n_field_rows = 3 * c_elems.size
    E1 = sp.coo_matrix(
        (vals, (rows, cols)), shape=(n_field_rows, dofs.n_dofs)
    ).tocsr()
    E2 = sp.csr_matrix(R_inv_sqrt @ coupling.T)
    return sp.vstack([E1, E2]).tocsr(), n_field_rows


def build_system(config):
    """Assemble operators, the energy functional, and the metric map."""
    report = material.validate_assumptions(config.model, config.sigma_C, config.R)
    if not report.passed:
        raise ValidationFailure(report.reasons)
    mesh, dofs = fem.build_mesh(
        config.n, (*config.conductor_center, config.conductor_radius)
    )
    msigma, mass = fem.assemble_sigma_mass(mesh, dofs, config.sigma_C)
    mass_C = msigma / config.sigma_C
    stiffness = fem.assemble_stiffness(mesh, dofs)
    coupling = fem.assemble_coupling(mesh, dofs, config.winding)
    R = np.atleast_2d(np.asarray(config.R, dtype=float))
    if R.shape[0] != config.winding.m:
        raise ValidationFailure(
            f"R is {R.shape[0]}x{R.shape[1]} but there are {config.winding.m} windings"
        )
    R_inv = np.linalg.inv(R)
    R_inv_sqrt = _principal_inv_sqrt(R)
    L_C = fem.estimate_coercivity_constant(mesh, dofs)

    ops = MQSOperators(
        mesh=mesh, dofs=dofs, model=config.model, sigma_C=config.sigma_C,
        R=R, R_inv=R_inv, R_inv_sqrt=R_inv_sqrt,
        msigma=msigma, mass_C=mass_C, mass=mass, stiffness=stiffness,
        coupling=coupling,
        m_hat=report.material.m_hat, L_hat=report.material.L_hat, L_C=L_C,
    )
    phi = core.EllipticFunctional(
        eval=ops.energy, gateaux=ops.K, hessian=ops.K_tangent,
        ellipticity_omega=1.0,
    )
    E_mat, _ = _metric_matrix(mesh, dofs, config.sigma_C, coupling, R_inv_sqrt)
    E = core.LinearMapE(E_mat)
    return ops, phi, E


def mqs_energy(ops, a):
    return ops.energy(a)


def mqs_energy_gateaux(ops, a):
    return ops.K(a)


def initial_field(config, ops):
    if config.a0_kind == "zero":
        return np.zeros(ops.n_dofs)
    if config.a0_kind == "random":
        rng = np.random.default_rng(config.seed)
        return 0.1 * rng.standard_normal(ops.n_dofs)
    if config.a0_kind == "file":
        return np.load(config.a0_path)
    raise ValidationFailure(f"unknown initial field kind {config.a0_kind!r}")


def _voltage_samples(config):
    n = config.n_steps
    times = config.tau * np.arange(n + 1)
    return np.array([config.voltage(t) for t in times])


def _metric_input(ops, E, v_samples):
    """Input in metric coordinates: (0 field block, R^{-1/2} v)."""
    n_rows = E.dim_Z
    m = ops.m
    f = np.zeros((v_samples.shape[0], n_rows))
    f[:, n_rows - m:] = v_samples @ ops.R_inv_sqrt.T
    return f


def recover_currents(ops, fields, v_samples, tau):
    """i_k = R^{-1} (v_k - (C^T a_k - C^T a_{k-1}) / tau), i_0 undefined."""
    fluxes = fields @ ops.coupling
    currents = np.full((fields.shape[0], ops.m), np.nan)
    rates = np.diff(fluxes, axis=0) / tau
    currents[1:] = (v_samples[1:] - rates) @ ops.R_inv.T
    return currents, fluxes


def power_balance(ops, traj):
    """Per-step defect of the discrete power balance, nan at k = 0.

    delta_k = Phi_k - Phi_{k-1} - tau (i_k . v_k - i_k . R i_k
              - sigma_C || (a_k - a_{k-1}) / tau ||^2_{M_C}).
    """
    tau = traj.tau
    da = np.diff(traj.fields, axis=0) / tau
    ohmic_field = ops.sigma_C * np.einsum(
        "ki,ki->k", da, (ops.mass_C @ da.T).T
    )
    i = traj.currents[1:]
    v = traj.voltages[1:]
    supplied = np.einsum("kj,kj->k", i, v)
    ohmic_wind = np.einsum("kj,kj->k", i, i @ ops.R.T)
    out = np.full(traj.times.shape[0], np.nan)
    out[1:] = np.diff(traj.energies) - tau * (supplied - ohmic_wind - ohmic_field)
    return out


def solve(config, ops=None, phi=None, E=None):
    """Run the coupled system over [0, T] with the prox stepper."""
    if ops is None:
        ops, phi, E = build_system(config)
    a0 = initial_field(config, ops)
    v_samples = _voltage_samples(config)
    f = _metric_input(ops, E, v_samples)
    prox_cfg = core.ProxConfig(
        tau=config.tau, n_steps=config.n_steps,
        newton_tol=config.newton_tol, newton_max_iter=config.newton_max_iter,
    )
    if config.forcing is None and config.newton_start == "prev":
        traj = core.solve_trajectory(phi, E, a0, f, prox_cfg)
    else:
        traj = _solve_custom(config, ops, phi, E, a0, f, prox_cfg)
    currents, fluxes = recover_currents(ops, traj.states, v_samples, config.tau)
    mqs_traj = MQSTrajectory(
        times=traj.times, fields=traj.states, currents=currents,
        energies=traj.energies, fluxes=fluxes,
        balance_residuals=np.empty(0), voltages=v_samples,
        core_trajectory=traj,
    )
    mqs_traj.balance_residuals = power_balance(ops, mqs_traj)
    return mqs_traj


def _solve_custom(config, ops, phi, E, a0, f, prox_cfg):
    """Step loop with per-step functional adjustments (forcing, start guess)."""
    n = prox_cfg.n_steps
    fk = core.resolve_inputs(f, n, E.dim_Z, prox_cfg.input_sampling)
    states = np.empty((n + 1, E.dim_X))
    states[0] = a0
    times = prox_cfg.tau * np.arange(n + 1)
    for k in range(1, n + 1):
        phi_k = phi
        if config.forcing is not None:
            load = config.forcing(ops.mesh, ops.dofs, times[k])
            phi_k = core.EllipticFunctional(
                eval=lambda a, load=load: phi.eval(a) - float(load @ a),
                gateaux=lambda a, load=load: phi.gateaux(a) - load,
                hessian=phi.hessian,
                ellipticity_omega=phi.ellipticity_omega,
            )
        x_start = states[k - 1]
        if config.newton_start == "zero":
            x_start = np.zeros(E.dim_X)
        try:
            states[k] = _prox_from(
                phi_k, E, states[k - 1], fk[k - 1], prox_cfg, x_start
            )
        except (NonConvergence, SingularStep) as exc:
            exc.step = k
            raise
    images = np.array([E.apply(x) for x in states])
    energies = np.array([phi.eval(x) for x in states])
    rates = np.diff(images, axis=0) / prox_cfg.tau
    return core.DaeTrajectory(times, states, images, rates, energies, fk)


def _prox_from(phi, E, x_prev, f_k, prox_cfg, x_start):
    """prox_step variant with an explicit Newton starting point."""
    tau = prox_cfg.tau
    b = E.apply(x_prev) + tau * np.asarray(f_k, dtype=float)

    def objective(x):
        mis = E.apply(x) - b
        return phi.eval(x) + 0.5 / tau * float(mis @ mis)

    def residual(x):
        return phi.gateaux(x) + E.apply_adjoint(E.apply(x) - b) / tau

    x = np.asarray(x_start, dtype=float).copy()
    g = residual(x)
    g0 = float(np.linalg.norm(residual(x_prev)))
    if g0 == 0.0 and np.array_equal(x, x_prev):
        return x
    tol = prox_cfg.newton_tol * (1.0 + g0)
    J = objective(x)
    for _ in range(prox_cfg.newton_max_iter):
        if np.linalg.norm(g) <= tol:
            return x
        H = core._combine(phi.hessian(x), E.gram / tau)
        d = core._solve_newton_system(H, -g)
        slope = float(g @ d)
        if slope >= 0:
            raise SingularStep("Newton direction is not a descent direction")
        x, J = core.armijo_search(objective, x, d, J, slope,
                                  c=prox_cfg.armijo_c,
                                  shrink=prox_cfg.armijo_shrink)
        g = residual(x)
    if np.linalg.norm(g) <= tol:
        return x
    raise NonConvergence("Newton did not converge")


def schur_step(ops, a_prev, v_k, tau, *, newton_tol=1e-10, newton_max_iter=50,
               forcing_load=None):
    """Field-only implicit step after eliminating the circuit unknown.

    Solves (M_red / tau)(a - a_prev) + K(a) = C R^{-1} v_k with
    M_red = sigma_C M_C + C R^{-1} C^T by damped Newton.
    """
    M_red = ops.msigma + sp.csr_matrix(ops.coupling @ ops.R_inv @ ops.coupling.T)
    rhs_const = ops.coupling @ (ops.R_inv @ np.atleast_1d(v_k))
    if forcing_load is not None:
        rhs_const = rhs_const + forcing_load

    def residual(a):
        return (M_red @ (a - a_prev)) / tau + ops.K(a) - rhs_const

    def merit(a):
        d = a - a_prev
        return (
            ops.energy(a) + 0.5 / tau * float(d @ (M_red @ d))
            - float(rhs_const @ a)
        )

    a = np.asarray(a_prev, dtype=float).copy()
    g = residual(a)
    g0 = float(np.linalg.norm(g))
    if g0 == 0.0:
        return a
    tol = newton_tol * (1.0 + g0)
    J = merit(a)
    for _ in range(newton_max_iter):
        if np.linalg.norm(g) <= tol:
            return a
        H = ops.K_tangent(a) + M_red / tau
        d = core._solve_newton_system(sp.csc_matrix(H), -g)
        slope = float(g @ d)
        if slope >= 0:
            raise SingularStep("Newton direction is not a descent direction")
        a, J = core.armijo_search(merit, a, d, J, slope)
        g = residual(a)
    if np.linalg.norm(g) <= tol:
        return a
    raise NonConvergence("Schur Newton did not converge")


def solve_schur(config, ops=None):
    """Full trajectory through the Schur-reduced path (equivalence witness)."""
    if ops is None:
        ops, _, _ = build_system(config)
    a0 = initial_field(config, ops)
    v_samples = _voltage_samples(config)
    n = config.n_steps
    fields = np.empty((n + 1, ops.n_dofs))
    fields[0] = a0
    for k in range(1, n + 1):
        load = None
        if config.forcing is not None:
            load = config.forcing(ops.mesh, ops.dofs, config.tau * k)
        fields[k] = schur_step(
            ops, fields[k - 1], v_samples[k], config.tau,
            newton_tol=config.newton_tol,
            newton_max_iter=config.newton_max_iter,
            forcing_load=load,
        )
    return fields


@dataclass
class WeakResidualReport:
    max_field_residual: float
    max_circuit_residual: float
    field_residuals: np.ndarray    # (N,)
    circuit_residuals: np.ndarray  # (N,)


def check_weak_solution(ops, traj, v_samples=None):
    """Residuals of both coupled equations tested against every basis function."""
    if v_samples is None:
        v_samples = traj.voltages
    tau = traj.tau
    n = traj.n_steps
    r1 = np.empty(n)
    r2 = np.empty(n)
    for k in range(1, n + 1):
        da = traj.fields[k] - traj.fields[k - 1]
        field_res = (
            (ops.msigma @ da) / tau + ops.K(traj.fields[k])
            - ops.coupling @ traj.currents[k]
        )
        r1[k - 1] = np.max(np.abs(field_res))
        flux_rate = (traj.fluxes[k] - traj.fluxes[k - 1]) / tau
        r2[k - 1] = np.linalg.norm(
            flux_rate + ops.R @ traj.currents[k] - v_samples[k]
        )
    return WeakResidualReport(float(r1.max()), float(r2.max()), r1, r2)


@dataclass
class MonotonicityReport:
    min_ratio: float
    n_checked: int
    n_trivial: int

    @property
    def passed(self):
        return self.min_ratio >= 1.0 - 1e-10


def monotonicity_probe(ops, n_pairs=200, seed=42, scale=1.0):
    """Sampled strong-monotonicity ratio of the nonlinear curl-curl form.

    ratio = <a-b, K(a)-K(b)> / (m_hat (a-b)^T K_lin (a-b)) over random
    coefficient pairs; values >= 1 certify the discrete monotonicity bound.
    """
    rng = np.random.default_rng(seed)
    ratios = []
    trivial = 0
    for _ in range(n_pairs):
        a = scale * rng.standard_normal(ops.n_dofs)
        b = scale * rng.standard_normal(ops.n_dofs)
        d = a - b
        denom = ops.m_hat * float(d @ (ops.stiffness @ d))
        if denom <= 0:
            trivial += 1
            continue
        num = float(d @ (ops.K(a) - ops.K(b)))
        ratios.append(num / denom)
    return MonotonicityReport(
        min_ratio=float(min(ratios)) if ratios else np.inf,
        n_checked=len(ratios), n_trivial=trivial,
    )


def coercivity_bound_check(ops, phi, E, n_samples=100, seed=0, omega=1.0,
                           scale=1.0):
    """Sampled check of E_omega(a) >= c ||a||^2_{L^2} with the certified c."""
    rng = np.random.default_rng(seed)
    c = min(ops.m_hat, omega * ops.sigma_C) / (2.0 * ops.L_C)
    worst = np.inf
    for _ in range(n_samples):
        a = scale * rng.standard_normal(ops.n_dofs)
        Ea = E.apply(a)
        lhs = phi.eval(a) + 0.5 * omega * float(Ea @ Ea)
        rhs = c * float(a @ (ops.mass @ a))
        worst = min(worst, lhs - rhs)
    return {"c": c, "min_slack": float(worst), "passed": worst >= -1e-10}
