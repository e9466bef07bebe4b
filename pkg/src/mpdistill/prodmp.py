"""Closed-form movement-primitive trajectory representation.

A critically damped second-order system

    tau^2 * y'' = alpha * (beta * (g - y) - tau * y') + f(x(t))

is solved offline: the homogeneous solutions of the repeated-root system,

    y1(t) = exp(-omega t),   y2(t) = t * exp(-omega t),   omega = alpha / (2 tau),

handle boundary conditions, while one particular solution per forcing basis
(and one for the goal step input) is precomputed on a dense time grid by
variation of parameters. Decoding a trajectory is then a table lookup plus a
small matrix product, affine in the parameter vector theta = [w_1..w_K, g]
per degree of freedom. Boundary conditions enter only through the constants
c1 = y0 and c2 = y0' + omega * y0, so replanned trajectories continue
exactly from the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import _kernels, storage

_BASIS_FORMAT = "prodmp-basis"
_BASIS_VERSION = 1


@dataclass(frozen=True)
class ProDMPConfig:
    """Static configuration of the primitive system.

    beta defaults to alpha / 4 (critical damping); the closed-form basis
    tables require exactly that, so overriding it is rejected at
    precomputation time. alpha_x defaults to 3.0: the phase then decays to
    e^-3 at tau, keeping the forcing alive across the horizon. Faster
    decays crowd the phase-spaced centers into the first few samples and
    make the fitting regression numerically singular.
    """

    num_basis: int = 10
    alpha: float = 25.0
    tau: float = 1.0
    dof: int = 1
    grid_points: int = 1000
    beta: float | None = None
    alpha_x: float | None = None

    def __post_init__(self):
        if self.num_basis < 1:
            raise ValueError("num_basis must be >= 1")
        if self.alpha <= 0 or self.tau <= 0:
            raise ValueError("alpha and tau must be positive")
        if self.grid_points < 100:
            raise ValueError("grid_points must be >= 100")
        if self.beta is None:
            object.__setattr__(self, "beta", self.alpha / 4.0)
        if self.alpha_x is None:
            object.__setattr__(self, "alpha_x", 3.0)
        if self.alpha_x <= 0:
            raise ValueError("alpha_x must be positive")

    @property
    def omega(self) -> float:
        """Repeated characteristic root of the critically damped system."""
        return self.alpha / (2.0 * self.tau)

    @property
    def theta_dim(self) -> int:
        return self.dof * (self.num_basis + 1)

    def to_dict(self) -> dict:
        return {
            "num_basis": self.num_basis,
            "alpha": self.alpha,
            "tau": self.tau,
            "dof": self.dof,
            "grid_points": self.grid_points,
            "beta": self.beta,
            "alpha_x": self.alpha_x,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProDMPConfig":
        return cls(**d)


@dataclass(frozen=True)
class ProDMPParams:
    """Per-DoF forcing weights plus goal attractor, shape (dof, K+1)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.atleast_2d(np.asarray(self.values, dtype=np.float64)))
        if not np.all(np.isfinite(v)):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dof(self) -> int:
        return self.values.shape[0]

    @property
    def num_basis(self) -> int:
        return self.values.shape[1] - 1

    @property
    def w(self) -> np.ndarray:
        return self.values[:, :-1]

    @property
    def g(self) -> np.ndarray:
        return self.values[:, -1]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, dof: int) -> "ProDMPParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size % dof != 0:
            raise ValueError("flat parameter length not divisible by dof")
        return cls(flat.reshape(dof, -1))

    @classmethod
    def zeros(cls, cfg: ProDMPConfig) -> "ProDMPParams":
        return cls(np.zeros((cfg.dof, cfg.num_basis + 1)))


@dataclass(frozen=True)
class BoundaryCondition:
    """Position and velocity at the start of a plan, one entry per DoF."""

    y0: np.ndarray
    y0_dot: np.ndarray

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=np.float64))
        y0d = np.atleast_1d(np.asarray(self.y0_dot, dtype=np.float64))
        if y0.shape != y0d.shape:
            raise ValueError("y0 and y0_dot must have the same shape")
        if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(y0d))):
            raise ValueError("boundary condition must be finite")
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y0_dot", y0d)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed positions and velocities, shape (H,) / (H, dof)."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        p = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.velocities, dtype=np.float64))
        if p.shape[0] != t.size and p.shape[1] == t.size:
            p, v = p.T, v.T
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("trajectory must be finite")
        if p.shape != v.shape or p.shape[0] != t.size:
            raise ValueError("inconsistent trajectory shapes")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)

    @property
    def dof(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class BasisTable:
    """Precomputed particular solutions and homogeneous solutions.

    Immutable after precomputation (arrays are marked read-only) and safe
    for concurrent reads. Column K of phi is the goal step response; columns
    0..K-1 are particular solutions of the normalized RBF forcings.
    """

    cfg: ProDMPConfig
    time_grid: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y1_dot: np.ndarray
    y2_dot: np.ndarray
    _interp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("time_grid", "phi", "phi_dot", "y1", "y2", "y1_dot", "y2_dot"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def sample_at(self, query_times: np.ndarray) -> tuple[np.ndarray, ...]:
        """Linearly interpolate all table columns at the query times.

        Returns (phi, phi_dot, y1, y2, y1_dot, y2_dot) evaluated at the
        queries. Results for a given set of query times are cached since the
        control loop re-decodes on the same horizon grid every plan.
        """
        q = np.asarray(query_times, dtype=np.float64)
        if q.ndim != 1:
            raise ValueError("query_times must be one-dimensional")
        tol = 1e-9 * max(self.cfg.tau, 1.0)
        if q.size and (q.min() < -tol or q.max() > self.cfg.tau + tol):
            raise ValueError(
                f"query times outside [0, tau={self.cfg.tau}]: "
                f"range [{q.min()}, {q.max()}]"
            )
        key = q.tobytes()
        hit = self._interp_cache.get(key)
        if hit is not None:
            return hit
        qc = np.clip(q, 0.0, self.cfg.tau)
        idx = np.searchsorted(self.time_grid, qc, side="right") - 1
        idx = np.clip(idx, 0, self.time_grid.size - 2)
        h = self.time_grid[idx + 1] - self.time_grid[idx]
        wgt = (qc - self.time_grid[idx]) / h
        def lerp(a):
            if a.ndim == 1:
                return a[idx] * (1.0 - wgt) + a[idx + 1] * wgt
            return a[idx] * (1.0 - wgt)[:, None] + a[idx + 1] * wgt[:, None]
        out = tuple(
            np.ascontiguousarray(lerp(a))
            for a in (self.phi, self.phi_dot, self.y1, self.y2, self.y1_dot, self.y2_dot)
        )
        for arr in out:
            arr.setflags(write=False)
        if len(self._interp_cache) < 32:
            self._interp_cache[key] = out
        return out

    def save(self, path) -> None:
        storage.write_container(
            path,
            _BASIS_FORMAT,
            _BASIS_VERSION,
            meta={"cfg": self.cfg.to_dict()},
            arrays={
                "time_grid": self.time_grid,
                "phi": self.phi,
                "phi_dot": self.phi_dot,
                "y1": self.y1,
                "y2": self.y2,
                "y1_dot": self.y1_dot,
                "y2_dot": self.y2_dot,
            },
        )

    @classmethod
    def load(cls, path) -> "BasisTable":
        meta, arrays = storage.read_container(path, _BASIS_FORMAT, _BASIS_VERSION)
        return cls(cfg=ProDMPConfig.from_dict(meta["cfg"]), **arrays)


def phase(cfg: ProDMPConfig, t: np.ndarray) -> np.ndarray:
    """Exponentially decaying phase variable x(t) = exp(-alpha_x t / tau)."""
    return np.exp(-cfg.alpha_x * np.asarray(t, dtype=np.float64) / cfg.tau)


def basis_centers_widths(cfg: ProDMPConfig) -> tuple[np.ndarray, np.ndarray]:
    """RBF centers equally spaced in phase; widths give 0.5 crossings.

    phi_i(x) = exp(-h_i (x - c_i)^2) with h chosen so adjacent bases
    intersect at value 0.5 halfway between centers.
    """
    x_end = float(phase(cfg, np.array(cfg.tau)))
    centers = np.linspace(1.0, x_end, cfg.num_basis)
    if cfg.num_basis > 1:
        delta = abs(centers[0] - centers[1])
    else:
        delta = max(1.0 - x_end, 1e-3)
    widths = np.full(cfg.num_basis, 4.0 * np.log(2.0) / delta**2)
    return centers, widths


def normalized_forcing(cfg: ProDMPConfig, t: np.ndarray) -> np.ndarray:
    """Per-basis forcing q_i(t) = x phi_i(x) / (tau^2 sum_j phi_j(x)).

    Shape (len(t), K). The forcing that drives the system for parameter
    vector w is q @ w.
    """
    centers, widths = basis_centers_widths(cfg)
    x = phase(cfg, t)[:, None]
    rbf = np.exp(-widths[None, :] * (x - centers[None, :]) ** 2)
    denom = rbf.sum(axis=1, keepdims=True)
    return x * rbf / (denom * cfg.tau**2)


def precompute_basis(cfg: ProDMPConfig) -> BasisTable:
    """Build the basis tables by variation of parameters.

    Each forcing column is p_i(t) = y2(t) I1_i(t) - y1(t) I2_i(t) with
    I1 = integral of y1 q_i / W and I2 = integral of y2 q_i / W, where the
    Wronskian is W(s) = exp(-2 omega s). The goal column is the closed-form
    unit step response 1 - exp(-omega t)(1 + omega t). Integrals use
    composite Simpson quadrature on the stored grid.
    """
    if abs(cfg.beta - cfg.alpha / 4.0) > 1e-12 * cfg.alpha:
        raise ValueError(
            "closed-form basis tables require critical damping (beta = alpha/4); "
            f"got beta={cfg.beta}, alpha/4={cfg.alpha / 4.0}"
        )
    omega = cfg.omega
    grid = np.linspace(0.0, cfg.tau, cfg.grid_points)
    q = normalized_forcing(cfg, grid)  # (G, K)

    # Reject grids too coarse to resolve the requested bases: each bump must
    # be sampled by at least a few grid phases inside its half-width.
    centers, widths = basis_centers_widths(cfg)
    x_grid = phase(cfg, grid)
    half_width = np.sqrt(np.log(2.0) / widths[0])
    support_counts = (np.abs(x_grid[:, None] - centers[None, :]) <= half_width).sum(axis=0)
    if support_counts.min() < 4:
        raise ValueError(
            f"grid too coarse for num_basis={cfg.num_basis}: a basis has only "
            f"{int(support_counts.min())} grid samples inside its half-width"
        )

    # Integrands grow like exp(omega s); fine in float64 for sane alpha.
    growth = np.exp(omega * grid)
    f1 = growth[:, None] * q
    f2 = (grid * growth)[:, None] * q
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2))):
        raise ValueError(
            "non-finite quadrature integrand; alpha/tau combination is degenerate"
        )
    i1 = cumulative_simpson(f1, x=grid, axis=0, initial=0.0)
    i2 = cumulative_simpson(f2, x=grid, axis=0, initial=0.0)

    decay = np.exp(-omega * grid)
    y1 = decay
    y2 = grid * decay
    y1_dot = -omega * decay
    y2_dot = (1.0 - omega * grid) * decay

    K = cfg.num_basis
    phi = np.empty((cfg.grid_points, K + 1))
    phi_dot = np.empty_like(phi)
    phi[:, :K] = y2[:, None] * i1 - y1[:, None] * i2
    phi_dot[:, :K] = y2_dot[:, None] * i1 - y1_dot[:, None] * i2
    # Unit-DC-gain goal column: step response of the critically damped system.
    phi[:, K] = 1.0 - decay * (1.0 + omega * grid)
    phi_dot[:, K] = omega**2 * grid * decay
    # The convolution construction starts at rest; enforce it exactly.
    phi[0, :] = 0.0
    phi_dot[0, :] = 0.0
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(phi_dot))):
        raise ValueError("non-finite basis values; configuration is degenerate")

    return BasisTable(
        cfg=cfg, time_grid=grid, phi=phi, phi_dot=phi_dot,
        y1=y1, y2=y2, y1_dot=y1_dot, y2_dot=y2_dot,
    )


def boundary_coefficients(bc: BoundaryCondition, table: BasisTable) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous-solution constants satisfying the boundary condition.

    Solving the 2x2 system at t = 0 (where phi and phi_dot vanish) gives
    c1 = y0 and c2 = y0_dot + omega y0, independent of theta.
    """
    omega = table.cfg.omega
    c1 = bc.y0.copy()
    c2 = bc.y0_dot + omega * bc.y0
    return c1, c2


def decode(
    theta: ProDMPParams,
    bc: BoundaryCondition,
    table: BasisTable,
    query_times: np.ndarray,
) -> Trajectory:
    """Evaluate the closed-form trajectory at the query times."""
    if theta.num_basis != table.cfg.num_basis:
        raise ValueError(
            f"theta has {theta.num_basis} bases, table expects {table.cfg.num_basis}"
        )
    if bc.y0.size != theta.dof:
        raise ValueError("boundary condition dof mismatch")
    phi_q, phid_q, y1q, y2q, y1dq, y2dq = table.sample_at(query_times)
    c1, c2 = boundary_coefficients(bc, table)
    P, V = _kernels.decode_combine(phi_q, phid_q, y1q, y2q, y1dq, y2dq, c1, c2, theta.values)
    return Trajectory(times=np.asarray(query_times, dtype=np.float64), positions=P, velocities=V)


def decode_linear_map(table: BasisTable, query_times: np.ndarray, dof: int) -> np.ndarray:
    """Matrix L with decode(theta, bc) = decode(0, bc) + L @ theta.flat.

    Rows are the stacked positions then velocities, both flattened
    time-major over (H, dof); columns follow the flat theta layout
    (dof-major blocks of K+1).
    """
    phi_q, phid_q, *_ = table.sample_at(query_times)
    H = phi_q.shape[0]
    k1 = phi_q.shape[1]
    L = np.zeros((2 * H * dof, dof * k1))
    for d in range(dof):
        rows = np.arange(H) * dof + d
        cols = slice(d * k1, (d + 1) * k1)
        L[rows, cols] = phi_q
        L[H * dof + rows, cols] = phid_q
    return L


@dataclass(frozen=True)
class FitResult:
    params: ProDMPParams
    residual_rms: float


def fit_params(traj: Trajectory, bc: BoundaryCondition, table: BasisTable) -> FitResult:
    """Least-squares parameters reproducing the trajectory positions.

    The homogeneous part fixed by the boundary condition is subtracted
    first, so the regression is the plain linear system phi @ theta_d =
    residual_d per DoF.
    """
    k1 = table.cfg.num_basis + 1
    if traj.times.size < k1:
        raise ValueError(
            f"need at least {k1} samples to fit {k1} parameters per DoF, "
            f"got {traj.times.size}"
        )
    phi_q, _, y1q, y2q, _, _ = table.sample_at(traj.times)
    c1, c2 = boundary_coefficients(bc, table)
    target = traj.positions - np.outer(y1q, c1) - np.outer(y2q, c2)
    sol, _, rank, _ = np.linalg.lstsq(phi_q, target, rcond=None)
    if rank < k1:
        raise ValueError(
            f"rank-deficient regression matrix (rank {rank} < {k1}); "
            "samples are too few or collinear"
        )
    resid = phi_q @ sol - target
    rms = float(np.sqrt(np.mean(resid**2)))
    return FitResult(params=ProDMPParams(sol.T), residual_rms=rms)
