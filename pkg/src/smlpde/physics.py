"""Known physical terms and the discretized PDE residual.

Supported per-equation terms on 1D grids:

  none               : 0
  convection         : phi(x) * du/dx            (one parameter field)
  diffusion_reaction : d/dx(a du/dx) + c u       (fields a, c; expanded by the
                       product rule as a*u_xx + a_x*u_x + c*u)
  burgers1d          : -u * du/dx                (no parameter field)

The residual of one experiment stacks N equations: for equation n it is
du_n/dt - term_n - net_n(t, jets of all states), where each network sees the
input vector [t, jet(u_1), ..., jet(u_N)] nodewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .grid import Field, Grid, jet_dimension

PHYSICS_KINDS = ("none", "convection", "diffusion_reaction", "burgers1d")

_SLOTS = {"none": 0, "convection": 1, "diffusion_reaction": 2, "burgers1d": 0}


def n_param_slots(kind: str) -> int:
    if kind not in PHYSICS_KINDS:
        raise ValueError(f"unknown physics kind {kind!r}")
    return _SLOTS[kind]


@dataclass
class PhysicalParams:
    """Static (time-constant) parameter fields, shape (L, N, slots, nx)."""

    kind: str
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        slots = n_param_slots(self.kind)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4 or self.values.shape[2] != slots \
                or self.values.shape[3] != self.grid.nx:
            raise ValueError(
                f"parameter array shape {self.values.shape} does not match "
                f"kind {self.kind!r} (slots={slots}) on nx={self.grid.nx}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite parameter entries")

    @property
    def n_experiments(self) -> int:
        return self.values.shape[0]

    @property
    def n_states(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "PhysicalParams":
        return PhysicalParams(self.kind, self.grid, self.values.copy())


def zero_params(kind: str, grid: Grid, L: int, N: int) -> PhysicalParams:
    return PhysicalParams(kind, grid, np.zeros((L, N, n_param_slots(kind), grid.nx)))


def apply_physics_array(grid: Grid, kind: str, u: np.ndarray,
                        phi: np.ndarray) -> np.ndarray:
    """Evaluate one equation's physical term on a (nt, nx) state array."""
    if grid.d != 1:
        raise NotImplementedError("physical terms are implemented for d=1")
    if kind == "none":
        return np.zeros_like(u)
    d1 = grid.space_derivative_matrix(1)
    if kind == "convection":
        return phi[0][None, :] * (u @ d1.T)
    if kind == "burgers1d":
        return -u * (u @ d1.T)
    if kind == "diffusion_reaction":
        d2 = grid.space_derivative_matrix(2)
        a, c = phi[0], phi[1]
        ax = d1 @ a
        return a[None, :] * (u @ d2.T) + ax[None, :] * (u @ d1.T) + c[None, :] * u
    raise ValueError(f"unknown physics kind {kind!r}")


def apply_physics(kind: str, u: Field, phi_fields) -> Field:
    """Field-level wrapper; phi_fields is a list of spatial arrays."""
    phi = np.asarray(phi_fields, dtype=float).reshape(n_param_slots(kind), -1) \
        if n_param_slots(kind) else np.zeros((0, u.grid.nx))
    if phi.shape[1] != u.grid.nx and phi.size:
        raise ValueError("parameter field length does not match grid")
    return Field(u.grid, apply_physics_array(u.grid, kind, u.values, phi))


def jet_feature_matrix(grid: Grid, kappa: int, u_states: np.ndarray) -> np.ndarray:
    """Nodewise network inputs [t, jets of all states], shape (nt*nx, D).

    u_states has shape (N, nt, nx); D = 1 + N * jet_dimension(1, kappa).
    """
    if grid.d != 1:
        raise NotImplementedError("jet features are implemented for d=1")
    n_states, nt, nx = u_states.shape
    cols = [np.broadcast_to(grid.t[:, None], (nt, nx)).reshape(-1)]
    for n in range(n_states):
        u = u_states[n]
        cols.append(u.reshape(-1))
        if kappa >= 1:
            cols.append((u @ grid.space_derivative_matrix(1).T).reshape(-1))
        if kappa >= 2:
            cols.append((u @ grid.space_derivative_matrix(2).T).reshape(-1))
        if kappa >= 3:
            raise ValueError("jet order > 2 unsupported")
    return np.stack(cols, axis=1)


def residual_array(grid: Grid, kind: str, kappa: int, u_states: np.ndarray,
                   phi_states: np.ndarray, nets) -> np.ndarray:
    """Residual du/dt - physics - net per equation, shape (N, nt, nx)."""
    n_states = u_states.shape[0]
    if len(nets) != n_states:
        raise ValueError(f"{len(nets)} networks for {n_states} equations")
    expected = 1 + n_states * jet_dimension(grid.d, kappa)
    for net in nets:
        if net.input_dim != expected:
            raise ValueError(
                f"network input dim {net.input_dim} != 1 + N*jet_dim = {expected}"
            )
    dt_mat = grid.time_derivative_matrix()
    feats = jet_feature_matrix(grid, kappa, u_states)
    out = np.empty_like(u_states)
    for n in range(n_states):
        fvals = mlp.forward_batch(nets[n], feats).reshape(grid.nt, grid.nx)
        phys = apply_physics_array(grid, kind, u_states[n], phi_states[n])
        out[n] = dt_mat @ u_states[n] - phys - fvals
    return out


def residual(u_fields, phi: PhysicalParams, nets, kind: str, kappa: int,
             experiment: int = 0):
    """Field-level residual for one experiment; returns a list of Fields."""
    grid = u_fields[0].grid
    u_states = np.stack([f.values for f in u_fields])
    arr = residual_array(grid, kind, kappa, u_states,
                         phi.values[experiment], nets)
    return [Field(grid, arr[n]) for n in range(arr.shape[0])]


def affine_check(kind: str, u: Field, phi1, phi2, s: float,
                 rel_tol: float = 1e-10) -> bool:
    """Verify F(u, s*phi1 + (1-s)*phi2) == s*F(u,phi1) + (1-s)*F(u,phi2)."""
    slots = n_param_slots(kind)
    if slots == 0:
        return True  # no parameters: affine vacuously
    p1 = np.asarray(phi1, dtype=float).reshape(slots, -1)
    p2 = np.asarray(phi2, dtype=float).reshape(slots, -1)
    mix = s * p1 + (1.0 - s) * p2
    grid = u.grid
    lhs = apply_physics_array(grid, kind, u.values, mix)
    rhs = s * apply_physics_array(grid, kind, u.values, p1) \
        + (1.0 - s) * apply_physics_array(grid, kind, u.values, p2)
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-300)
    return bool(np.max(np.abs(lhs - rhs)) <= rel_tol * scale)
