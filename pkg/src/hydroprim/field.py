"""Velocity fields in Galerkin coefficients and the operators acting on them."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .basis import SpectralBasis


class NotProjectedError(ValueError):
    """Raised when a field's vertical mean is not divergence free."""


W_TOP_TOL = 1e-10


@dataclass(eq=False)
class VelocityField:
    """Horizontal velocity v = v_bar + v_tilde as a coefficient tensor.

    The vertical-mean block lives in the solenoidal span, so div_H v_bar = 0
    holds by construction.  Arithmetic returns new fields.
    """

    basis: "SpectralBasis"
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != self.basis.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not "
                             f"match basis {self.basis.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise FloatingPointError("non-finite coefficients")

    @classmethod
    def zeros(cls, basis) -> "VelocityField":
        return cls(basis, basis.zeros())

    @classmethod
    def random(cls, basis, rng: np.random.Generator | int | None = None,
               amplitude: float = 1.0, decay: float = 1.0,
               barotropic: bool = True, baroclinic: bool = True) -> "VelocityField":
        """Random field with spectrum ~ (1 + mu + kappa)^-decay, unit L2 norm times ``amplitude``."""
        rng = np.random.default_rng(rng)
        b = basis
        coeffs = rng.standard_normal(b.shape) * b.bar_mask
        scale = 1.0 + b.laplace_eigs + b.kappa[None, :, None]
        coeffs = coeffs * scale**-decay
        if not barotropic:
            coeffs[:, 0] = 0.0
        if not baroclinic:
            coeffs[:, 1:] = 0.0
        norm = np.linalg.norm(coeffs)
        if norm > 0:
            coeffs *= amplitude / norm
        return cls(basis, coeffs)

    # ------------------------------------------------------------- plumbing
    def copy(self) -> "VelocityField":
        return VelocityField(self.basis, self.coeffs.copy())

    def _wrap(self, coeffs):
        return VelocityField(self.basis, coeffs)

    def __add__(self, other):
        return self._wrap(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self._wrap(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return self._wrap(self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.coeffs)

    @property
    def bar(self) -> np.ndarray:
        """Coefficients of the solenoidal vertical-mean block."""
        return self.coeffs[0, 0, :self.basis.n_bar]

    @property
    def tilde(self) -> np.ndarray:
        return self.coeffs[:, 1:]

    def grid(self) -> np.ndarray:
        return self.basis.to_grid(self.coeffs)


@dataclass
class ScalarField:
    """Grid-resident scalar (w, pressure, work arrays).

    ``top`` and ``bottom`` hold values on z = +h and z = -h when the field
    has a closed-form extension to the boundary.
    """

    values: np.ndarray
    basis: "SpectralBasis"
    top: np.ndarray | None = None
    bottom: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape != self.basis.grid_shape:
            raise ValueError(f"grid shape {self.values.shape} != {self.basis.grid_shape}")


# ------------------------------------------------------------------ splitting
def vertical_average(v: VelocityField) -> np.ndarray:
    """(1/2h) int v dz on the horizontal grid, shape (2, Nx, Ny).

    Only the k = 0 block survives the average; its vertical factor is the
    constant 1/sqrt(2h).
    """
    b = v.basis
    return b.bar_grid(v.bar) * b.c0


def fluctuation(v: VelocityField) -> VelocityField:
    out = v.coeffs.copy()
    out[:, 0] = 0.0
    return VelocityField(v.basis, out)


def barotropic(v: VelocityField) -> VelocityField:
    out = np.zeros_like(v.coeffs)
    out[:, 0] = v.coeffs[:, 0]
    return VelocityField(v.basis, out)


# ---------------------------------------------------------------- derivatives
def diff_ops(v: VelocityField, on_grid: bool = True) -> dict:
    """Horizontal gradient, divergence, Laplacian and z-derivative of ``v``.

    With ``on_grid`` the fields are evaluated on the quadrature grid
    (``grad`` has shape (2, 2, Nx, Ny, Nz) indexed [component, direction]).
    Otherwise Laplacian and z-derivative are returned as coefficient tensors:
    the Laplacian as the Galerkin projection ``-eig * coeffs`` and the
    z-derivative in the sine-in-z basis (k = 1..K, mean block zero).
    """
    b = v.basis
    c = v.coeffs
    if not on_grid:
        dz = np.zeros_like(c)
        dz[:, 1:] = c[:, 1:] * np.sqrt(b.kappa[1:])[None, :, None]
        return {"lap": -b.laplace_eigs * c, "dz": dz}
    g = grid_state(v)
    lap = np.empty_like(g["v"])
    lap_bar = b.bar_grid(v.bar, "lap") * b.c0
    for comp in range(2):
        t = c[comp, 1:]
        lap[comp] = (b.synth(t, dx=2) + b.synth(t, dy=2)) + lap_bar[comp][:, :, None]
    return {"grad": g["grad"], "div": g["div"], "lap": lap, "dz": g["dz"]}


def grid_state(v: VelocityField, with_w: bool = True) -> dict:
    """Everything the nonlinear term needs, evaluated on the grid.

    Keys: ``v`` (2, N...), ``grad`` (2, 2, N...), ``dz`` (2, N...),
    ``div`` (N...), and with ``with_w`` also ``w`` (N...) plus the closed-form
    boundary values ``w_top`` and ``w_bottom``.
    """
    b = v.basis
    c = v.coeffs
    bar = v.bar
    c0 = b.c0
    vbar = b.bar_grid(bar) * c0
    dxbar = b.bar_grid(bar, "dx") * c0
    dybar = b.bar_grid(bar, "dy") * c0
    vals = np.empty((2,) + b.grid_shape)
    grad = np.empty((2, 2) + b.grid_shape)
    dz = np.empty_like(vals)
    for comp in range(2):
        t = c[comp, 1:]
        vals[comp] = b.synth(t) + vbar[comp][:, :, None]
        grad[comp, 0] = b.synth(t, dx=1) + dxbar[comp][:, :, None]
        grad[comp, 1] = b.synth(t, dy=1) + dybar[comp][:, :, None]
        dz[comp] = b.synth(t, dz=1)
    out = {"v": vals, "grad": grad, "dz": dz, "div": grad[0, 0] + grad[1, 1]}
    if with_w:
        out.update(_w_parts(v, dxbar[0] + dybar[1]))
    return out


def _w_parts(v: VelocityField, div_bar: np.ndarray) -> dict:
    """w = -int_{-h}^z div_H v, integrated analytically mode by mode."""
    b = v.basis
    c = v.coeffs
    ends = b.cz_ends
    ramp = b.cz[2, 0]                       # (z + h) / sqrt(2h)
    anti = b.synth(c[0, 1:], dx=1, dz=2) + b.synth(c[1, 1:], dy=1, dz=2)
    w = -(anti + div_bar[:, :, None] * ramp[None, None, :])
    anti_ends = (b.synth(c[0, 1:], dx=1, dz=2, ztab=ends)
                 + b.synth(c[1, 1:], dy=1, dz=2, ztab=ends))
    w_ends = -(anti_ends + div_bar[:, :, None] * ends[2, 0][None, None, :])
    return {"w": w, "w_bottom": w_ends[..., 0], "w_top": w_ends[..., 1]}


def reconstruct_w(v: VelocityField, tol: float = W_TOP_TOL,
                  check: bool = True) -> ScalarField:
    """Vertical velocity from the kinematic relation w = -div_H int_{-h}^z v.

    The vertical integral is exact on the cosine modes.  With ``check`` a
    top-boundary residual above ``tol`` raises :class:`NotProjectedError`.
    """
    b = v.basis
    div_bar = (b.bar_grid(v.bar, "dx")[0] + b.bar_grid(v.bar, "dy")[1]) * b.c0
    return _finish_w(_w_parts(v, div_bar), b, tol, check)


def reconstruct_w_raw(raw: np.ndarray, basis, tol: float = W_TOP_TOL,
                      check: bool = True) -> ScalarField:
    """:func:`reconstruct_w` for an unprojected sine x cosine tensor.

    Raw tensors carry a sine-expanded k = 0 block that need not be
    divergence free, which is exactly what the top-boundary check detects.
    """
    b = basis
    raw = np.asarray(raw, dtype=float)
    ends = b.cz_ends
    w = -(b.synth(raw[0], dx=1, dz=2, k_from=0) + b.synth(raw[1], dy=1, dz=2, k_from=0))
    w_ends = -(b.synth(raw[0], dx=1, dz=2, k_from=0, ztab=ends)
               + b.synth(raw[1], dy=1, dz=2, k_from=0, ztab=ends))
    parts = {"w": w, "w_bottom": w_ends[..., 0], "w_top": w_ends[..., 1]}
    return _finish_w(parts, b, tol, check)


def _finish_w(parts, b, tol, check):
    if check:
        resid = float(abs(parts["w_top"]).max())
        if resid > tol:
            raise NotProjectedError(
                f"w(z=+h) residual {resid:.3e} exceeds {tol:.1e}; "
                "input vertical mean is not divergence free")
    return ScalarField(parts["w"], b, top=parts["w_top"], bottom=parts["w_bottom"])


# --------------------------------------------------------- products and norms
def inner(u: VelocityField, v: VelocityField, which: str = "L2") -> float:
    """Inner products that are diagonal in the orthonormal coefficients."""
    b = u.basis
    if v.basis is not b:
        raise ValueError("fields live on different bases")
    cu, cv = u.coeffs, v.coeffs
    if which == "L2":
        wts = 1.0
    elif which == "H":
        wts = b.h_weights
    elif which == "V":
        wts = b.h_weights * (1.0 + b.laplace_eigs)
    elif which == "H1":
        wts = 1.0 + b.laplace_eigs + b.kappa[None, :, None]
    else:
        raise ValueError(f"unknown inner product {which!r}")
    return float(np.sum(wts * cu * cv))


def norm(v: VelocityField, which: str = "L2", q: float | None = None) -> float:
    """Norms of ``v``: 'L2', 'H', 'V', 'H1' exactly, 'Lq' by grid quadrature."""
    if which == "Lq":
        if q is None:
            raise ValueError("Lq norm needs q")
        return lq_norm(v.grid(), v.basis, q)
    return float(np.sqrt(inner(v, v, which)))


def lq_norm(values: np.ndarray, basis, q: float) -> float:
    """L^q(Omega) norm of a grid field; vectors use the pointwise Euclidean length."""
    if q < 1:
        raise ValueError(f"L^q norms need q >= 1 (got {q})")
    mag = np.sqrt((values**2).sum(axis=0)) if values.ndim == 4 else np.abs(values)
    if np.isinf(q):
        return float(mag.max())
    peak = mag.max()
    if peak == 0:
        return 0.0
    return float(peak * np.sum(basis.weights * (mag / peak) ** q) ** (1.0 / q))


def grad_norm_sq(v: VelocityField) -> float:
    """||grad_H v||^2 in L2(Omega), exact in coefficients."""
    b = v.basis
    return float(np.sum(b.laplace_eigs * v.coeffs**2))


def dz_norm_sq(v: VelocityField) -> float:
    b = v.basis
    return float(np.sum(b.kappa[None, :, None] * v.coeffs**2))


def grad_dz_norm_sq(v: VelocityField) -> float:
    b = v.basis
    return float(np.sum(b.kappa[None, :, None] * b.laplace_eigs * v.coeffs**2))


def lap_norm_sq(v: VelocityField) -> float:
    """||Lap_H v||^2 in L2(Omega) of the field itself (not its projection)."""
    b = v.basis
    tilde = float(np.sum(b.mu[None, None, :] ** 2 * v.coeffs[:, 1:] ** 2))
    return tilde + float(v.bar @ b.lap_gram @ v.bar)


# ------------------------------------------------------------------ checkpoint
MAGIC = b"PEHV"
FORMAT_VERSION = 1


def write_checkpoint(path, v: VelocityField, t: float) -> None:
    """Binary checkpoint: header, then coefficients in C order as LE float64."""
    d = v.basis.domain
    header = MAGIC + struct.pack("<7I", FORMAT_VERSION, d.Mx, d.My, d.K,
                                 d.Nq_x, d.Nq_y, d.Nq_z)
    header += struct.pack("<4d", d.h, d.Lx, d.Ly, t)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(v.coeffs, dtype="<f8").tobytes())


def read_checkpoint(path, basis=None):
    """Read a checkpoint; builds a matching basis unless one is supplied.

    Returns ``(field, t)``.
    """
    from .basis import DomainSpec, build_basis

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC or len(data) < 64:
        raise ValueError(f"{path}: not a PEHV checkpoint")
    version, Mx, My, K, nx, ny, nz = struct.unpack_from("<7I", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    h, Lx, Ly, t = struct.unpack_from("<4d", data, 32)
    spec = DomainSpec(h=h, Lx=Lx, Ly=Ly, Mx=Mx, My=My, K=K,
                      Nq_x=nx, Nq_y=ny, Nq_z=nz)
    if basis is None:
        basis = build_basis(spec)
    elif basis.domain != spec:
        raise ValueError(f"{path}: checkpoint domain {spec} does not match basis")
    n = 2 * (K + 1) * Mx * My
    if len(data) != 64 + 8 * n:
        raise ValueError(f"{path}: truncated or oversized payload")
    coeffs = np.frombuffer(data, dtype="<f8", count=n, offset=64)
    return VelocityField(basis, coeffs.reshape(2, K + 1, Mx * My).astype(float)), t
