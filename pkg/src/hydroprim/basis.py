"""Galerkin bases, quadrature and transforms on the cylinder (-h, h) x G.

G is the rectangle (0, Lx) x (0, Ly).  The Galerkin space has two blocks:

* vertical modes k = 1..K: each velocity component expanded in Dirichlet
  sine products of G times normalised cosines in z (zero vertical mean);
* vertical mode k = 0: z-independent, divergence-free fields of G built from
  perp-gradients of clamped-beam stream functions, orthonormalised and then
  rotated onto Ritz eigenvectors of the discrete Stokes operator.

Coefficients are stored in one tensor of shape ``(2, K + 1, Mx * My)``.  For
k >= 1 the entry ``[c, k, m * My + n]`` multiplies component ``c`` of the
sine mode (m + 1, n + 1).  For k = 0 only ``[0, 0, :n_bar]`` is used (one
coefficient per solenoidal vector mode); the remaining slots are padding and
are kept at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .beam import beam_derivatives, beam_roots

GS_DROP_TOL = 1e-8


def dealiasing_floor(modes: int) -> int:
    """Smallest admissible node count for ``modes`` modes (3/2 rule)."""
    return math.ceil(1.5 * modes)


def default_nodes(modes: int) -> int:
    """Gauss-Legendre node count resolving triple products of ``modes`` modes.

    Cubic products of modes up to wavenumber M oscillate like sin(3 M pi x);
    Gauss-Legendre integrates those to round-off once the node count is about
    1.25 times the product wavenumber plus a small margin.
    """
    return max(dealiasing_floor(modes) + 2, math.ceil(1.25 * (3 * modes + 2)) + 8)


@dataclass(frozen=True)
class DomainSpec:
    """Geometry and resolution.  Node counts left as ``None`` get defaults."""

    h: float = 1.0
    Lx: float = 1.0
    Ly: float = 1.0
    Mx: int = 8
    My: int = 8
    K: int = 8
    Nq_x: int | None = None
    Nq_y: int | None = None
    Nq_z: int | None = None

    def __post_init__(self):
        for name, modes in (("Nq_x", self.Mx), ("Nq_y", self.My), ("Nq_z", self.K)):
            if getattr(self, name) is None and isinstance(modes, int) and modes >= 1:
                object.__setattr__(self, name, default_nodes(modes))
        problems = self.violations()
        if problems:
            raise ValueError("invalid DomainSpec: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for name in ("h", "Lx", "Ly"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("Mx", "My", "K"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                out.append(f"{name} must be an integer >= 1 (got {value})")
        for name, modes in (("Nq_x", self.Mx), ("Nq_y", self.My), ("Nq_z", self.K)):
            nodes = getattr(self, name)
            if isinstance(modes, (int, np.integer)) and modes >= 1 and nodes is not None:
                floor = dealiasing_floor(modes)
                if nodes < floor:
                    out.append(
                        f"{name}={nodes} violates the 3/2 dealiasing rule: "
                        f"needs >= ceil(3/2 * {modes}) = {floor}")
        return out

    @property
    def nodes(self) -> tuple[int, int, int]:
        return (self.Nq_x, self.Nq_y, self.Nq_z)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _gauss(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _sine_table(M: int, L: float, x: np.ndarray) -> np.ndarray:
    """sqrt(2/L) sin(m pi x / L) and its first two derivatives, m = 1..M."""
    m = np.arange(1, M + 1)[:, None]
    k = m * np.pi / L
    amp = math.sqrt(2.0 / L)
    return np.stack([
        amp * np.sin(k * x),
        amp * k * np.cos(k * x),
        -amp * k**2 * np.sin(k * x),
    ])


def _vertical_table(K: int, h: float, z: np.ndarray) -> np.ndarray:
    """Orthonormal cosines on (-h, h), their z-derivative and antiderivative.

    Rows are k = 0..K.  The antiderivative is taken from -h, so it vanishes
    at the bottom for every k and at the top for every k > 0.
    """
    k = np.arange(K + 1)[:, None]
    arg = k * np.pi * (z + h) / (2 * h)
    amp = np.where(k == 0, 1.0 / math.sqrt(2 * h), 1.0 / math.sqrt(h))
    freq = k * np.pi / (2 * h)
    safe = np.where(k == 0, 1.0, freq)
    anti = np.where(k == 0, (z + h), np.sin(arg) / safe)
    return np.stack([amp * np.cos(arg), -amp * freq * np.sin(arg), amp * anti])


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """All tables needed to move between coefficients and the quadrature grid.

    Attributes ending in ``_bar`` describe the solenoidal (k = 0) block on the
    horizontal grid, indexed ``[mode, component, ix, iy]``.
    """

    domain: DomainSpec
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    wz: np.ndarray
    sx: np.ndarray          # (3, Mx, Nx): value, d/dx, d2/dx2
    sy: np.ndarray          # (3, My, Ny)
    cz: np.ndarray          # (3, K+1, Nz): value, d/dz, antiderivative
    mu: np.ndarray          # (Mx * My,) Dirichlet eigenvalues
    kappa: np.ndarray       # (K+1,) Neumann eigenvalues k^2 pi^2 / 4h^2
    stream_coeffs: np.ndarray   # (n_bar, Mx * My) over beam products
    beam_lambdas: tuple
    mu_bar: np.ndarray      # (n_bar,) discrete Stokes eigenvalues
    phi_bar: np.ndarray     # (n_bar, 2, Nx, Ny)
    dx_bar: np.ndarray
    dy_bar: np.ndarray
    lap_bar: np.ndarray
    lap_gram: np.ndarray    # <Lap phi_i, Lap phi_j>_G
    sine_to_bar: np.ndarray  # (n_bar, 2, Mx * My): <phi_i, e_c s_mn>_G
    dropped: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------ sizes
    @property
    def n_h(self) -> int:
        return self.domain.Mx * self.domain.My

    @property
    def n_bar(self) -> int:
        return self.phi_bar.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (2, self.domain.K + 1, self.n_h)

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return (len(self.x), len(self.y), len(self.z))

    @property
    def weights(self) -> np.ndarray:
        """Tensor quadrature weights on the 3D grid."""
        if "w3" not in self._cache:
            self._cache["w3"] = (self.wx[:, None, None] * self.wy[None, :, None]
                                 * self.wz[None, None, :])
        return self._cache["w3"]

    @property
    def weights2d(self) -> np.ndarray:
        if "w2" not in self._cache:
            self._cache["w2"] = self.wx[:, None] * self.wy[None, :]
        return self._cache["w2"]

    @property
    def c0(self) -> float:
        return 1.0 / math.sqrt(2 * self.domain.h)

    @property
    def bar_mask(self) -> np.ndarray:
        """Boolean tensor marking the coefficient slots in use."""
        if "mask" not in self._cache:
            mask = np.ones(self.shape, dtype=bool)
            mask[:, 0, :] = False
            mask[0, 0, :self.n_bar] = True
            self._cache["mask"] = mask
        return self._cache["mask"]

    @property
    def laplace_eigs(self) -> np.ndarray:
        """-Lap_H is diagonal on the Galerkin space; this is its diagonal."""
        if "lap" not in self._cache:
            eig = np.zeros(self.shape)
            eig[:, 1:, :] = self.mu[None, None, :]
            eig[0, 0, :self.n_bar] = self.mu_bar
            self._cache["lap"] = eig
        return self._cache["lap"]

    @property
    def h_weights(self) -> np.ndarray:
        """Diagonal of the H inner product, 1 + k^2 pi^2 / 4h^2."""
        return np.broadcast_to((1.0 + self.kappa)[None, :, None], self.shape)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    # ------------------------------------------------------------- transforms
    def synth(self, a: np.ndarray, dx: int = 0, dy: int = 0, dz: int = 0,
              k_from: int = 1, ztab: np.ndarray | None = None) -> np.ndarray:
        """Evaluate sum_k,m,n a[k, mn] D(s_m) D(s_n) D(c_k) on the grid.

        ``a`` has shape (K + 1 - k_from, Mx * My); ``dz`` selects value (0),
        derivative (1) or antiderivative (2) of the vertical factor.  Passing
        ``ztab`` (shape (3, K + 1, nz)) evaluates at other vertical points.
        """
        d = self.domain
        zt = self.cz if ztab is None else ztab
        a = a.reshape(-1, d.Mx, d.My)
        t = np.tensordot(a, self.sx[dx], axes=(1, 0))          # k, n, i
        t = np.tensordot(t, self.sy[dy], axes=(1, 0))          # k, i, j
        return np.tensordot(t, zt[dz, k_from:], axes=(0, 0))   # i, j, l

    @property
    def cz_ends(self) -> np.ndarray:
        """Vertical tables at z = -h and z = +h, shape (3, K + 1, 2)."""
        if "ends" not in self._cache:
            h = self.domain.h
            self._cache["ends"] = _vertical_table(self.domain.K, h, np.array([-h, h]))
        return self._cache["ends"]

    def analyse(self, g: np.ndarray, k_from: int = 1) -> np.ndarray:
        """Quadrature inner products of a weighted grid scalar with sine x cosine modes."""
        t = np.tensordot(g, self.cz[0, k_from:], axes=(2, 1))  # i, j, k
        t = np.tensordot(t, self.sy[0], axes=(1, 1))           # i, k, n
        t = np.tensordot(t, self.sx[0], axes=(0, 1))           # k, n, m
        return np.swapaxes(t, 1, 2).reshape(t.shape[0], -1)

    def bar_grid(self, b: np.ndarray, table: str = "phi") -> np.ndarray:
        """Combination of solenoidal modes on the 2D grid, shape (2, Nx, Ny)."""
        arr = {"phi": self.phi_bar, "dx": self.dx_bar, "dy": self.dy_bar,
               "lap": self.lap_bar}[table]
        return np.tensordot(b, arr, axes=(0, 0))

    def to_grid(self, coeffs: np.ndarray) -> np.ndarray:
        """Velocity on the grid, shape (2, Nx, Ny, Nz)."""
        coeffs = np.asarray(coeffs)
        out = np.empty((2,) + self.grid_shape)
        vbar = self.bar_grid(coeffs[0, 0, :self.n_bar]) * self.c0
        for c in range(2):
            out[c] = self.synth(coeffs[c, 1:]) + vbar[c][:, :, None]
        return out

    def to_spectral(self, grid: np.ndarray) -> np.ndarray:
        """L2-orthogonal projection of grid values onto the Galerkin space.

        Sine-cosine blocks are obtained by quadrature; the vertical mean is
        projected onto the solenoidal span, which realises P_n applied after
        the hydrostatic Helmholtz projection.
        """
        gw = grid * self.weights
        out = np.zeros(self.shape)
        for c in range(2):
            out[c, 1:] = self.analyse(gw[c])
        mean = gw.sum(axis=3) * self.c0                      # (2, Nx, Ny)
        out[0, 0, :self.n_bar] = np.einsum("cij,ncij->n", mean, self.phi_bar)
        return out

    def raw_to_grid(self, raw: np.ndarray) -> np.ndarray:
        """Evaluate a full (non-solenoidal) sine x cosine expansion."""
        raw = np.asarray(raw)
        out = np.empty((2,) + self.grid_shape)
        for c in range(2):
            out[c] = self.synth(raw[c], k_from=0)
        return out

    def raw_from_grid(self, grid: np.ndarray) -> np.ndarray:
        gw = grid * self.weights
        return np.stack([self.analyse(gw[c], k_from=0) for c in range(2)])

    # ---------------------------------------------------------------- queries
    def gram_residuals(self) -> dict:
        """Max deviation from identity of the discrete Gram matrices."""
        W2 = self.weights2d
        gx = (self.sx[0] * self.wx) @ self.sx[0].T
        gy = (self.sy[0] * self.wy) @ self.sy[0].T
        gz = (self.cz[0] * self.wz) @ self.cz[0].T
        flat = self.phi_bar.reshape(self.n_bar, -1)
        gb = (flat * np.tile(W2.ravel(), 2)) @ flat.T
        eye = np.eye
        return {
            "horizontal": max(abs(gx - eye(len(gx))).max(), abs(gy - eye(len(gy))).max()),
            "vertical": abs(gz - eye(len(gz))).max(),
            "barotropic": abs(gb - eye(self.n_bar)).max(),
        }

    def bar_divergence(self) -> float:
        div = self.dx_bar[:, 0] + self.dy_bar[:, 1]
        return float(abs(div).max())

    def bar_trace(self) -> float:
        """Quadrature norm of the solenoidal modes along the boundary of G."""
        d = self.domain
        worst = 0.0
        for side, (xs, ys, wts) in enumerate((
            (np.array([0.0, d.Lx]), self.y, self.wy),
            (self.x, np.array([0.0, d.Ly]), self.wx),
        )):
            vals = self._bar_eval(xs, ys)        # (n, 2, len(xs), len(ys))
            if side == 0:
                sq = (vals**2 * wts[None, None, None, :]).sum(axis=(1, 3))
            else:
                sq = (vals**2 * wts[None, None, :, None]).sum(axis=(1, 2))
            worst = max(worst, float(np.sqrt(sq.max())))
        return worst

    def _bar_eval(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        tabs = _stream_tables(self.domain, self.beam_lambdas, xs, ys)
        return np.tensordot(self.stream_coeffs, tabs["phi"], axes=(1, 0))

    def metadata(self) -> dict:
        d = self.domain
        c1, c2 = poincare_constants(self)
        return {
            "domain": d.as_dict(),
            "modes": {
                "horizontal_scalar": self.n_h,
                "vertical": d.K + 1,
                "barotropic": self.n_bar,
                "barotropic_dropped": self.dropped,
                "total_dof": int(self.bar_mask.sum()),
            },
            "eigenvalues": {
                "dirichlet": [float(self.mu.min()), float(self.mu.max())],
                "vertical": [float(self.kappa.min()), float(self.kappa.max())],
                "stokes_ritz": [float(self.mu_bar.min()), float(self.mu_bar.max())],
            },
            "gram_residuals": {k: float(v) for k, v in self.gram_residuals().items()},
            "barotropic_divergence": self.bar_divergence(),
            "barotropic_trace": self.bar_trace(),
            "poincare": {"C1": c1, "C2": c2},
        }


def _stream_tables(domain: DomainSpec, lambdas: tuple, xs: np.ndarray,
                   ys: np.ndarray) -> dict:
    """perp-grad of every beam product psi_kl = C_k(x/Lx) C_l(y/Ly) and derivatives.

    Returned arrays are indexed ``[k * My + l, component, ix, iy]``.
    """
    lx, ly = domain.Lx, domain.Ly
    bx = np.stack([beam_derivatives(lam, xs / lx) for lam in lambdas[0]])
    by = np.stack([beam_derivatives(lam, ys / ly) for lam in lambdas[1]])
    # scale derivatives back to physical coordinates
    bx = bx / lx ** np.arange(4)[None, :, None]
    by = by / ly ** np.arange(4)[None, :, None]

    def outer(p, q):
        return np.einsum("ki,lj->klij", bx[:, p], by[:, q]).reshape(
            -1, len(xs), len(ys))

    # u = (d_y psi, -d_x psi)
    mixed = outer(1, 1)
    phi = np.stack([outer(0, 1), -outer(1, 0)], axis=1)
    dx = np.stack([mixed, -outer(2, 0)], axis=1)
    dy = np.stack([outer(0, 2), -mixed], axis=1)
    lap = np.stack([outer(2, 1) + outer(0, 3), -(outer(3, 0) + outer(1, 2))], axis=1)
    return {"phi": phi, "dx": dx, "dy": dy, "lap": lap}


def _orthonormalise(vectors: np.ndarray, tol: float = GS_DROP_TOL):
    """Modified Gram-Schmidt with one reorthogonalisation pass.

    ``vectors`` rows are already expressed in a Euclidean (sqrt-weighted)
    form.  Returns the coefficient matrix R with orthonormal rows
    ``R @ vectors`` and the number of rows dropped as dependent.
    """
    n = vectors.shape[0]
    norms = np.linalg.norm(vectors, axis=1)
    basis, coeffs = [], []
    dropped = 0
    for i in range(n):
        v = vectors[i] / norms[i]
        r = np.zeros(n)
        r[i] = 1.0 / norms[i]
        for _ in range(2):
            for q, rq in zip(basis, coeffs):
                proj = q @ v
                v = v - proj * q
                r = r - proj * rq
        nv = np.linalg.norm(v)
        if nv < tol:
            dropped += 1
            continue
        basis.append(v / nv)
        coeffs.append(r / nv)
    return np.array(coeffs), dropped


def build_basis(spec: DomainSpec) -> SpectralBasis:
    """Assemble quadrature, sine/cosine tables and the solenoidal block."""
    d = spec
    Nx, Ny, Nz = d.nodes
    x, wx = _gauss(Nx, 0.0, d.Lx)
    y, wy = _gauss(Ny, 0.0, d.Ly)
    z, wz = _gauss(Nz, -d.h, d.h)
    sx = _sine_table(d.Mx, d.Lx, x)
    sy = _sine_table(d.My, d.Ly, y)
    cz = _vertical_table(d.K, d.h, z)
    m = np.arange(1, d.Mx + 1)[:, None]
    n = np.arange(1, d.My + 1)[None, :]
    mu = (np.pi**2 * (m**2 / d.Lx**2 + n**2 / d.Ly**2)).ravel()
    kappa = (np.arange(d.K + 1) * np.pi / (2 * d.h)) ** 2

    lambdas = (tuple(beam_roots(d.Mx)), tuple(beam_roots(d.My)))
    tabs = _stream_tables(d, lambdas, x, y)
    W2 = wx[:, None] * wy[None, :]
    sw = np.sqrt(W2)[None, None]
    cand = (tabs["phi"] * sw).reshape(len(tabs["phi"]), -1)
    R, dropped = _orthonormalise(cand)

    def combine(table, coeffs):
        return np.tensordot(coeffs, tabs[table], axes=(1, 0))

    # rotate onto Ritz vectors of the Stokes operator: <grad phi_i, grad phi_j>
    gx = (combine("dx", R) * sw).reshape(len(R), -1)
    gy = (combine("dy", R) * sw).reshape(len(R), -1)
    stiff = gx @ gx.T + gy @ gy.T
    mu_bar, Q = np.linalg.eigh(0.5 * (stiff + stiff.T))
    # fix eigenvector signs so construction is reproducible
    Q = Q * np.sign(Q[np.argmax(abs(Q), axis=0), np.arange(Q.shape[1])])
    R = Q.T @ R

    phi_bar = combine("phi", R)
    dx_bar = combine("dx", R)
    dy_bar = combine("dy", R)
    lap_bar = combine("lap", R)
    lw = (lap_bar * sw).reshape(len(R), -1)
    lap_gram = lw @ lw.T
    # <phi_i, e_c s_m s_n>_G for the hydrostatic projection of raw fields
    sine2d = np.einsum("mi,nj->mnij", sx[0], sy[0]).reshape(-1, Nx, Ny)
    sine_to_bar = np.einsum("acij,nij,ij->acn", phi_bar, sine2d, W2)

    return SpectralBasis(
        domain=d, x=x, y=y, z=z, wx=wx, wy=wy, wz=wz, sx=sx, sy=sy, cz=cz,
        mu=mu, kappa=kappa, stream_coeffs=R, beam_lambdas=lambdas,
        mu_bar=mu_bar, phi_bar=phi_bar, dx_bar=dx_bar, dy_bar=dy_bar,
        lap_bar=lap_bar, lap_gram=lap_gram, sine_to_bar=sine_to_bar,
        dropped=dropped,
    )


def poincare_constants(basis: SpectralBasis) -> tuple[float, float]:
    """Best discrete constants in ||u|| <= C1 ||grad u|| and ||grad u|| <= C2 ||Lap u||.

    Both ratios equal 1/sqrt(mu) on a Dirichlet eigenfunction, so the maximum
    over the scalar modes is attained at the smallest eigenvalue.
    """
    mu = basis.mu
    c1 = float(np.max(1.0 / np.sqrt(mu)))
    c2 = float(np.max(np.sqrt(mu) / mu))
    return c1, c2


def hydrostatic_project(v, basis: SpectralBasis):
    """Hydrostatic Helmholtz projection onto the Galerkin space.

    ``v`` may be a raw sine x cosine coefficient tensor of shape
    ``(2, K + 1, Mx * My)`` (k = 0 included, no solenoidal constraint), a
    grid field of shape ``(2, Nx, Ny, Nz)``, or an already projected
    :class:`~hydroprim.field.VelocityField`.  The fluctuation (k > 0) block
    passes through; the vertical mean is projected onto the solenoidal span.
    """
    from .field import VelocityField

    if isinstance(v, VelocityField):
        if v.basis is not basis:
            raise ValueError("field belongs to a different basis")
        return v.copy()
    v = np.asarray(v, dtype=float)
    if v.shape == (2,) + basis.grid_shape:
        return VelocityField(basis, basis.to_spectral(v))
    if v.shape != basis.shape:
        raise ValueError(f"expected raw coefficients of shape {basis.shape} "
                         f"or grid values of shape {(2,) + basis.grid_shape}, got {v.shape}")
    out = np.zeros(basis.shape)
    out[:, 1:] = v[:, 1:]
    out[0, 0, :basis.n_bar] = np.einsum("acn,cn->a", basis.sine_to_bar, v[:, 0])
    return VelocityField(basis, out)
