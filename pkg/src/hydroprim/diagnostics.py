"""Trajectory diagnostics: norms, functionals and inequality checks.

Every inequality whose constant is only known to exist is checked by fitting
the smallest constant that makes it hold on the sampled trajectory; callers
judge the fitted value (finite, stable under refinement) rather than an
absolute bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .field import (
    VelocityField,
    dz_norm_sq,
    grad_dz_norm_sq,
    grad_norm_sq,
    grid_state,
    inner,
    lap_norm_sq,
    lq_norm,
    norm,
)

E = math.e


@dataclass(frozen=True)
class DiagnosticsConfig:
    q_list: tuple = (2.0, 4.0, 6.0, 8.0)
    eta: float = 2.0
    pressure: bool = True

    def __post_init__(self):
        if any(q < 1 for q in self.q_list):
            raise ValueError("q values must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")


@dataclass
class DiagnosticsRecord:
    """One time sample.  Norms are over Omega unless the name says G."""

    t: float
    step: int
    l2: float
    grad_l2: float
    h_norm: float
    grad_h: float
    v_norm: float
    dz_l2: float
    grad_dz_l2: float
    dz_eta: float            # ||d_z v||_{2+eta}
    tilde_l4: float
    grad_bar_l2: float       # ||grad_H v_bar||_{L2(G)}
    lap_l2: float
    lap_bar_l2: float        # ||Lap_H v_bar||_{L2(G)}
    tilde_weighted_grad: float  # || |v~| grad_H v~ ||
    div_avg_vv: float        # ||div_H avg(v (x) v)||_{L2(G)}
    linf: float
    sqrt_q_sup: float
    cancellation: float
    A: float
    B: float
    grad_p: float
    p_orthogonality: float
    p_bound_ratio: float
    rhs_l2: float
    w_top: float
    w_bottom: float
    kinematic: float
    dissipation: float
    work: float
    dz_lq: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "dz_lq"}
        for q, val in self.dz_lq.items():
            out[lq_column(q)] = val
        return out


def lq_column(q: float) -> str:
    return f"dz_lq{q:g}"


def csv_columns(q_list) -> list[str]:
    base = [f.name for f in fields(DiagnosticsRecord) if f.name != "dz_lq"]
    return base + [lq_column(q) for q in q_list]


def write_csv(path, records, q_list) -> None:
    """Header row plus one row per record; floats in repr form (locale free)."""
    cols = csv_columns(q_list)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for r in records:
            row = r.row()
            writer.writerow([repr(int(row[c])) if c == "step" else repr(float(row[c]))
                             for c in cols])


def read_csv(path) -> list[DiagnosticsRecord]:
    names = [f.name for f in fields(DiagnosticsRecord) if f.name != "dz_lq"]
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {n: (int(row[n]) if n == "step" else float(row[n])) for n in names}
            lq = {float(c[5:]): float(v) for c, v in row.items() if c.startswith("dz_lq")}
            out.append(DiagnosticsRecord(**kw, dz_lq=lq))
    return out


def series(records, name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records])


# -------------------------------------------------------------- per-sample
def legendre_diff_matrix(nodes: np.ndarray) -> np.ndarray:
    """Collocation derivative matrix on arbitrary distinct nodes (barycentric)."""
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    wts = 1.0 / diff.prod(axis=1)
    D = (wts[None, :] / wts[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _dz_matrix(basis):
    if "Dz" not in basis._cache:
        basis._cache["Dz"] = legendre_diff_matrix(basis.z)
    return basis._cache["Dz"]


def kinematic_residual(g: dict, basis) -> float:
    """max |d_z w + div_H v| with d_z w from collocation differentiation of w."""
    dzw = np.tensordot(g["w"], _dz_matrix(basis), axes=(2, 1))
    return float(abs(dzw + g["div"]).max())


def apriori_AB(dz_l2, dz_eta, grad_dz_l2, grad_l2, lap_l2, eta):
    lam = 4.0 / eta
    A1 = dz_l2**2 + dz_eta ** (2 + eta) + E
    B1 = grad_dz_l2**2
    A2 = grad_l2**2 + E
    B2 = lap_l2**2 + E
    return A1 + A1**lam + A2, A1 + B1 + B2


def compute_record(state, f=None, config: DiagnosticsConfig | None = None,
                   nonlinear: np.ndarray | None = None, grid: dict | None = None
                   ) -> DiagnosticsRecord:
    """Evaluate every tracked quantity for ``state`` (a SimulationState).

    ``nonlinear`` (projected N(v) coefficients) and ``grid`` (output of
    :func:`~hydroprim.field.grid_state`) are reused when the integrator has
    already computed them.
    """
    from .dynamics import ZERO_FORCE, nonlinear_grid

    config = config or DiagnosticsConfig()
    f = f or ZERO_FORCE
    v = state.v
    b = v.basis
    c = v.coeffs
    if grid is None or nonlinear is None:
        adv, grid = nonlinear_grid(v)
        nonlinear = b.to_spectral(adv)
    else:
        adv = np.einsum("dxyz,cdxyz->cxyz", grid["v"], grid["grad"]) + grid["w"][None] * grid["dz"]
    g = grid
    vals = g["v"]
    vbar = b.bar_grid(v.bar) * b.c0
    vt = vals - vbar[:, :, :, None]
    gt = g["grad"] - (np.stack([b.bar_grid(v.bar, "dx"), b.bar_grid(v.bar, "dy")], axis=1)
                      * b.c0)[..., None]
    mag2 = (vt**2).sum(axis=0)
    tw = math.sqrt(float(np.sum(b.weights * mag2 * (gt**2).sum(axis=(0, 1)))))

    two_h = 2 * b.domain.h
    dz_l2 = math.sqrt(dz_norm_sq(v))
    grad_l2 = math.sqrt(grad_norm_sq(v))
    grad_dz = math.sqrt(grad_dz_norm_sq(v))
    lap_l2 = math.sqrt(lap_norm_sq(v))
    dz_eta = lq_norm(g["dz"], b, 2 + config.eta)
    A, B = apriori_AB(dz_l2, dz_eta, grad_dz, grad_l2, lap_l2, config.eta)

    W2 = b.weights2d
    # div_H of the vertical mean of v (x) v, assembled directly from products
    dvv = (g["div"][None] * vals + np.einsum("dxyz,cdxyz->cxyz", vals, g["grad"]))
    dvv_bar = np.tensordot(dvv, b.wz, axes=(3, 0)) / two_h
    div_avg_vv = math.sqrt(float(np.sum(W2 * dvv_bar**2)))

    if config.pressure:
        pres = pressure_gradient(v, f, state.t, adv=adv)
        grad_p, p_orth, p_ratio = pres.norm, pres.orthogonality, pres.bound_ratio
    else:
        grad_p = p_orth = p_ratio = float("nan")

    rhs_c = -b.laplace_eigs * c - nonlinear + f.at(state.t, b)
    return DiagnosticsRecord(
        t=state.t,
        step=state.step_index,
        l2=norm(v),
        grad_l2=grad_l2,
        h_norm=norm(v, "H"),
        grad_h=math.sqrt(float(np.sum(b.h_weights * b.laplace_eigs * c**2))),
        v_norm=norm(v, "V"),
        dz_l2=dz_l2,
        grad_dz_l2=grad_dz,
        dz_eta=dz_eta,
        tilde_l4=lq_norm(vt, b, 4),
        grad_bar_l2=math.sqrt(float(np.sum(b.mu_bar * v.bar**2)) / two_h),
        lap_l2=lap_l2,
        lap_bar_l2=math.sqrt(float(v.bar @ b.lap_gram @ v.bar) / two_h),
        tilde_weighted_grad=tw,
        div_avg_vv=div_avg_vv,
        linf=float(np.sqrt((vals**2).sum(axis=0)).max()),
        sqrt_q_sup=_sqrt_q_from_grid(vals, b, config.q_list),
        cancellation=float(np.sum(nonlinear * c)),
        A=A,
        B=B,
        grad_p=grad_p,
        p_orthogonality=p_orth,
        p_bound_ratio=p_ratio,
        rhs_l2=float(np.linalg.norm(rhs_c)),
        w_top=float(abs(g["w_top"]).max()),
        w_bottom=float(abs(g["w_bottom"]).max()),
        kinematic=kinematic_residual(g, b),
        dissipation=state.dissipation,
        work=state.work,
        dz_lq={float(q): lq_norm(g["dz"], b, q) for q in config.q_list},
    )


# ------------------------------------------------------------ energy identity
def energy_identity_residual(records, method: str = "midpoint") -> np.ndarray:
    """r(t) / ||v0||^2 with r = ||v(t)||^2 + 2 int ||grad_H v||^2 - ||v0||^2 - 2 int <f, v>.

    ``method='midpoint'`` uses the dissipation integral accumulated by the
    integrator from consecutive-state midpoints; ``'trapezoid'`` integrates
    the sampled ||grad_H v||^2 with the trapezoid rule (forcing work is then
    ignored, so it is meant for f = 0 runs).
    """
    l2 = series(records, "l2")
    e0 = l2[0] ** 2
    if method == "midpoint":
        diss = series(records, "dissipation") - records[0].dissipation
        work = series(records, "work") - records[0].work
    elif method == "trapezoid":
        t = series(records, "t")
        g2 = series(records, "grad_l2") ** 2
        diss = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g2[1:] + g2[:-1]))])
        work = np.zeros_like(diss)
    else:
        raise ValueError(f"unknown method {method!r}")
    r = l2**2 + 2 * diss - e0 - 2 * work
    return r / e0 if e0 > 0 else r


# ---------------------------------------------------------- Gronwall envelope
_SQ3 = math.sqrt(3.0)
PHI_CUBIC_SUP = 2 * math.pi / (3 * _SQ3)
C0_CUBIC = -math.pi / (3 * _SQ3)


def phi_cubic(u):
    """int_0^u ds / (1 + s + s^2) = (2/sqrt3) arctan((1 + 2u)/sqrt3) + c0.

    Evaluated through the arctan difference formula, which avoids the
    cancellation between the two arctan terms.
    """
    u = np.asarray(u, dtype=float)
    return (2 / _SQ3) * np.arctan(_SQ3 * u / (2 + u))


def phi_cubic_inv(y):
    """Inverse of :func:`phi_cubic` on [0, 2 pi / (3 sqrt3))."""
    y = np.asarray(y, dtype=float)
    if np.any(y >= PHI_CUBIC_SUP) or np.any(y < 0):
        raise ValueError("argument outside the range of Phi")
    tau = np.tan(0.5 * _SQ3 * y)
    return 2 * tau / (_SQ3 - tau)


@dataclass
class GronwallSpec:
    """x(t) <= M + int Psi omega(x) with omega 'linear' (s) or 'cubic' (1 + s + s^2)."""

    M: float
    t: np.ndarray
    psi: np.ndarray
    omega: str = "cubic"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.M < 0 or np.any(self.psi < 0):
            raise ValueError("need M >= 0 and Psi >= 0")
        if self.omega not in ("linear", "cubic"):
            raise ValueError("omega must be 'linear' or 'cubic'")

    def phi(self, u):
        if self.omega == "cubic":
            return phi_cubic(u)
        return np.log(u)

    def phi_inv(self, y):
        if self.omega == "cubic":
            return phi_cubic_inv(y)
        return np.exp(y)

    def integral(self) -> np.ndarray:
        t, p = self.t, self.psi
        return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (p[1:] + p[:-1]))])


@dataclass
class GronwallResult:
    holds: bool
    envelope: np.ndarray
    escapes_at: float | None    # first sample time where the envelope leaves the range


def gronwall_envelope(spec: GronwallSpec, x_series=None, tol: float = 1e-12) -> GronwallResult:
    """Envelope Phi^-1(Phi(M) + int_0^t Psi) and whether ``x_series`` stays below it.

    Where the argument leaves the range of Phi the envelope is +inf and the
    time of escape is reported (the bound is lost, not violated).
    """
    arg_int = spec.integral()
    env = np.full(arg_int.shape, np.inf)
    escapes_at = None
    if spec.omega == "linear":
        env = spec.M * np.exp(arg_int)
    else:
        y = phi_cubic(spec.M) + arg_int
        ok = y < PHI_CUBIC_SUP
        env[ok] = phi_cubic_inv(y[ok])
        if not ok.all():
            escapes_at = float(spec.t[np.argmin(ok)])
    holds = True
    if x_series is not None:
        x = np.asarray(x_series, dtype=float)
        holds = bool(np.all(x <= env * (1 + tol) + tol))
    return GronwallResult(holds, env, escapes_at)


# ---------------------------------------------------------- L^q preservation
def lq_preservation_check(records, q: float, c: float | None = None) -> dict:
    """Compare ||d_z v(t)||_q^q with ||d_z v0||_q^q exp(c int ||grad_H v||^2_{H1_z L2}).

    Returns the sampled sides and the smallest ``fitted_c`` making the
    inequality hold at every sample; ``c`` (default: the fitted value) sets
    the right-hand side.
    """
    if q <= 2:
        raise ValueError("q must exceed 2")
    try:
        lhs = np.array([r.dz_lq[float(q)] for r in records]) ** q
    except KeyError:
        raise KeyError(f"records do not carry ||d_z v||_{q:g}; add q to q_list") from None
    t = series(records, "t")
    dens = series(records, "grad_l2") ** 2 + series(records, "grad_dz_l2") ** 2
    integ = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (dens[1:] + dens[:-1]))])
    fitted = 0.0
    if lhs[0] > 0:
        mask = integ > 0
        if mask.any():
            fitted = float(np.max(np.log(lhs[mask] / lhs[0]) / integ[mask]))
    elif np.any(lhs > 0):
        fitted = math.inf
    cc = fitted if c is None else c
    if lhs[0] > 0:
        rhs = lhs[0] * np.exp(cc * integ)
    else:
        rhs = np.where((integ > 0) & (cc == math.inf), math.inf, 0.0)
    return {"t": t, "lhs": lhs, "rhs": rhs, "integral": integ, "fitted_c": fitted,
            "holds": bool(np.all(lhs <= rhs * (1 + 1e-12) + 1e-300))}


# -------------------------------------------------------------- sqrt(q) growth
def _sqrt_q_from_grid(vals, basis, q_list) -> float:
    if not len(q_list):
        return 0.0
    return max(lq_norm(vals, basis, q) / math.sqrt(q) for q in q_list)


def sqrt_q_growth(v: VelocityField, q_list=(2, 4, 6, 8), q_max: float = 8.0) -> float:
    """max over q of ||v||_q / sqrt(q)."""
    if any(q < 2 or q > q_max for q in q_list):
        raise ValueError(f"q values must lie in [2, {q_max}]")
    return _sqrt_q_from_grid(v.grid(), v.basis, q_list)


# -------------------------------------------------------------- tri-linear
def _scalar_parts(v: VelocityField, comp: int) -> dict:
    g = grid_state(v, with_w=False)
    return {"f": g["v"][comp], "grad": g["grad"][comp], "dz": g["dz"][comp]}


def trilinear_check(f: VelocityField, g: VelocityField, h: VelocityField,
                    variant: str = "a", component: int = 0) -> dict:
    """Both sides of the tri-linear estimate for scalar components, with c = 1.

    variant a: |<fg, h>| vs sqrt(|grad f| |f| |grad g| |g|) (sqrt(|dz h| |h|) + |h|)
    variant b: |<fg, h>| vs |f| sqrt(|grad h| |h|) sqrt((|g| + |dz g|)(|g| + |grad g|))
    """
    b = f.basis
    W = b.weights

    def l2(a):
        return math.sqrt(float(np.sum(W * a**2)))

    F, G, H = (_scalar_parts(x, component) for x in (f, g, h))
    lhs = abs(float(np.sum(W * F["f"] * G["f"] * H["f"])))
    nf, ng, nh = l2(F["f"]), l2(G["f"]), l2(H["f"])
    gf, gg, gh = l2(F["grad"]), l2(G["grad"]), l2(H["grad"])
    dg, dh = l2(G["dz"]), l2(H["dz"])
    if variant == "a":
        rhs = math.sqrt(gf * nf * gg * ng) * (math.sqrt(dh * nh) + nh)
    elif variant == "b":
        rhs = nf * math.sqrt(gh * nh) * math.sqrt((ng + dg) * (ng + gg))
    else:
        raise ValueError("variant must be 'a' or 'b'")
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}


# ------------------------------------------------------------------ pressure
@dataclass
class PressureDiagnostic:
    grad_p: np.ndarray          # (2, Nx, Ny)
    norm: float
    rhs_norm: float             # ||f_bar - div_H avg(v (x) v)||_{L2(G)}
    lap_norm: float             # ||Lap_H v_bar||_{L2(G)}
    orthogonality: float        # max_m |<grad p, phi_m>_G|
    bound_ratio: float          # norm / (rhs_norm + lap_norm)


def _mean_force(f, t, basis) -> np.ndarray:
    from .dynamics import ForcingSpec

    b = basis
    if f is None:
        return np.zeros((2,) + b.grid_shape[:2])
    if isinstance(f, ForcingSpec):
        if f.coeffs is None or f.profile(t) == 0.0:
            return np.zeros((2,) + b.grid_shape[:2])
        s = f.profile(t)
        f = f.coeffs if isinstance(f.coeffs, VelocityField) else np.asarray(f.coeffs)
        f = f * s
    if isinstance(f, VelocityField):
        return b.bar_grid(f.bar) * b.c0
    f = np.asarray(f, dtype=float)
    if f.shape == (2,) + b.grid_shape[:2]:
        return f
    if f.shape == (2,) + b.grid_shape:
        return np.tensordot(f, b.wz, axes=(3, 0)) / (2 * b.domain.h)
    if f.shape == b.shape:
        # raw tensor: only the k = 0 slice survives the vertical mean
        return np.stack([b.synth(f[c, :1], k_from=0, ztab=b.cz[:, :1])[:, :, 0]
                         for c in range(2)])
    raise ValueError(f"cannot interpret forcing of shape {f.shape}")


def pressure_gradient(v: VelocityField, f=None, t: float = 0.0,
                      adv: np.ndarray | None = None) -> PressureDiagnostic:
    """grad_H p = (1 - P_G)(f_bar - avg(v . grad v + w d_z v) + Lap_H v_bar).

    ``f`` may be a ForcingSpec, a raw or field coefficient tensor, or grid
    values of the force (3D, or its 2D vertical mean).  P_G is the discrete
    L2 projection onto the solenoidal modes.
    """
    from .dynamics import nonlinear_grid

    b = v.basis
    if adv is None:
        adv, _ = nonlinear_grid(v)
    W2 = b.weights2d
    avg_adv = np.tensordot(adv, b.wz, axes=(3, 0)) / (2 * b.domain.h)
    rhs_bar = _mean_force(f, t, b) - avg_adv
    lap_bar = b.bar_grid(v.bar, "lap") * b.c0
    total = rhs_bar + lap_bar
    coeff = np.einsum("cij,ncij->n", total * W2, b.phi_bar)
    grad_p = total - b.bar_grid(coeff)
    orth = np.einsum("cij,ncij->n", grad_p * W2, b.phi_bar)

    def l2(a):
        return math.sqrt(float(np.sum(W2 * a**2)))

    gp, rn, ln = l2(grad_p), l2(rhs_bar), l2(lap_bar)
    denom = rn + ln
    ratio = gp / denom if denom > 0 else 0.0
    return PressureDiagnostic(grad_p, gp, rn, ln, float(abs(orth).max(initial=0.0)), ratio)


# ------------------------------------------------------- a priori functionals
def _time_derivative(t, y):
    if len(t) < 3:
        return np.gradient(y, t) if len(t) > 1 else np.zeros_like(y)
    return np.gradient(y, t, edge_order=2)


def apriori_functionals(records, eta: float | None = None) -> dict:
    """A(t), B(t) and the smallest C with dA/dt + B <= C (1 + ||v||_inf^2) A.

    dA/dt uses second-order finite differences on the sample times.  With
    ``eta`` given, A and B are recomputed from the stored norms (the records
    must then carry ||d_z v||_{2+eta} for that eta).
    """
    t = series(records, "t")
    if eta is None:
        A, B = series(records, "A"), series(records, "B")
    else:
        A, B = apriori_AB(series(records, "dz_l2"), series(records, "dz_eta"),
                          series(records, "grad_dz_l2"), series(records, "grad_l2"),
                          series(records, "lap_l2"), eta)
    dA = _time_derivative(t, A)
    linf = series(records, "linf")
    ratio = (dA + B) / ((1 + linf**2) * A)
    return {"t": t, "A": A, "B": B, "dAdt": dA, "ratio": ratio,
            "fitted_C": float(ratio.max())}


# ------------------------------------------------- barotropic / L4 functionals
def barotropic_l4_functionals(records) -> dict:
    """Barotropic gradient and fluctuation L4 functionals with fitted constants.

    ``fitted_K`` is the smallest constant with
    sup_s<=t (||grad v_bar||^2 + ||v~||_4^4) + int ||Lap v_bar||^2
    + int || |v~| grad v~ ||^2 <= K (1 + ||v~0||_4^4 + ||grad v_bar0||^2),
    and ``fitted_K_div`` is int ||div_H avg(v (x) v)||^2 over the same scale.
    """
    t = series(records, "t")

    def cumint(y):
        return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))])

    gbar = series(records, "grad_bar_l2") ** 2
    l4 = series(records, "tilde_l4") ** 4
    lap_int = cumint(series(records, "lap_bar_l2") ** 2)
    tw_int = cumint(series(records, "tilde_weighted_grad") ** 2)
    div_int = cumint(series(records, "div_avg_vv") ** 2)
    lhs = np.maximum.accumulate(gbar + l4) + lap_int + tw_int
    scale = 1 + l4[0] + gbar[0]
    return {"t": t, "grad_bar_sq": gbar, "tilde_l4_4": l4, "lap_bar_int": lap_int,
            "tilde_weighted_int": tw_int, "div_avg_vv_int": div_int, "lhs": lhs,
            "fitted_K": float(lhs.max() / scale),
            "fitted_K_div": float(div_int[-1] / scale)}


def cancellation_ratio(records) -> np.ndarray:
    """|<N(v), v>| / ||v||_V^2 per sample (0 where v = 0)."""
    c = np.abs(series(records, "cancellation"))
    vn = series(records, "v_norm") ** 2
    return np.divide(c, vn, out=np.zeros_like(c), where=vn > 0)
