"""Contact Lagrangian families on the flat torus.

A model is L(x, v, u) = L0(x, v) + g(x, u) with

    L0(x, v) = 1/2 |v - V(x)|^2 + W(x)
    g(x, u)  = -lam(x) u                          (linear coupling)
             = -lam(x) u - kappa u^3 / (1 + u^2)   (saturating coupling)

All data are trigonometric polynomials, so periodicity is exact and the
Legendre transform has a closed form.  Points carry the torus dimension on
their last axis; in 1D a bare scalar or a flat array of points is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ModelViolation, NonFiniteState

TWO_PI = 2.0 * math.pi

# max over u of d/du [u^3 / (1 + u^2)] = (u^4 + 3u^2)/(1 + u^2)^2, attained at u^2 = 3
SATURATION_SLOPE_MAX = 9.0 / 8.0

FAMILIES = ("mechanical", "drift", "mechanical_drift")
COUPLINGS = ("linear", "saturating")


def _points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing axis of length {dim}, got shape {x.shape}")
    return x


def _scalar_out(arr, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(np.asarray(arr).reshape(-1)[0])
    return arr


@dataclass(frozen=True)
class TrigPoly:
    """a0 + sum_k a_k cos(k x) + b_k sin(k x), summed over coordinates.

    In 2D the harmonic part is applied to each coordinate and the results are
    added (tensor sum); the constant ``a0`` is counted once.
    """

    cos: tuple[float, ...] = (0.0,)
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(a) for a in self.cos) or (0.0,))
        object.__setattr__(self, "sin", tuple(float(b) for b in self.sin))

    @classmethod
    def constant(cls, value: float) -> "TrigPoly":
        return cls((float(value),))

    @property
    def order(self) -> int:
        return max(len(self.cos) - 1, len(self.sin))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points ``x`` of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.cos[0])
        for k in range(1, self.order + 1):
            a = self.cos[k] if k < len(self.cos) else 0.0
            b = self.sin[k - 1] if k - 1 < len(self.sin) else 0.0
            if a != 0.0:
                out = out + a * np.cos(k * x).sum(axis=-1)
            if b != 0.0:
                out = out + b * np.sin(k * x).sum(axis=-1)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient with respect to each coordinate, shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k in range(1, self.order + 1):
            a = self.cos[k] if k < len(self.cos) else 0.0
            b = self.sin[k - 1] if k - 1 < len(self.sin) else 0.0
            out = out + k * (-a * np.sin(k * x) + b * np.cos(k * x))
        return out

    def to_dict(self) -> dict:
        return {"cos": list(self.cos), "sin": list(self.sin)}


@dataclass(frozen=True)
class LagrangianModel:
    """Quadratic contact Lagrangian with a monotone u-coupling.

    ``delta`` and ``Delta`` are the declared bounds delta <= lam(x) <= Delta;
    :func:`validate_model` checks them by sampling.
    """

    family: str = "mechanical"
    dim: int = 1
    W: TrigPoly | None = None
    V: tuple[TrigPoly, ...] | None = None
    lam: TrigPoly = field(default_factory=lambda: TrigPoly.constant(1.0))
    coupling: str = "linear"
    kappa: float = 0.0
    delta: float = 1.0
    Delta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.family in ("drift", "mechanical_drift"):
            if self.V is None or len(self.V) != self.dim:
                raise ValueError(f"family {self.family!r} needs one V component per dimension")
        elif self.V is not None:
            raise ValueError("mechanical family takes no drift V")
        if self.family in ("mechanical", "mechanical_drift") and self.W is None:
            raise ValueError(f"family {self.family!r} needs a potential W")
        if self.family == "drift" and self.W is not None:
            raise ValueError("drift family takes no potential W")
        if self.coupling == "linear" and self.kappa != 0.0:
            raise ValueError("linear coupling has kappa = 0")
        if self.kappa < 0.0:
            raise ValueError("kappa must be nonnegative")

    @property
    def coupling_slope_max(self) -> float:
        """Upper bound for dH/du, i.e. Delta + kappa * 9/8."""
        return self.Delta + self.kappa * SATURATION_SLOPE_MAX

    def potential(self, x: np.ndarray) -> np.ndarray:
        if self.W is None:
            return np.zeros(np.shape(x)[:-1])
        return self.W(x)

    def drift(self, x: np.ndarray) -> np.ndarray:
        if self.V is None:
            return np.zeros(np.shape(x))
        return np.stack([Vi(x) for Vi in self.V], axis=-1)

    def drift_jacobian(self, x: np.ndarray) -> np.ndarray:
        """J[..., i, d] = dV_i / dx_d."""
        if self.V is None:
            return np.zeros(np.shape(x) + (self.dim,))
        return np.stack([Vi.grad(x) for Vi in self.V], axis=-2)

    def base_lagrangian(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        w = np.asarray(v, dtype=float) - self.drift(x)
        return 0.5 * np.sum(w * w, axis=-1) + self.potential(x)

    def coupling_value(self, x: np.ndarray, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g = -self.lam(x) * u
        if self.kappa:
            g = g - self.kappa * (u * u * u) / (1.0 + u * u)
        return g

    def coupling_slope(self, x: np.ndarray, u) -> np.ndarray:
        """dg/du, always <= -lam(x) < 0."""
        u = np.asarray(u, dtype=float)
        s = -self.lam(x) + 0.0 * u
        if self.kappa:
            u2 = u * u
            s = s - self.kappa * (u2 * u2 + 3.0 * u2) / ((1.0 + u2) * (1.0 + u2))
        return s

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "W": None if self.W is None else self.W.to_dict(),
            "V": None if self.V is None else [Vi.to_dict() for Vi in self.V],
            "lam": self.lam.to_dict(),
            "coupling": self.coupling,
            "kappa": self.kappa,
            "delta": self.delta,
            "Delta": self.Delta,
        }


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray
    u: float

    def __post_init__(self):
        x = np.mod(np.atleast_1d(np.asarray(self.x, dtype=float)), TWO_PI)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "u", float(self.u))


def eval_L(model: LagrangianModel, x, v, u):
    """L(x, v, u) = L0(x, v) + g(x, u)."""
    xp = _points(x, model.dim)
    vp = _points(v, model.dim)
    out = model.base_lagrangian(xp, vp) + model.coupling_value(xp, u)
    return _scalar_out(out, x, v, u) if model.dim == 1 else out


def eval_dLdu(model: LagrangianModel, x, v, u):
    """Exact dL/du; does not depend on v for these families."""
    xp = _points(x, model.dim)
    out = model.coupling_slope(xp, u)
    return _scalar_out(out, x, u) if model.dim == 1 else out


def legendre_H(model: LagrangianModel, x, p, u):
    """Closed-form Hamiltonian 1/2|p|^2 + <p, V(x)> - W(x) - g(x, u)."""
    xp = _points(x, model.dim)
    pp = _points(p, model.dim)
    out = (
        0.5 * np.sum(pp * pp, axis=-1)
        + np.sum(pp * model.drift(xp), axis=-1)
        - model.potential(xp)
        - model.coupling_value(xp, u)
    )
    return _scalar_out(out, x, p, u) if model.dim == 1 else out


def legendre_H_numeric(model: LagrangianModel, x, p, u, bracket: float = 50.0) -> float:
    """H(x, p, u) = max_v <p, v> - L(x, v, u) by bounded scalar search.

    The kinetic term is a sum over velocity components, so the maximization
    splits into one bounded search per component.  Single point only.
    """
    xp = _points(x, model.dim).reshape(model.dim)
    pp = _points(p, model.dim).reshape(model.dim)
    drift = model.drift(xp)
    total = model.potential(xp) + model.coupling_value(xp, u)
    value = -float(total)
    for d in range(model.dim):
        pd, Vd = float(pp[d]), float(drift[d])

        def neg(vd, pd=pd, Vd=Vd):
            return -(pd * vd - 0.5 * (vd - Vd) ** 2)

        lo = -bracket - abs(pd) - abs(Vd)
        res = minimize_scalar(neg, bounds=(lo, -lo), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 500})
        value += -float(res.fun)
    return value


def hamiltonian_partials(model: LagrangianModel, x: np.ndarray, p: np.ndarray, u: float):
    """Return (H, H_x, H_p, H_u) at a single phase point."""
    x = x.reshape(1, model.dim)
    p = p.reshape(1, model.dim)
    V = model.drift(x)[0]
    J = model.drift_jacobian(x)[0]
    H = float(0.5 * p[0] @ p[0] + p[0] @ V - model.potential(x)[0]
              - model.coupling_value(x, u)[0])
    H_p = p[0] + V
    H_x = p[0] @ J
    if model.W is not None:
        H_x = H_x - model.W.grad(x)[0]
    # -dg/dx = grad(lam) * u for both couplings
    H_x = H_x + model.lam.grad(x)[0] * u
    H_u = -float(model.coupling_slope(x, u)[0])
    return H, H_x, H_p, H_u


def _contact_rhs(model, y):
    dim = model.dim
    x, p, u = y[:dim], y[dim:2 * dim], y[2 * dim]
    H, H_x, H_p, H_u = hamiltonian_partials(model, x, p, u)
    dx = H_p
    dp = -H_x - p * H_u
    du = float(p @ H_p) - H
    return np.concatenate([dx, dp, [du]])


def integrate_contact_ode(model: LagrangianModel, start: PhasePoint, dt: float,
                          steps: int) -> list[PhasePoint]:
    """Fixed-step RK4 for the contact Hamilton equations.

    Returns ``steps + 1`` phase points including the start; x is reduced to
    [0, 2pi) on output only, so the integration itself is unwrapped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = np.concatenate([start.x, start.p, [start.u]])
    dim = model.dim
    out = [start]
    for _ in range(int(steps)):
        k1 = _contact_rhs(model, y)
        k2 = _contact_rhs(model, y + 0.5 * dt * k1)
        k3 = _contact_rhs(model, y + 0.5 * dt * k2)
        k4 = _contact_rhs(model, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"state left the float range: {y.tolist()}")
        out.append(PhasePoint(y[:dim], y[dim:2 * dim], y[2 * dim]))
    return out


@dataclass
class ModelReport:
    delta_measured: float
    Delta_measured: float
    hessian_min: float
    growth_ratio: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "delta_measured": self.delta_measured,
            "Delta_measured": self.Delta_measured,
            "hessian_min": self.hessian_min,
            "growth_ratio": self.growth_ratio,
            "samples": self.samples,
        }


def _sample_x(dim: int, count: int = 64) -> np.ndarray:
    if dim == 1:
        return (TWO_PI * np.arange(count) / count)[:, None]
    side = int(round(math.sqrt(count)))
    g = TWO_PI * np.arange(side) / side
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=-1)


def validate_model(model: LagrangianModel, u_box: float = 10.0, v_box: float = 10.0,
                   rtol: float = 1e-12) -> ModelReport:
    """Check convexity, superlinearity and the u-monotonicity bounds.

    Samples 64 base points x 64 values of u x 16 velocities.  Returns the
    measured range [delta', Delta'] of -dL/du; raises ModelViolation with the
    offending sample when a declared bound fails.
    """
    xs = _sample_x(model.dim)
    us = np.linspace(-u_box, u_box, 64)
    direction = np.ones(model.dim) / math.sqrt(model.dim)
    vs = np.linspace(-v_box, v_box, 16)[:, None] * direction

    lam = model.lam(xs)
    i_min = int(np.argmin(lam))
    if lam[i_min] <= 0.0:
        raise ModelViolation(
            f"coupling rate lam(x) = {lam[i_min]:.6g} <= 0",
            {"x": xs[i_min].tolist(), "lam": float(lam[i_min])})
    tol_lam = rtol * max(1.0, abs(model.delta), abs(model.Delta))
    if lam[i_min] < model.delta - tol_lam:
        raise ModelViolation(
            f"lam(x) = {lam[i_min]:.6g} below declared delta = {model.delta}",
            {"x": xs[i_min].tolist(), "lam": float(lam[i_min])})
    i_max = int(np.argmax(lam))
    if lam[i_max] > model.Delta + tol_lam:
        raise ModelViolation(
            f"lam(x) = {lam[i_max]:.6g} above declared Delta = {model.Delta}",
            {"x": xs[i_max].tolist(), "lam": float(lam[i_max])})

    X = np.repeat(xs, len(us), axis=0)
    U = np.tile(us, len(xs))
    slope = model.coupling_slope(X, U)
    rate = -slope
    j = int(np.argmin(rate))
    if rate[j] <= 0.0:
        raise ModelViolation("dL/du is not strictly negative",
                             {"x": X[j].tolist(), "u": float(U[j]), "dLdu": float(slope[j])})
    upper = model.coupling_slope_max + tol_lam
    k = int(np.argmax(rate))
    if rate[k] > upper:
        raise ModelViolation("dH/du exceeds Delta + kappa * 9/8",
                             {"x": X[k].tolist(), "u": float(U[k]), "dHdu": float(rate[k])})

    # second derivative in v by central differences along each axis pair
    h = 1e-3
    Xv = np.repeat(xs, len(vs), axis=0)
    Vv = np.tile(vs, (len(xs), 1))
    hess_min = np.inf
    for d in range(model.dim):
        e = np.zeros(model.dim)
        e[d] = h
        second = (model.base_lagrangian(Xv, Vv + e) - 2.0 * model.base_lagrangian(Xv, Vv)
                  + model.base_lagrangian(Xv, Vv - e)) / (h * h)
        hess_min = min(hess_min, float(second.min()))
    if model.dim == 2:
        e0, e1 = np.array([h, 0.0]), np.array([0.0, h])
        cross = (model.base_lagrangian(Xv, Vv + e0 + e1) - model.base_lagrangian(Xv, Vv + e0 - e1)
                 - model.base_lagrangian(Xv, Vv - e0 + e1)
                 + model.base_lagrangian(Xv, Vv - e0 - e1)) / (4 * h * h)
        hess_min -= float(np.abs(cross).max())
    if not hess_min > 0.0:
        raise ModelViolation("d2L/dv2 is not positive definite", {"hessian_min": hess_min})

    R = 1e3
    growth = model.base_lagrangian(xs, R * direction) / (R * R)
    growth_ratio = float(growth.min())
    if growth_ratio < 0.25:
        raise ModelViolation("L is not superlinear in v", {"growth_ratio": growth_ratio})

    return ModelReport(
        delta_measured=float(rate.min()),
        Delta_measured=float(rate.max()),
        hessian_min=hess_min,
        growth_ratio=growth_ratio,
        samples=len(xs) * len(us) * len(vs),
    )


def make_model(family: str = "mechanical", dim: int = 1, W: Sequence | TrigPoly | None = None,
               V=None, lam=1.0, coupling: str = "linear", kappa: float = 0.0,
               delta: float | None = None, Delta: float | None = None) -> LagrangianModel:
    """Convenience constructor taking plain coefficient lists.

    ``W`` and ``lam`` accept a TrigPoly, a cosine-coefficient sequence or a
    number; ``V`` accepts one of those per dimension.  Missing bounds are
    filled from the extrema of ``lam`` on a fine sample.
    """

    def poly(obj):
        if obj is None or isinstance(obj, TrigPoly):
            return obj
        if isinstance(obj, (int, float)):
            return TrigPoly.constant(obj)
        if isinstance(obj, dict):
            return TrigPoly(tuple(obj.get("cos", (0.0,))), tuple(obj.get("sin", ())))
        return TrigPoly(tuple(obj))

    Vt = None
    if V is not None:
        if isinstance(V, (TrigPoly, int, float, dict)) or (
                dim == 1 and not isinstance(V[0], (list, tuple, dict, TrigPoly))):
            V = [V]
        Vt = tuple(poly(Vi) for Vi in V)
    lam_p = poly(lam)
    if delta is None or Delta is None:
        xs = _sample_x(dim, 1024 if dim == 1 else 1024)
        vals = lam_p(xs)
        delta = float(vals.min()) if delta is None else delta
        Delta = float(vals.max()) if Delta is None else Delta
    return LagrangianModel(family=family, dim=dim, W=poly(W), V=Vt, lam=lam_p,
                           coupling=coupling, kappa=float(kappa), delta=float(delta),
                           Delta=float(Delta))
