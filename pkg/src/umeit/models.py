"""Named conductivities and illuminations for configuration files.

Each model takes keyword parameters with defaults; unknown parameters are
rejected so that a typo in a config file never falls back silently.
"""
from __future__ import annotations

import math

import numpy as np

from .cgo import cgo_functions, smooth_bump
from .errors import PreconditionError
from .fields import ScalarField
from .geometry import Domain


def _constant(X, Y, value=1.0):
    return np.full(X.shape, float(value))


def _gaussian(X, Y, amp=0.3, x0=0.5, y0=0.5, width=0.1, base=1.0):
    return base + amp * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * width ** 2))


def _bump(X, Y, amp=0.1, x0=0.5, y0=0.0, radius=0.4, base=1.0):
    return base + amp * smooth_bump(X, Y, (x0, y0), radius)


def _trig(X, Y, amp=0.2, m1=1.0, m2=1.0, base=1.0):
    return base + amp * np.cos(m1 * np.pi * X) * np.cos(m2 * np.pi * Y)


def _exp_x1(X, Y, rate=1.0):
    return np.exp(rate * X)


def _angular_bump(X, Y, amp=0.2, r0=0.75, width=0.1, m=2.0, base=1.0):
    R, P = np.hypot(X, Y), np.arctan2(Y, X)
    return base + amp * np.cos(m * P) * np.exp(-((R - r0) / width) ** 2)


SIGMA_MODELS = {
    "constant": _constant,
    "gaussian": _gaussian,
    "bump": _bump,
    "trig": _trig,
    "exp_x1": _exp_x1,
    "angular_bump": _angular_bump,
}


def _params(fn):
    code = fn.__code__
    names = code.co_varnames[2:code.co_argcount]
    return dict(zip(names, fn.__defaults__ or ()))


def model_parameters(name, registry=None):
    """Parameter names and defaults of a registered model."""
    reg = SIGMA_MODELS if registry is None else registry
    if name not in reg:
        raise PreconditionError(f"unknown model {name!r}; choose from {sorted(reg)}")
    return _params(reg[name])


def _check(name, params, registry, what):
    allowed = model_parameters(name, registry)
    bad = sorted(set(params) - set(allowed))
    if bad:
        raise PreconditionError(f"{what} model {name!r} has no parameter(s) {bad}; allowed: {sorted(allowed)}")
    return {k: float(v) for k, v in params.items()}


def sigma_from_model(domain: Domain, name, **params) -> ScalarField:
    """Sample a registered conductivity on the domain's nodes (Cartesian coordinates)."""
    p = _check(name, params, SIGMA_MODELS, "sigma")
    X, Y = domain.grid.cartesian()
    return ScalarField(domain.grid, SIGMA_MODELS[name](X, Y, **p))


# ---------------------------------------------------------------- illuminations

def _plane(tilt=0.0):
    c, s = math.cos(tilt), math.sin(tilt)
    return lambda x, y: c * x + s * y


def _exp_decay(rate=1.0):
    return lambda x, y: np.exp(-rate * x)


def _cgo(k=4.0, part=0.0):
    v, w = cgo_functions(k)
    return v if part == 0.0 else w


def _radial(inner=1.0, outer=0.0):
    return ("radial", float(inner), float(outer))


ILLUMINATIONS = {"plane": _plane, "exp_decay": _exp_decay, "cgo": _cgo, "radial": _radial}


def illumination_parameters(name):
    if name not in ILLUMINATIONS:
        raise PreconditionError(f"unknown illumination {name!r}; choose from {sorted(ILLUMINATIONS)}")
    fn = ILLUMINATIONS[name]
    code = fn.__code__
    return dict(zip(code.co_varnames[:code.co_argcount], fn.__defaults__ or ()))


def illumination(domain: Domain, name, **params):
    """Boundary data: a callable ``f(x, y)`` or one value per boundary sample.

    ``radial`` sets ``inner`` on the inner circle and ``outer`` on the outer
    one (annulus only); ``cgo`` with ``part = 0`` is ``Im e^{rho.x}``, with
    ``part = 1`` its real part.
    """
    allowed = illumination_parameters(name)
    bad = sorted(set(params) - set(allowed))
    if bad:
        raise PreconditionError(f"illumination {name!r} has no parameter(s) {bad}; allowed: {sorted(allowed)}")
    out = ILLUMINATIONS[name](**{k: float(v) for k, v in params.items()})
    if isinstance(out, tuple):
        if domain.kind != "annulus":
            raise PreconditionError("radial illumination needs an annulus")
        _, inner, outer = out
        if inner == outer:
            raise PreconditionError("radial illumination needs different values on the two circles")
        return np.where(domain.boundary.component == 1, inner, outer)
    return out
