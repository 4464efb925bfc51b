"""O'Sullivan penalised cubic splines in mixed-model form.

The cubic B-spline basis on ``Q`` equally spaced knots (boundary knots
included) carries the integrated squared second derivative penalty
``Omega``.  Its eigen-decomposition splits coefficient space into the linear
null space and ``Q`` penalised directions; scaling those directions by
``1/sqrt(eigenvalue)`` turns the penalty into an identity ridge, so spline
coefficients can take i.i.d. Normal priors.

The resulting columns are then made empirically orthogonal to ``[1, x]`` at
the training points.  Because the intercept and slope are in the model with
vague priors, this only reparameterises the fixed effects; it leaves the
function space unchanged and makes the fixed-design slope of the fitted curve
equal to the linear coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataError, InvalidParameterError

DEGREE = 3


@dataclass(frozen=True)
class BasisSpec:
    knots: np.ndarray          # Q knots including the two boundary knots
    boundary: tuple[float, float]
    t: np.ndarray              # full clamped knot vector
    transform: np.ndarray      # (Q, Q) map from B-spline values to penalised columns
    linear_coef: np.ndarray    # (2, Q) projection of raw columns on [1, x]
    Z: np.ndarray              # (n, Q) training design
    x: np.ndarray

    @property
    def Q(self) -> int:
        return self.Z.shape[1]

    def evaluate(self, x_new) -> np.ndarray:
        """Spline columns at new points; training points reproduce ``Z``."""
        x_new = np.asarray(x_new, dtype=float).ravel()
        if self.Q == 0:
            return np.empty((x_new.size, 0))
        raw = _bspline_design(x_new, self.t) @ self.transform
        return raw - np.column_stack([np.ones_like(x_new), x_new]) @ self.linear_coef

    def design(self, x_new=None) -> np.ndarray:
        """Full design ``[1, x, Z]``."""
        if x_new is None:
            x_new, Z = self.x, self.Z
        else:
            x_new = np.asarray(x_new, dtype=float).ravel()
            Z = self.evaluate(x_new)
        return np.column_stack([np.ones_like(x_new), x_new, Z])


def _bspline_design(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    nb = t.size - DEGREE - 1
    spl = BSpline(t, np.eye(nb), DEGREE, extrapolate=True)
    return spl(x)


def penalty_matrix(t: np.ndarray) -> np.ndarray:
    """Exact ``int B_j''(x) B_k''(x) dx`` over the knot range.

    Second derivatives of cubic B-splines are piecewise linear, so Simpson's
    rule on each knot interval is exact.
    """
    nb = t.size - DEGREE - 1
    d2 = BSpline(t, np.eye(nb), DEGREE).derivative(2)
    breaks = np.unique(t)
    left, right = breaks[:-1], breaks[1:]
    h = right - left
    mid = 0.5 * (left + right)
    # d2 is discontinuous at knots; nudge endpoints inside each interval
    eps = 1e-12 * (breaks[-1] - breaks[0])
    fl = d2(left + eps)
    fm = d2(mid)
    fr = d2(right - eps)
    w = h / 6.0
    return (np.einsum("i,ij,ik->jk", w, fl, fl)
            + 4.0 * np.einsum("i,ij,ik->jk", w, fm, fm)
            + np.einsum("i,ij,ik->jk", w, fr, fr))


def build_basis(x, Q: int = 20, bounds: tuple[float, float] | None = None) -> BasisSpec:
    """Penalised spline design for scalar covariate ``x`` with ``Q`` columns.

    ``bounds`` is the potential range of the covariate (defaults to the
    observed range); knots are spread uniformly over it.
    """
    x = np.asarray(x, dtype=float).ravel()
    Q = int(Q)
    if Q < 0 or Q == 1:
        raise InvalidParameterError("Q must be 0 or at least 2 (boundary knots count)")
    if not np.all(np.isfinite(x)):
        raise DataError("covariate must be finite")
    lo, hi = (float(x.min()), float(x.max())) if bounds is None else map(float, bounds)
    if not hi > lo or np.ptp(x) == 0:
        raise DataError("covariate has no spread; cannot place spline knots")
    if x.size < Q + 4:
        raise DataError(f"need at least Q + 4 = {Q + 4} observations, got {x.size}")
    if Q == 0:
        empty = np.empty((0, 0))
        return BasisSpec(np.empty(0), (lo, hi), np.empty(0), empty, np.empty((2, 0)),
                         np.empty((x.size, 0)), x)

    knots = np.linspace(lo, hi, Q)
    t = np.concatenate([[lo] * DEGREE, knots, [hi] * DEGREE])
    omega = penalty_matrix(t)
    evals, evecs = np.linalg.eigh(omega)
    order = np.argsort(evals)[::-1]
    # Q + 2 basis functions; the two smallest eigenvalues span the linear null space
    evals, evecs = evals[order][:Q], evecs[:, order][:, :Q]
    transform = evecs / np.sqrt(evals)[None, :]

    raw = _bspline_design(x, t) @ transform
    lin = np.column_stack([np.ones_like(x), x])
    linear_coef, *_ = np.linalg.lstsq(lin, raw, rcond=None)
    Z = raw - lin @ linear_coef
    return BasisSpec(knots, (lo, hi), t, transform, linear_coef, Z, x)
