from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SingularDesignError

DEFAULT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x m, intercept included when requested) and outcome ``Y``."""

    X: np.ndarray
    Y: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError("X must be a 2-d matrix")
        n, m = X.shape
        if Y.size != n:
            raise DataError(f"X has {n} rows but Y has {Y.size} entries")
        if n < m:
            raise DataError(f"need at least as many rows as columns (n={n}, m={m})")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("X and Y must be finite")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(m))
        if len(names) != m:
            raise DataError(f"{len(names)} column names for {m} columns")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_arrays(cls, x, y, *, intercept: bool = True, names=None) -> Dataset:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if names is None:
            names = [f"x{j + 1}" for j in range(x.shape[1])]
        names = list(names)
        if intercept:
            x = np.column_stack([np.ones(x.shape[0]), x])
            names = ["(Intercept)"] + names
        return cls(x, np.asarray(y, dtype=float), tuple(names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> Dataset:
        return Dataset(self.X[rows], self.Y[rows], self.column_names)

    def with_outcome(self, y) -> Dataset:
        return Dataset(self.X, y, self.column_names)


def check_rank(X: np.ndarray, names=None, cond_limit: float = DEFAULT_COND_LIMIT) -> None:
    """Raise SingularDesignError when ``cond(X)`` exceeds ``cond_limit``.

    The error names the columns carrying weight in the near-null direction.
    """
    X = np.asarray(X, dtype=float)
    m = X.shape[1]
    if names is None:
        names = [f"x{j}" for j in range(m)]
    if X.shape[0] < m:
        raise SingularDesignError("fewer rows than columns", list(names))
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0:
        raise SingularDesignError("design matrix is identically zero", list(names))
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if cond > cond_limit:
        v = np.abs(vt[-1])
        bad = [names[j] for j in np.flatnonzero(v > 1e-3 * v.max())]
        raise SingularDesignError(
            f"design is rank deficient (condition number {cond:.3g} > {cond_limit:.3g}); "
            f"collinear columns: {', '.join(bad)}",
            bad,
        )


def round_covariates(data: Dataset, decimals: int) -> Dataset:
    """Round covariate values so float jitter does not split groups.

    Negative zeros are normalised so grouping by exact bits is well defined.
    """
    X = np.round(data.X, decimals) + 0.0
    return Dataset(X, data.Y, data.column_names)
