"""Backend-agnostic MILP description."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = float("inf")


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms or {})
        self.const = const

    @classmethod
    def var(cls, idx: int, coef: float = 1.0) -> "LinExpr":
        return cls({idx: coef})

    def copy(self) -> "LinExpr":
        return LinExpr(self.terms, self.const)

    def add(self, other, scale: float = 1.0) -> "LinExpr":
        """In-place ``self += scale * other``; ``other`` may be a number."""
        if isinstance(other, LinExpr):
            for k, c in other.terms.items():
                self.terms[k] = self.terms.get(k, 0.0) + scale * c
            self.const += scale * other.const
        else:
            self.const += scale * other
        return self

    def add_term(self, idx: int, coef: float) -> "LinExpr":
        self.terms[idx] = self.terms.get(idx, 0.0) + coef
        return self

    def __add__(self, other):
        return self.copy().add(other)

    def __radd__(self, other):
        return self.copy().add(other)

    def __sub__(self, other):
        return self.copy().add(other, -1.0)

    def __rsub__(self, other):
        return (-self).add(other)

    def __neg__(self):
        return LinExpr({k: -c for k, c in self.terms.items()}, -self.const)

    def __mul__(self, s: float):
        return LinExpr({k: s * c for k, c in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(c * x[k] for k, c in self.terms.items())


@dataclass
class ModelSpec:
    name: str = "model"
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    integer: list = field(default_factory=list)
    var_family: list = field(default_factory=list)
    families: dict = field(default_factory=dict)
    row_lo: list = field(default_factory=list)
    row_hi: list = field(default_factory=list)
    row_family: list = field(default_factory=list)
    obj_offset: float = 0.0
    meta: dict = field(default_factory=dict)
    _ri: list = field(default_factory=list)
    _ci: list = field(default_factory=list)
    _v: list = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.row_lo)

    def add_var(self, family: str, lb=0.0, ub=1.0, obj=0.0, integer=True) -> int:
        idx = len(self.lb)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        self.integer.append(bool(integer))
        self.var_family.append(family)
        self.families.setdefault(family, []).append(idx)
        return idx

    def add_row(self, expr: LinExpr, lo=-INF, hi=INF, family: str = "") -> int | None:
        """Add ``lo <= expr <= hi``; constants in ``expr`` move to the bounds."""
        terms = {k: c for k, c in expr.terms.items() if c != 0.0}
        lo -= expr.const
        hi -= expr.const
        if not terms and lo <= 1e-9 and hi >= -1e-9:
            return None
        # an empty but unsatisfiable row is kept so the backend reports infeasibility
        r = len(self.row_lo)
        for k, c in terms.items():
            self._ri.append(r)
            self._ci.append(k)
            self._v.append(c)
        self.row_lo.append(lo)
        self.row_hi.append(hi)
        self.row_family.append(family)
        return r

    def add_row_raw(self, cols, vals, lo=-INF, hi=INF, family: str = "") -> int:
        """Fast path: ``cols`` must be distinct variable indices."""
        r = len(self.row_lo)
        self._ri.extend([r] * len(cols))
        self._ci.extend(cols)
        self._v.extend(vals)
        self.row_lo.append(lo)
        self.row_hi.append(hi)
        self.row_family.append(family)
        return r

    def le(self, expr, rhs, family=""):
        return self.add_row(expr, -INF, rhs, family)

    def ge(self, expr, rhs, family=""):
        return self.add_row(expr, rhs, INF, family)

    def eq(self, expr, rhs, family=""):
        return self.add_row(expr, rhs, rhs, family)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.asarray(self._v, dtype=float), (np.asarray(self._ri, dtype=np.int64), np.asarray(self._ci, dtype=np.int64))),
            shape=(self.n_rows, self.n_vars),
        )

    def arrays(self):
        return (
            np.asarray(self.obj, dtype=float),
            np.asarray(self.lb, dtype=float),
            np.asarray(self.ub, dtype=float),
            np.asarray(self.integer, dtype=bool),
            np.asarray(self.row_lo, dtype=float),
            np.asarray(self.row_hi, dtype=float),
        )

    def objective_value(self, x) -> float:
        return float(np.dot(self.obj, x)) + self.obj_offset

    def violation(self, x, tol: float = 1e-6) -> list[str]:
        """Names of violated bounds/rows for a candidate vector (for self-checks)."""
        x = np.asarray(x, dtype=float)
        out = []
        c, lb, ub, integ, lo, hi = self.arrays()
        bad = np.flatnonzero((x < lb - tol) | (x > ub + tol))
        out += [f"bound:{self.var_family[i]}#{i}" for i in bad[:5]]
        frac = np.flatnonzero(integ & (np.abs(x - np.round(x)) > tol))
        out += [f"integrality:{self.var_family[i]}#{i}" for i in frac[:5]]
        if self.n_rows:
            ax = self.matrix() @ x
            rows = np.flatnonzero((ax < lo - tol) | (ax > hi + tol))
            out += [f"row:{self.row_family[r]}#{r}" for r in rows[:10]]
        return out

    def fix(self, values: dict[int, float]) -> "ModelSpec":
        """Copy with the given variables fixed."""
        m = ModelSpec(
            self.name,
            list(self.lb),
            list(self.ub),
            list(self.obj),
            list(self.integer),
            list(self.var_family),
            {k: list(v) for k, v in self.families.items()},
            list(self.row_lo),
            list(self.row_hi),
            list(self.row_family),
            self.obj_offset,
            dict(self.meta),
            list(self._ri),
            list(self._ci),
            list(self._v),
        )
        for i, v in values.items():
            m.lb[i] = m.ub[i] = float(v)
        return m

    def summary(self) -> dict:
        return {
            "vars": self.n_vars,
            "int_vars": int(sum(self.integer)),
            "rows": self.n_rows,
            "nonzeros": len(self._v),
        }
