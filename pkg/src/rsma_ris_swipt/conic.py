"""Small convex-program builder with a Clarabel backend.

Programs are stated over named real or complex variables. Complex variables
are realified (interleaved real/imaginary parts) when declared, so every
expression is an affine map of one real vector ``z``. Supported pieces:

* linear objective plus concave ``w * log2(1 + affine)`` terms (maximized),
* affine equalities and inequalities,
* convex quadratics ``||affine||^2 <= affine`` (second-order cone),
* ``log2(1 + affine) >= affine`` (exponential cone).

When ``SolverSettings.native_log`` is off (backends without exponential
cones), every ``log2(1 + y)`` is replaced by the concave minorant

    log2(1 + y0) + (1 - (1 + y0) / (1 + y)) / ln 2,

which is exact with matching slope at the anchor ``y0`` supplied with the
term and needs only a second-order cone. Anchored this way an SCA loop keeps
its monotone ascent.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Affine",
    "ConicProgram",
    "SolverSettings",
    "SolverResult",
    "ProgramError",
    "vdot",
    "hstack",
]

LN2 = math.log(2.0)


class ProgramError(ValueError):
    """Raised when a program fails structural validation."""


class Affine:
    """Vector-valued affine expression ``coef @ z + const``.

    ``coef`` may be complex; complex expressions arise from complex variables
    and are realified only when placed in a constraint.
    """

    __array_priority__ = 1000

    def __init__(self, coef, const):
        coef = np.atleast_2d(np.asarray(coef))
        const = np.atleast_1d(np.asarray(const))
        if coef.shape[0] != const.shape[0]:
            raise ProgramError("coefficient and constant lengths differ")
        self.coef = coef
        self.const = const

    @classmethod
    def constant(cls, value, width: int = 0) -> "Affine":
        value = np.atleast_1d(np.asarray(value))
        return cls(np.zeros((value.size, width), dtype=value.dtype), value)

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @property
    def width(self) -> int:
        return self.coef.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.coef) or np.iscomplexobj(self.const)

    def padded(self, width: int) -> np.ndarray:
        if self.width == width:
            return self.coef
        if self.width > width:
            raise ProgramError("expression references undeclared variables")
        out = np.zeros((self.size, width), dtype=self.coef.dtype)
        out[:, : self.width] = self.coef
        return out

    def _coerce(self, other) -> "Affine":
        if isinstance(other, Affine):
            return other
        value = np.broadcast_to(np.asarray(other), (self.size,))
        return Affine.constant(value, self.width)

    def __add__(self, other):
        other = self._coerce(other)
        if other.size != self.size:
            if other.size == 1:
                other = Affine(np.repeat(other.coef, self.size, 0), np.repeat(other.const, self.size))
            elif self.size == 1:
                return other + self
            else:
                raise ProgramError("size mismatch in expression sum")
        width = max(self.width, other.width)
        return Affine(self.padded(width) + other.padded(width), self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scale):
        scale = np.asarray(scale)
        if scale.ndim == 0:
            return Affine(self.coef * scale, self.const * scale)
        return Affine(self.coef * scale[:, None], self.const * scale)

    __rmul__ = __mul__

    def __truediv__(self, scale):
        return self * (1.0 / np.asarray(scale))

    def __rmatmul__(self, matrix):
        matrix = np.atleast_2d(np.asarray(matrix))
        return Affine(matrix @ self.coef, matrix @ self.const)

    def __getitem__(self, index):
        idx = np.arange(self.size)[index]
        idx = np.atleast_1d(idx)
        return Affine(self.coef[idx], self.const[idx])

    def __len__(self):
        return self.size

    @property
    def real(self) -> "Affine":
        return Affine(self.coef.real, self.const.real)

    @property
    def imag(self) -> "Affine":
        return Affine(self.coef.imag, self.const.imag)

    def conj(self) -> "Affine":
        return Affine(self.coef.conj(), self.const.conj())

    def sum(self) -> "Affine":
        return Affine(self.coef.sum(axis=0, keepdims=True), self.const.sum(keepdims=True))

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.padded(z.size) @ z + self.const

    def realified(self) -> "Affine":
        """Stack real and imaginary parts so that squared norms are preserved."""
        if not self.is_complex:
            return self
        return Affine(np.vstack([self.coef.real, self.coef.imag]), np.concatenate([self.const.real, self.const.imag]))


def vdot(h, expr: Affine) -> Affine:
    """``h^H expr`` for a constant vector ``h``."""
    return np.conj(np.asarray(h)).reshape(1, -1) @ expr


def hstack(exprs) -> Affine:
    exprs = list(exprs)
    width = max(e.width for e in exprs)
    return Affine(np.vstack([e.padded(width) for e in exprs]), np.concatenate([e.const for e in exprs]))


@dataclass
class SolverSettings:
    max_iter: int = 200
    feasibility_tol: float = 1e-7
    gap_tol: float = 1e-9
    native_log: bool = True


@dataclass
class SolverResult:
    status: str
    objective_value: float
    assignment: dict
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.assignment[name]


@dataclass
class _Variable:
    name: str
    size: int
    is_complex: bool
    offset: int

    @property
    def width(self) -> int:
        return self.size * (2 if self.is_complex else 1)


@dataclass
class _Constraint:
    kind: str  # 'eq', 'ge', 'quad', 'log'
    name: str
    expr: Affine            # eq/ge: expr (==|>=) 0 ; quad: vector ; log: argument
    rhs: Optional[Affine] = None
    anchor: Optional[float] = None


class ConicProgram:
    """A convex maximization program assembled term by term."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: dict[str, _Variable] = {}
        self.width = 0
        self.objective = Affine.constant(0.0)
        self.sense = "max"
        self.log_terms: list[tuple[float, Affine, Optional[float], str]] = []
        self.constraints: list[_Constraint] = []

    # -- declaration -----------------------------------------------------
    def variable(self, name: str, size: int = 1, is_complex: bool = False) -> Affine:
        if name in self.variables:
            raise ProgramError(f"variable {name!r} declared twice")
        var = _Variable(name, int(size), bool(is_complex), self.width)
        self.variables[name] = var
        self.width += var.width
        coef = np.zeros((var.size, self.width), dtype=complex if is_complex else float)
        rows = np.arange(var.size)
        if is_complex:
            coef[rows, var.offset + 2 * rows] = 1.0
            coef[rows, var.offset + 2 * rows + 1] = 1.0j
        else:
            coef[rows, var.offset + rows] = 1.0
        return Affine(coef, np.zeros(var.size, dtype=coef.dtype))

    def maximize(self, expr) -> None:
        expr = expr if isinstance(expr, Affine) else Affine.constant(float(expr))
        if expr.size != 1:
            raise ProgramError("objective must be scalar")
        self.objective = expr.real
        self.sense = "max"

    def minimize(self, expr) -> None:
        """Minimize ``expr``; stored internally as maximizing its negation."""
        if self.log_terms:
            raise ProgramError("log terms are only allowed in maximization")
        self.maximize(-expr if isinstance(expr, Affine) else -float(expr))
        self.sense = "min"

    def add_log2_objective(self, weight: float, argument: Affine, anchor: float = None, name: str = None) -> None:
        """Add ``weight * log2(1 + argument)`` to the maximized objective."""
        if self.sense != "max":
            raise ProgramError("log terms are only allowed in maximization")
        if weight < 0:
            raise ProgramError("negative log weight would make the objective nonconcave")
        self.log_terms.append((float(weight), self._scalar(argument), anchor, name or f"log{len(self.log_terms)}"))

    def add_eq(self, lhs, rhs=0.0, name: str = None) -> None:
        expr = self._real(lhs - rhs if isinstance(lhs, Affine) else -(rhs - lhs))
        self.constraints.append(_Constraint("eq", self._name(name), expr))

    def add_ge(self, lhs, rhs=0.0, name: str = None) -> None:
        expr = lhs - rhs if isinstance(lhs, Affine) else -(rhs - lhs)
        self.constraints.append(_Constraint("ge", self._name(name), self._real(expr)))

    def add_le(self, lhs, rhs=0.0, name: str = None) -> None:
        expr = rhs - lhs if isinstance(rhs, Affine) else -(lhs - rhs)
        self.constraints.append(_Constraint("ge", self._name(name), self._real(expr)))

    def add_quad_le(self, vector: Affine, rhs, name: str = None) -> None:
        """``||vector||^2 <= rhs``; complex vectors are realified."""
        rhs = rhs if isinstance(rhs, Affine) else Affine.constant(float(rhs))
        self.constraints.append(_Constraint("quad", self._name(name), vector.realified(), self._scalar(rhs)))

    def add_log2_ge(self, argument: Affine, rhs, anchor: float = None, name: str = None) -> None:
        """``log2(1 + argument) >= rhs``."""
        rhs = rhs if isinstance(rhs, Affine) else Affine.constant(float(rhs))
        self.constraints.append(
            _Constraint("log", self._name(name), self._scalar(argument), self._scalar(rhs), anchor))

    def _name(self, name):
        return name or f"c{len(self.constraints)}"

    @staticmethod
    def _scalar(expr: Affine) -> Affine:
        if expr.size != 1:
            raise ProgramError("expected a scalar expression")
        return ConicProgram._real(expr)

    @staticmethod
    def _real(expr: Affine) -> Affine:
        if expr.is_complex:
            if np.any(np.abs(expr.coef.imag) > 0) or np.any(np.abs(expr.const.imag) > 0):
                raise ProgramError("real-valued expression expected; take .real explicitly")
            return expr.real
        return expr

    # -- checking --------------------------------------------------------
    def validate(self) -> None:
        names = set()
        for con in self.constraints:
            if con.name in names:
                raise ProgramError(f"duplicate constraint name {con.name!r}")
            names.add(con.name)
            for part in (con.expr, con.rhs):
                if part is None:
                    continue
                part.padded(self.width)
                if not (np.all(np.isfinite(part.coef)) and np.all(np.isfinite(part.const))):
                    raise ProgramError(f"non-finite data in constraint {con.name!r}")
        self.objective.padded(self.width)

    def unpack(self, z) -> dict:
        z = np.asarray(z, dtype=float)
        out = {}
        for var in self.variables.values():
            chunk = z[var.offset: var.offset + var.width]
            out[var.name] = chunk[0::2] + 1j * chunk[1::2] if var.is_complex else chunk.copy()
        return out

    def pack(self, assignment: dict) -> np.ndarray:
        z = np.zeros(self.width)
        for var in self.variables.values():
            value = np.asarray(assignment[var.name]).reshape(-1)
            if var.is_complex:
                z[var.offset: var.offset + var.width: 2] = value.real
                z[var.offset + 1: var.offset + var.width: 2] = value.imag
            else:
                z[var.offset: var.offset + var.width] = value.real
        return z

    def objective_value(self, z) -> float:
        """Objective at ``z`` in the user's sense (exact logs)."""
        z = np.asarray(z, dtype=float)
        total = float(self.objective.value(z)[0])
        for weight, arg, _, _ in self.log_terms:
            total += weight * math.log2(max(1.0 + float(arg.value(z)[0]), 1e-300))
        return -total if self.sense == "min" else total

    def residuals(self, z) -> dict:
        """Constraint violations (0 when satisfied), each scaled to be relative.

        This evaluator works from the stored expressions only and is independent
        of the cone canonicalization used by :meth:`solve`.
        """
        z = np.asarray(z, dtype=float)
        out = {}
        for con in self.constraints:
            if con.kind == "eq":
                v = con.expr.value(z)
                out[con.name] = float(np.max(np.abs(v) / (1.0 + np.abs(con.expr.const)))) if v.size else 0.0
            elif con.kind == "ge":
                v = con.expr.value(z)
                out[con.name] = float(np.max(np.maximum(-v, 0.0) / (1.0 + np.abs(con.expr.const)))) if v.size else 0.0
            elif con.kind == "quad":
                lhs = float(np.sum(con.expr.value(z) ** 2))
                rhs = float(con.rhs.value(z)[0])
                out[con.name] = max(lhs - rhs, 0.0) / (1.0 + abs(rhs))
            else:
                arg = float(con.expr.value(z)[0])
                rhs = float(con.rhs.value(z)[0])
                lhs = math.log2(1.0 + arg) if arg > -1.0 else -math.inf
                out[con.name] = max(rhs - lhs, 0.0) / (1.0 + abs(rhs))
        return out

    # -- text form -------------------------------------------------------
    def dump(self) -> str:
        """Deterministic plain-text rendering for debugging and diffing."""
        fmt = lambda a: " ".join(f"{x:.17g}" for x in np.asarray(a, dtype=float).ravel())  # noqa: E731
        lines = [f"program {self.name}", f"width {self.width}"]
        for var in sorted(self.variables.values(), key=lambda v: v.name):
            kind = "complex" if var.is_complex else "real"
            lines.append(f"var {var.name} {kind} size={var.size} offset={var.offset}")
        lines.append(f"objective {self.sense} (stored as max) coef [{fmt(self.objective.padded(self.width))}] const {fmt(self.objective.const)}")
        for weight, arg, anchor, name in self.log_terms:
            lines.append(f"logterm {name} weight {weight:.17g} anchor {anchor} "
                         f"coef [{fmt(arg.padded(self.width))}] const {fmt(arg.const)}")
        for con in self.constraints:
            lines.append(f"{con.kind} {con.name} rows={con.expr.size}")
            lines.append(f"  coef [{fmt(con.expr.padded(self.width))}] const [{fmt(con.expr.const)}]")
            if con.rhs is not None:
                lines.append(f"  rhs coef [{fmt(con.rhs.padded(self.width))}] const [{fmt(con.rhs.const)}]")
        return "\n".join(lines) + "\n"

    # -- solving ---------------------------------------------------------
    def solve(self, settings: SolverSettings = None) -> SolverResult:
        import clarabel

        settings = settings or SolverSettings()
        self.validate()
        n = self.width
        native = settings.native_log
        log_cons = [c for c in self.constraints if c.kind == "log"]
        # one auxiliary per log term: hypograph (native) or reciprocal (minorant)
        n_aux = len(self.log_terms) + (0 if native else len(log_cons))
        nx = n + n_aux

        def widen(mat):
            out = np.zeros((mat.shape[0], nx))
            out[:, :n] = mat
            return out

        def unit(i):
            row = np.zeros((1, nx))
            row[0, i] = 1.0
            return row

        q = np.zeros(nx)
        q[:n] = -self.objective.padded(n)[0]
        blocks_eq, blocks_ge, socs, exps = [], [], [], []

        def reciprocal(arg, aux):
            # aux >= 1 / (1 + arg)  <=>  ||(2, 1 + arg - aux)|| <= 1 + arg + aux
            y_a, y_b = widen(arg.padded(n)), arg.const
            A = -np.vstack([y_a + unit(aux), np.zeros((1, nx)), y_a - unit(aux)])
            b = np.concatenate([1.0 + y_b, [2.0], 1.0 + y_b])
            socs.append((A, b))

        for i, (weight, arg, anchor, name) in enumerate(self.log_terms):
            aux = n + i
            if native:
                q[aux] = -weight / LN2
                A = np.vstack([-unit(aux), np.zeros((1, nx)), -widen(arg.padded(n))])
                b = np.concatenate([[0.0, 1.0], 1.0 + arg.const])
                exps.append((A, b))
            else:
                y0 = _anchor(anchor, name)
                q[aux] = weight * (1.0 + y0) / LN2
                reciprocal(arg, aux)

        next_aux = n + len(self.log_terms)
        for con in self.constraints:
            if con.kind == "eq":
                blocks_eq.append((widen(con.expr.padded(n)), -con.expr.const))
            elif con.kind == "ge":
                blocks_ge.append((-widen(con.expr.padded(n)), con.expr.const))
            elif con.kind == "quad":
                r_a, r_b = widen(con.rhs.padded(n)), con.rhs.const
                u_a, u_b = widen(con.expr.padded(n)), con.expr.const
                A = -np.vstack([r_a, 2.0 * u_a, r_a])
                b = np.concatenate([r_b + 1.0, 2.0 * u_b, r_b - 1.0])
                socs.append((A, b))
            elif native:
                arg_a, arg_b = widen(con.expr.padded(n)), con.expr.const
                rhs_a, rhs_b = widen(con.rhs.padded(n)), con.rhs.const
                A = -np.vstack([LN2 * rhs_a, np.zeros((1, nx)), arg_a])
                b = np.concatenate([LN2 * rhs_b, [1.0], 1.0 + arg_b])
                exps.append((A, b))
            else:
                aux = next_aux
                next_aux += 1
                y0 = _anchor(con.anchor, con.name)
                reciprocal(con.expr, aux)
                # log2(1+y0) + (1 - (1+y0) aux)/ln2 - rhs >= 0
                rhs_a, rhs_b = widen(con.rhs.padded(n)), con.rhs.const
                lin = -(1.0 + y0) / LN2 * unit(aux) - rhs_a
                blocks_ge.append((-lin, math.log2(1.0 + y0) + 1.0 / LN2 - rhs_b))

        rows, rhs, cones = [], [], []
        if blocks_eq:
            A = np.vstack([a for a, _ in blocks_eq])
            rows.append(A)
            rhs.append(np.concatenate([b for _, b in blocks_eq]))
            cones.append(clarabel.ZeroConeT(A.shape[0]))
        if blocks_ge:
            A = np.vstack([a for a, _ in blocks_ge])
            rows.append(A)
            rhs.append(np.concatenate([b for _, b in blocks_ge]))
            cones.append(clarabel.NonnegativeConeT(A.shape[0]))
        for A, b in socs:
            rows.append(A)
            rhs.append(b)
            cones.append(clarabel.SecondOrderConeT(A.shape[0]))
        for A, b in exps:
            rows.append(A)
            rhs.append(b)
            cones.append(clarabel.ExponentialConeT())

        if rows:
            A = sp.csc_matrix(np.vstack(rows))
            b = np.concatenate(rhs).astype(float)
        else:
            A, b = sp.csc_matrix((0, nx)), np.zeros(0)
        opts = clarabel.DefaultSettings()
        opts.verbose = False
        opts.max_iter = int(settings.max_iter)
        opts.tol_feas = float(settings.feasibility_tol) * 0.1
        opts.tol_gap_abs = float(settings.gap_tol)
        opts.tol_gap_rel = float(settings.gap_tol)

        t0 = time.perf_counter()
        raw = clarabel.DefaultSolver(sp.csc_matrix((nx, nx)), q, A, b, cones, opts).solve()
        elapsed = time.perf_counter() - t0
        backend = str(raw.status)
        z = np.asarray(raw.x, dtype=float)[:n]
        finite = bool(np.all(np.isfinite(z)))
        residual = max(self.residuals(z).values(), default=0.0) if finite else math.inf

        if backend in ("Solved", "AlmostSolved"):
            status = "optimal" if residual <= settings.feasibility_tol else "numerical_failure"
        elif backend in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            status = "infeasible"
        elif backend == "MaxIterations":
            status = "iteration_limit"
        else:
            status = "numerical_failure"
        value = self.objective_value(z) if finite else math.nan
        stats = {"iterations": int(raw.iterations), "primal_residual": residual,
                 "solve_time": elapsed, "backend_status": backend}
        return SolverResult(status, value, self.unpack(z), stats)


def _anchor(anchor, name) -> float:
    if anchor is None:
        raise ProgramError(f"log term {name!r} needs an anchor when native logs are disabled")
    return max(float(anchor), 0.0)
