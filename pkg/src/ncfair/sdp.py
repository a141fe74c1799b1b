"""Block-structured semidefinite programs over a shared decision vector.

A problem asks to minimize a linear functional of y subject to affine
equalities and to every block matrix S_b(y) = C_b + sum_k y_k A_bk being
positive semidefinite.  Solving goes through a first-order operator-splitting
conic solver; the returned point is re-audited here (equality residuals and
block eigenvalues) before a status of ``optimal`` is reported, so the status
never relies on the backend's own bookkeeping alone.

The sparse text interchange format mirrors the usual SDPA layout: header
lines for variable count, block count, block dimensions (negative meaning
diagonal) and objective row, then one ``matno blkno i j value`` line per
nonzero.  Equality rows travel as a trailing pair of mirrored diagonal slack
blocks and are folded back into equalities on import.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse
import scs

__all__ = [
    "SolverConfig",
    "SDPBlock",
    "SDPProblem",
    "SDPSolution",
    "SDPAParseError",
    "solve",
    "export_sparse_sdpa",
    "import_sparse_sdpa",
    "STATUSES",
]

STATUS_OPTIMAL = "optimal"
STATUS_INACCURATE = "inaccurate"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration_limit"
STATUSES = (
    STATUS_OPTIMAL,
    STATUS_INACCURATE,
    STATUS_INFEASIBLE,
    STATUS_UNBOUNDED,
    STATUS_ITERATION_LIMIT,
)


class SDPAParseError(ValueError):
    """Malformed sparse SDP file; message carries the 1-based line number."""


@dataclass
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 50000
    scaling: bool = True

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")


class SDPBlock:
    """One symmetric block, entrywise affine in the decision vector.

    entry(i, j) = constant(i, j) + sum_k coeff(i, j, k) * y_k.  Only the
    upper triangle is stored; (i, j) and (j, i) refer to the same slot.
    Diagonal blocks accept diagonal entries only and constrain them to be
    non-negative instead of imposing semidefiniteness on a dense matrix.
    """

    __slots__ = ("dim", "diagonal", "_constant", "_linear")

    def __init__(self, dim: int, diagonal: bool = False):
        if not isinstance(dim, int) or dim < 1:
            raise ValueError(f"block dimension must be a positive integer, got {dim!r}")
        self.dim = dim
        self.diagonal = bool(diagonal)
        self._constant: dict[tuple[int, int], float] = {}
        self._linear: dict[tuple[int, int], dict[int, float]] = {}

    def _key(self, i: int, j: int) -> tuple[int, int]:
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise ValueError(f"entry ({i}, {j}) outside block of dimension {self.dim}")
        if self.diagonal and i != j:
            raise ValueError(f"diagonal block admits diagonal entries only, got ({i}, {j})")
        return (i, j) if i <= j else (j, i)

    def set_constant(self, i: int, j: int, value: float) -> None:
        key = self._key(i, j)
        value = float(value)
        if value == 0.0:
            self._constant.pop(key, None)
        else:
            self._constant[key] = value

    def add_linear(self, i: int, j: int, var: int, coeff: float) -> None:
        key = self._key(i, j)
        slot = self._linear.setdefault(key, {})
        total = slot.get(var, 0.0) + float(coeff)
        if total == 0.0:
            slot.pop(var, None)
            if not slot:
                del self._linear[key]
        else:
            slot[var] = total

    def constant_entries(self) -> Iterator[tuple[int, int, float]]:
        for (i, j) in sorted(self._constant):
            yield i, j, self._constant[(i, j)]

    def linear_entries(self) -> Iterator[tuple[int, int, int, float]]:
        for (i, j) in sorted(self._linear):
            slot = self._linear[(i, j)]
            for var in sorted(slot):
                yield i, j, var, slot[var]

    def variables(self) -> set[int]:
        out: set[int] = set()
        for slot in self._linear.values():
            out.update(slot)
        return out

    def materialize(self, y: Sequence[float]) -> np.ndarray:
        """Numeric block at the point y (full symmetric matrix)."""
        mat = np.zeros((self.dim, self.dim))
        for i, j, value in self.constant_entries():
            mat[i, j] += value
            if i != j:
                mat[j, i] += value
        for i, j, var, coeff in self.linear_entries():
            contrib = coeff * y[var]
            mat[i, j] += contrib
            if i != j:
                mat[j, i] += contrib
        return mat

    def __eq__(self, other) -> bool:
        if not isinstance(other, SDPBlock):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.diagonal == other.diagonal
            and self._constant == other._constant
            and self._linear == other._linear
        )

    def __repr__(self) -> str:
        kind = "diag" if self.diagonal else "psd"
        return f"SDPBlock({kind} {self.dim}x{self.dim}, {len(self._constant)} const, {len(self._linear)} affine entries)"


@dataclass
class SDPProblem:
    """minimize sum_k objective[k] * y_k over the feasible y."""

    variable_names: list[str]
    objective: dict[int, float]
    blocks: list[SDPBlock] = field(default_factory=list)
    equality_coeffs: list[dict[int, float]] = field(default_factory=list)
    equality_rhs: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = len(self.variable_names)
        if n == 0:
            raise ValueError("problem needs at least one decision variable")
        if len(set(self.variable_names)) != n:
            raise ValueError("variable names must be unique")
        if len(self.equality_coeffs) != len(self.equality_rhs):
            raise ValueError("equality coefficient rows and right-hand sides differ in length")
        self.objective = {k: float(v) for k, v in self.objective.items() if float(v) != 0.0}
        self.equality_coeffs = [
            {k: float(v) for k, v in row.items() if float(v) != 0.0} for row in self.equality_coeffs
        ]
        self.equality_rhs = [float(v) for v in self.equality_rhs]
        for var in self.objective:
            self._check_var(var)
        for row in self.equality_coeffs:
            for var in row:
                self._check_var(var)
        for block in self.blocks:
            for var in block.variables():
                self._check_var(var)

    def _check_var(self, var: int) -> None:
        if not isinstance(var, int) or not 0 <= var < len(self.variable_names):
            raise ValueError(f"variable index {var!r} outside range of {len(self.variable_names)} variables")

    @property
    def num_variables(self) -> int:
        return len(self.variable_names)

    def equivalent(self, other: "SDPProblem") -> bool:
        """Structural equality; variable names are ignored (the sparse text
        format does not carry them)."""
        return (
            self.num_variables == other.num_variables
            and self.objective == other.objective
            and self.blocks == other.blocks
            and self.equality_coeffs == other.equality_coeffs
            and self.equality_rhs == other.equality_rhs
        )


@dataclass
class SDPSolution:
    values: np.ndarray
    objective_value: float
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    wall_time: float

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective_value": self.objective_value,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
        }


def _svec_rows(block: SDPBlock, n_vars: int):
    """Rows of the scaled-vectorization map for one PSD block.

    Lower-triangle column-major order with off-diagonal entries scaled by
    sqrt(2), matching the conic backend's semidefinite cone convention.
    Returns (row count, b entries, A triples) with A holding (row, var, coeff)
    for the constraint A y + s = b, s in the PSD cone, i.e. A = -svec(A_k).
    """
    d = block.dim
    pos = {}
    row = 0
    for j in range(d):
        for i in range(j, d):
            pos[(j, i)] = row  # stored key has i <= j, svec walks i >= j
            row += 1
    scale = np.sqrt(2.0)
    b_entries = []
    for i, j, value in block.constant_entries():
        factor = 1.0 if i == j else scale
        b_entries.append((pos[(i, j)], factor * value))
    a_triples = []
    for i, j, var, coeff in block.linear_entries():
        factor = 1.0 if i == j else scale
        a_triples.append((pos[(i, j)], var, -factor * coeff))
    return row, b_entries, a_triples


def _audit(problem: SDPProblem, y: np.ndarray, tolerance: float) -> tuple[float, bool]:
    """Relative primal violation of the candidate point, judged against the
    configured tolerance.  Equalities use the infinity norm; each block uses
    its smallest eigenvalue against -tol * (1 + largest eigenvalue)."""
    worst = 0.0
    ok = True
    if problem.equality_rhs:
        rhs = np.asarray(problem.equality_rhs)
        lhs = np.array([sum(c * y[k] for k, c in row.items()) for row in problem.equality_coeffs])
        denom = 1.0 + float(np.max(np.abs(rhs))) if rhs.size else 1.0
        rel = float(np.max(np.abs(lhs - rhs))) / denom
        worst = max(worst, rel)
        ok = ok and rel <= tolerance
    for block in problem.blocks:
        mat = block.materialize(y)
        if block.diagonal:
            diag = np.diag(mat)
            lo, hi = float(np.min(diag)), float(np.max(diag))
        else:
            eigs = np.linalg.eigvalsh(mat)
            lo, hi = float(eigs[0]), float(eigs[-1])
        denom = 1.0 + max(hi, 0.0)
        rel = max(0.0, -lo) / denom
        worst = max(worst, rel)
        ok = ok and rel <= tolerance
    return worst, ok


def solve(problem: SDPProblem, config: SolverConfig | None = None) -> SDPSolution:
    """Solve the block SDP.  Infeasibility, unboundedness and iteration
    exhaustion come back as statuses, not exceptions."""
    config = config or SolverConfig()
    if not problem.blocks and not problem.equality_rhs:
        raise ValueError("problem has no blocks and no equalities; nothing to solve")

    n = problem.num_variables
    rows_a: list[tuple[int, int, float]] = []
    rows_b: list[tuple[int, float]] = []
    offset = 0

    n_zero = len(problem.equality_rhs)
    for e, row in enumerate(problem.equality_coeffs):
        for var in sorted(row):
            rows_a.append((offset + e, var, row[var]))
        if problem.equality_rhs[e] != 0.0:
            rows_b.append((offset + e, problem.equality_rhs[e]))
    offset += n_zero

    # non-negative cone takes every diagonal block's diagonal
    n_pos = 0
    for block in problem.blocks:
        if not block.diagonal:
            continue
        for i, j, value in block.constant_entries():
            rows_b.append((offset + i, value))
        for i, j, var, coeff in block.linear_entries():
            rows_a.append((offset + i, var, -coeff))
        offset += block.dim
        n_pos += block.dim

    psd_dims = []
    for block in problem.blocks:
        if block.diagonal:
            continue
        count, b_entries, a_triples = _svec_rows(block, n)
        for r, value in b_entries:
            rows_b.append((offset + r, value))
        for r, var, coeff in a_triples:
            rows_a.append((offset + r, var, coeff))
        offset += count
        psd_dims.append(block.dim)

    m_rows = offset
    data_a = scipy.sparse.csc_matrix(
        (
            [v for (_, _, v) in rows_a],
            ([r for (r, _, _) in rows_a], [k for (_, k, _) in rows_a]),
        ),
        shape=(m_rows, n),
    )
    vec_b = np.zeros(m_rows)
    for r, value in rows_b:
        vec_b[r] += value
    vec_c = np.zeros(n)
    for var, coeff in problem.objective.items():
        vec_c[var] += coeff

    cone: dict = {}
    if n_zero:
        cone["z"] = n_zero
    if n_pos:
        cone["l"] = n_pos
    if psd_dims:
        cone["s"] = psd_dims

    # the backend is asked for a tighter absolute eps than we promise,
    # leaving room for the independent audit below to pass at the stated
    # tolerance; relative stopping is disabled because problem norms (the
    # ball constant in particular) would dilute it past the audit
    eps = config.tolerance / 10.0
    start = time.perf_counter()
    result = scs.solve(
        {"A": data_a, "b": vec_b, "c": vec_c},
        cone,
        verbose=False,
        eps_abs=eps,
        eps_rel=0.0,
        max_iters=config.max_iterations,
        normalize=config.scaling,
    )
    wall = time.perf_counter() - start

    info = result["info"]
    status_val = int(info["status_val"])
    iterations = int(info["iter"])
    y = np.asarray(result["x"], dtype=float)

    if status_val == -2 or status_val == -6:
        status = STATUS_INFEASIBLE
    elif status_val == -1 or status_val == -7:
        status = STATUS_UNBOUNDED
    elif status_val in (1, 2):
        if status_val == 2 and iterations >= config.max_iterations:
            status = STATUS_ITERATION_LIMIT
        elif status_val == 2:
            status = STATUS_INACCURATE
        else:
            status = STATUS_OPTIMAL
    else:
        status = STATUS_INACCURATE

    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
        return SDPSolution(
            values=y,
            objective_value=float("nan"),
            status=status,
            primal_residual=float("inf"),
            dual_residual=float("inf"),
            gap=float("inf"),
            iterations=iterations,
            wall_time=wall,
        )

    primal_residual, audited = _audit(problem, y, config.tolerance)
    if status == STATUS_OPTIMAL and not audited:
        status = STATUS_INACCURATE
    pobj = float(vec_c @ y)
    dual_residual = float(info.get("res_dual", float("nan")))
    gap = abs(float(info.get("gap", float("nan")))) / (1.0 + abs(pobj))
    return SDPSolution(
        values=y,
        objective_value=pobj,
        status=status,
        primal_residual=primal_residual,
        dual_residual=dual_residual,
        gap=gap,
        iterations=iterations,
        wall_time=wall,
    )


# -- sparse text interchange -------------------------------------------


def _format(value: float) -> str:
    return "%.17g" % value


def export_sparse_sdpa(problem: SDPProblem, path) -> None:
    """Write the problem in sparse SDPA text form.

    Semidefinite blocks are written as-is; equality rows become a trailing
    pair of diagonal blocks holding the slack and its negation, which keeps
    the file within the plain inequality-form grammar.
    """
    if not problem.blocks:
        raise ValueError("cannot export a problem with no blocks")
    m = problem.num_variables
    n_eq = len(problem.equality_rhs)

    dims = [(-block.dim if block.diagonal else block.dim) for block in problem.blocks]
    if n_eq:
        dims.extend([-n_eq, -n_eq])

    # matno 0 holds F0 = -constant; matno k holds the coefficient of y_k
    entries: dict[int, list[tuple[int, int, int, float]]] = {k: [] for k in range(m + 1)}
    for b, block in enumerate(problem.blocks, start=1):
        for i, j, value in block.constant_entries():
            entries[0].append((b, i + 1, j + 1, -value))
        for i, j, var, coeff in block.linear_entries():
            entries[var + 1].append((b, i + 1, j + 1, coeff))
    if n_eq:
        plus, minus = len(problem.blocks) + 1, len(problem.blocks) + 2
        for e, row in enumerate(problem.equality_coeffs):
            rhs = problem.equality_rhs[e]
            if rhs != 0.0:
                entries[0].append((plus, e + 1, e + 1, rhs))
                entries[0].append((minus, e + 1, e + 1, -rhs))
            for var in sorted(row):
                entries[var + 1].append((plus, e + 1, e + 1, row[var]))
                entries[var + 1].append((minus, e + 1, e + 1, -row[var]))

    lines = [str(m), str(len(dims)), " ".join(str(d) for d in dims)]
    lines.append(" ".join(_format(problem.objective.get(k, 0.0)) for k in range(m)))
    for matno in range(m + 1):
        for blkno, i, j, value in sorted(entries[matno]):
            if value != 0.0:
                lines.append(f"{matno} {blkno} {i} {j} {_format(value)}")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def _parse_error(lineno: int, message: str) -> SDPAParseError:
    return SDPAParseError(f"line {lineno}: {message}")


def import_sparse_sdpa(path) -> SDPProblem:
    """Read a sparse SDPA text file back into an :class:`SDPProblem`.

    A trailing pair of exactly mirrored diagonal blocks is recognised as the
    equality encoding used by :func:`export_sparse_sdpa` and folded back into
    equality rows.  Variable names are synthesised as y1..ym.
    """
    with open(path) as handle:
        raw = handle.read().splitlines()

    lines: list[tuple[int, str]] = []
    for lineno, text in enumerate(raw, start=1):
        stripped = text.strip()
        if not stripped and not lines:
            continue  # leading blank lines
        if stripped.startswith("*") or stripped.startswith('"'):
            if lines:
                raise _parse_error(lineno, "comment lines are only allowed before the header")
            continue
        lines.append((lineno, stripped))

    if len(lines) < 4:
        raise SDPAParseError("file ends before the four header lines")

    def parse_int(token: str, lineno: int, what: str) -> int:
        try:
            return int(token)
        except ValueError:
            raise _parse_error(lineno, f"expected integer {what}, got {token!r}") from None

    def parse_float(token: str, lineno: int, what: str) -> float:
        try:
            return float(token)
        except ValueError:
            raise _parse_error(lineno, f"expected number {what}, got {token!r}") from None

    lineno, text = lines[0]
    tokens = text.split()
    if len(tokens) != 1:
        raise _parse_error(lineno, "expected a single variable count")
    m = parse_int(tokens[0], lineno, "variable count")
    if m < 1:
        raise _parse_error(lineno, f"variable count must be positive, got {m}")

    lineno, text = lines[1]
    tokens = text.split()
    if len(tokens) != 1:
        raise _parse_error(lineno, "expected a single block count")
    n_blocks = parse_int(tokens[0], lineno, "block count")
    if n_blocks < 1:
        raise _parse_error(lineno, f"block count must be positive, got {n_blocks}")

    lineno, text = lines[2]
    tokens = text.split()
    if len(tokens) != n_blocks:
        raise _parse_error(lineno, f"expected {n_blocks} block dimensions, got {len(tokens)}")
    dims = [parse_int(tok, lineno, "block dimension") for tok in tokens]
    for d in dims:
        if d == 0:
            raise _parse_error(lineno, "block dimension must be nonzero")

    lineno, text = lines[3]
    tokens = text.split()
    if len(tokens) != m:
        raise _parse_error(lineno, f"expected {m} objective coefficients, got {len(tokens)}")
    objective = {}
    for k, tok in enumerate(tokens):
        value = parse_float(tok, lineno, "objective coefficient")
        if value != 0.0:
            objective[k] = value

    blocks = [SDPBlock(abs(d), diagonal=d < 0) for d in dims]
    seen: set[tuple[int, int, int, int]] = set()
    for lineno, text in lines[4:]:
        tokens = text.split()
        if len(tokens) != 5:
            raise _parse_error(lineno, f"expected 'matno blkno i j value', got {len(tokens)} fields")
        matno = parse_int(tokens[0], lineno, "matrix number")
        blkno = parse_int(tokens[1], lineno, "block number")
        i = parse_int(tokens[2], lineno, "row index")
        j = parse_int(tokens[3], lineno, "column index")
        value = parse_float(tokens[4], lineno, "entry value")
        if not 0 <= matno <= m:
            raise _parse_error(lineno, f"matrix number {matno} outside 0..{m}")
        if not 1 <= blkno <= n_blocks:
            raise _parse_error(lineno, f"block number {blkno} outside 1..{n_blocks}")
        block = blocks[blkno - 1]
        if not (1 <= i <= block.dim and 1 <= j <= block.dim):
            raise _parse_error(lineno, f"entry ({i}, {j}) outside block of dimension {block.dim}")
        if i > j:
            raise _parse_error(lineno, "entries must satisfy i <= j")
        if block.diagonal and i != j:
            raise _parse_error(lineno, "diagonal block entries must have i == j")
        key = (matno, blkno, i, j)
        if key in seen:
            raise _parse_error(lineno, f"duplicate entry for {key}")
        seen.add(key)
        if matno == 0:
            block.set_constant(i - 1, j - 1, -value)
        else:
            block.add_linear(i - 1, j - 1, matno - 1, value)

    equality_coeffs: list[dict[int, float]] = []
    equality_rhs: list[float] = []
    if len(blocks) >= 2:
        plus, minus = blocks[-2], blocks[-1]
        if (
            plus.diagonal
            and minus.diagonal
            and plus.dim == minus.dim
            and minus._constant == {k: -v for k, v in plus._constant.items()}
            and minus._linear
            == {k: {var: -c for var, c in slot.items()} for k, slot in plus._linear.items()}
            and (plus._linear or plus._constant)
        ):
            for e in range(plus.dim):
                row = dict(plus._linear.get((e, e), {}))
                rhs = -plus._constant.get((e, e), 0.0)
                equality_coeffs.append(row)
                equality_rhs.append(rhs + 0.0)
            blocks = blocks[:-2]

    names = [f"y{k + 1}" for k in range(m)]
    return SDPProblem(
        variable_names=names,
        objective=objective,
        blocks=blocks,
        equality_coeffs=equality_coeffs,
        equality_rhs=equality_rhs,
    )
