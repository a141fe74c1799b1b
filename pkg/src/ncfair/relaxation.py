"""Moment relaxations for polynomial optimization over bounded hermitian operators.

Level k of the hierarchy replaces expectations of operator words by scalar
moment variables indexed canonically (a word and its reversal share one
variable).  The moment matrix M_k collects y(v' w) over words of degree <= k;
each inequality constraint q >= 0 contributes a localizing matrix of order
k - ceil(deg q / 2); each equality constraint e = 0 contributes one linear
row y(v' e w) = 0 per admissible word pair.  Boundedness enters through an
optional ball constraint C^2 - sum_i x_i^2 >= 0 appended as a last
inequality.  The assembled semidefinite program lower-bounds the operator
optimum, non-decreasingly in k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ncpoly import (
    MomentIndex,
    Polynomial,
    VariableSet,
    Word,
    canonicalize,
    enumerate_words,
)
from .sdp import SDPBlock, SDPProblem

__all__ = [
    "NCPOPProblem",
    "SymbolicMatrix",
    "moment_matrix",
    "localizing_matrix",
    "assemble_sdp",
    "relaxation_indices",
    "moments_from_solution",
    "moment_count",
    "flatness_check",
    "extract_first_order",
]


@dataclass(frozen=True)
class NCPOPProblem:
    """Minimize a hermitian polynomial objective over hermitian operators
    subject to operator inequalities q >= 0 and equalities e = 0.

    ``ball_radius`` C, when given, adds the constraint C^2 - sum x_i^2 >= 0
    bounding the joint operator norm; compactness of this kind is what makes
    the relaxation hierarchy converge.
    """

    varset: VariableSet
    objective: Polynomial
    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()
    ball_radius: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for poly in (self.objective, *self.inequalities, *self.equalities):
            if not isinstance(poly, Polynomial):
                raise TypeError(f"expected a polynomial, got {poly!r}")
            if poly.varset != self.varset:
                raise ValueError("all polynomials must share the problem's variable set")
        if not self.objective.is_hermitian():
            raise ValueError("objective polynomial must be hermitian")
        for idx, poly in enumerate(self.inequalities):
            if not poly.is_hermitian():
                raise ValueError(f"inequality constraint {idx} must be hermitian")
        if self.ball_radius is not None:
            radius = float(self.ball_radius)
            if not math.isfinite(radius) or radius <= 0:
                raise ValueError(f"ball radius must be positive and finite, got {self.ball_radius!r}")
            object.__setattr__(self, "ball_radius", radius)

    def ball_polynomial(self) -> Polynomial | None:
        if self.ball_radius is None:
            return None
        poly = Polynomial.constant(self.varset, self.ball_radius**2)
        for i in range(self.varset.count):
            x = Polynomial.variable(self.varset, i)
            poly = poly - x * x
        return poly

    def labeled_inequalities(self) -> list[tuple[str, Polynomial]]:
        out = [(f"inequality {i}", q) for i, q in enumerate(self.inequalities)]
        ball = self.ball_polynomial()
        if ball is not None:
            out.append(("ball", ball))
        return out

    @property
    def max_degree(self) -> int:
        degs = [self.objective.degree]
        degs += [q.degree for _, q in self.labeled_inequalities()]
        degs += [e.degree for e in self.equalities]
        return max(degs)

    @property
    def min_order(self) -> int:
        return max(1, math.ceil(self.max_degree / 2))


def relaxation_indices(varset: VariableSet, order: int) -> list[MomentIndex]:
    """Canonical moment indices of the level-``order`` relaxation, i.e. all
    reversal classes of words of degree <= 2*order, sorted by (degree, lex)."""
    if not isinstance(order, int) or order < 1:
        raise ValueError(f"relaxation order must be a positive integer, got {order!r}")
    unique = {canonicalize(w) for w in enumerate_words(varset, 2 * order)}
    return sorted(unique, key=MomentIndex.sort_key)


def moment_count(num_vars: int, order: int) -> int:
    """Number of canonical moment indices at the given level, in closed form:
    sum over j <= 2k of (n^j + n^ceil(j/2)) / 2 reversal classes of degree j."""
    if not isinstance(num_vars, int) or num_vars < 1:
        raise ValueError(f"num_vars must be a positive integer, got {num_vars!r}")
    if not isinstance(order, int) or order < 1:
        raise ValueError(f"order must be a positive integer, got {order!r}")
    total = 0
    for j in range(2 * order + 1):
        total += (num_vars**j + num_vars ** math.ceil(j / 2)) // 2
    return total


class SymbolicMatrix:
    """Symmetric matrix whose entries are linear forms in canonical moments.

    entry(i, j) maps a :class:`MomentIndex` to its coefficient.  Rows are
    labelled by the words the matrix was built from.
    """

    def __init__(self, row_words: Sequence[Word], entries: dict[tuple[int, int], dict[MomentIndex, float]]):
        self.row_words = list(row_words)
        self.dim = len(self.row_words)
        self._entries = entries

    def entry(self, i: int, j: int) -> dict[MomentIndex, float]:
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise ValueError(f"entry ({i}, {j}) outside matrix of dimension {self.dim}")
        key = (i, j) if i <= j else (j, i)
        return dict(self._entries.get(key, {}))

    def indices(self) -> set[MomentIndex]:
        out: set[MomentIndex] = set()
        for form in self._entries.values():
            out.update(form)
        return out

    def evaluate(self, values: Mapping[MomentIndex, float]) -> np.ndarray:
        mat = np.zeros((self.dim, self.dim))
        for (i, j), form in self._entries.items():
            total = 0.0
            for index, coeff in form.items():
                try:
                    total += coeff * values[index]
                except KeyError:
                    raise ValueError(f"missing moment value for index {index.label!r}") from None
            mat[i, j] = total
            if i != j:
                mat[j, i] = total
        return mat


def moment_matrix(varset: VariableSet, order: int) -> SymbolicMatrix:
    """M_order: entry (i, j) is the moment of row_word_i' * row_word_j."""
    if not isinstance(order, int) or order < 0:
        raise ValueError(f"order must be a non-negative integer, got {order!r}")
    words = enumerate_words(varset, order)
    entries: dict[tuple[int, int], dict[MomentIndex, float]] = {}
    for i, wi in enumerate(words):
        left = wi.adjoint()
        for j in range(i, len(words)):
            entries[(i, j)] = {canonicalize(left * words[j]): 1.0}
    return SymbolicMatrix(words, entries)


def localizing_matrix(poly: Polynomial, order: int, label: str | None = None) -> SymbolicMatrix:
    """Localizing matrix of a hermitian constraint polynomial at the given
    relaxation order; rows run over words of degree order - ceil(deg/2)."""
    name = label if label is not None else repr(poly)
    if poly.is_zero:
        raise ValueError(f"constraint {name} is the zero polynomial")
    if not poly.is_hermitian():
        raise ValueError(f"constraint {name} must be hermitian")
    half = math.ceil(poly.degree / 2)
    sub = order - half
    if sub < 0:
        raise ValueError(
            f"relaxation order {order} is too low for constraint {name} of degree {poly.degree}"
        )
    words = enumerate_words(poly.varset, sub)
    entries: dict[tuple[int, int], dict[MomentIndex, float]] = {}
    for i, wi in enumerate(words):
        left = wi.adjoint()
        for j in range(i, len(words)):
            form: dict[MomentIndex, float] = {}
            for mu, coeff in poly.items():
                index = canonicalize(left * mu * words[j])
                total = form.get(index, 0.0) + coeff
                if total == 0.0:
                    form.pop(index, None)
                else:
                    form[index] = total
            entries[(i, j)] = form
    return SymbolicMatrix(words, entries)


def _block_from_symbolic(matrix: SymbolicMatrix, index_of: Mapping[MomentIndex, int]) -> SDPBlock:
    block = SDPBlock(matrix.dim)
    for i in range(matrix.dim):
        for j in range(i, matrix.dim):
            for index, coeff in matrix.entry(i, j).items():
                block.add_linear(i, j, index_of[index], coeff)
    return block


def assemble_sdp(problem: NCPOPProblem, order: int) -> SDPProblem:
    """Build the level-``order`` semidefinite relaxation.

    Decision variables are the canonical moments in (degree, lex) order; the
    identity moment is pinned to 1 by the first equality row.  Operator
    equalities become homogeneous rows y(v' e w) = 0 over all word pairs the
    order admits, with exact duplicate rows emitted once.
    """
    if not isinstance(order, int) or order < 1:
        raise ValueError(f"relaxation order must be a positive integer, got {order!r}")
    if problem.objective.is_zero:
        raise ValueError("objective polynomial is empty")
    if 2 * order < problem.max_degree:
        raise ValueError(
            f"relaxation order {order} is too low: problem degree {problem.max_degree} "
            f"needs order >= {problem.min_order}"
        )

    varset = problem.varset
    indices = relaxation_indices(varset, order)
    index_of = {index: pos for pos, index in enumerate(indices)}
    names = [index.label for index in indices]

    blocks = [_block_from_symbolic(moment_matrix(varset, order), index_of)]
    for label, q in problem.labeled_inequalities():
        blocks.append(_block_from_symbolic(localizing_matrix(q, order, label), index_of))

    identity_index = canonicalize(varset.identity)
    equality_coeffs: list[dict[int, float]] = [{index_of[identity_index]: 1.0}]
    equality_rhs: list[float] = [1.0]
    seen_rows = {((index_of[identity_index], 1.0),)}

    for e_pos, poly in enumerate(problem.equalities):
        if poly.is_zero:
            continue
        sub = order - math.ceil(poly.degree / 2)
        if sub < 0:
            raise ValueError(
                f"relaxation order {order} is too low for equality {e_pos} of degree {poly.degree}"
            )
        words = enumerate_words(varset, sub)
        for nu in words:
            left = nu.adjoint()
            for om in words:
                form: dict[int, float] = {}
                for mu, coeff in poly.items():
                    pos = index_of[canonicalize(left * mu * om)]
                    total = form.get(pos, 0.0) + coeff
                    if total == 0.0:
                        form.pop(pos, None)
                    else:
                        form[pos] = total
                if not form:
                    continue
                key = tuple(sorted(form.items()))
                if key in seen_rows:
                    continue
                seen_rows.add(key)
                equality_coeffs.append(form)
                equality_rhs.append(0.0)

    objective: dict[int, float] = {}
    for word, coeff in problem.objective.items():
        pos = index_of[canonicalize(word)]
        objective[pos] = objective.get(pos, 0.0) + coeff

    return SDPProblem(
        variable_names=names,
        objective=objective,
        blocks=blocks,
        equality_coeffs=equality_coeffs,
        equality_rhs=equality_rhs,
    )


def moments_from_solution(varset: VariableSet, order: int, values: Sequence[float]) -> dict[MomentIndex, float]:
    """Pair the relaxation's canonical indices with a solution vector."""
    indices = relaxation_indices(varset, order)
    if len(values) != len(indices):
        raise ValueError(f"expected {len(indices)} moment values, got {len(values)}")
    return {index: float(v) for index, v in zip(indices, values)}


def _numeric_rank(matrix: np.ndarray, rank_tol: float) -> int:
    sing = np.linalg.svd(matrix, compute_uv=False)
    if sing.size == 0 or sing[0] <= 0.0:
        return 0
    return int(np.sum(sing > rank_tol * sing[0]))


def flatness_check(
    values: Mapping[MomentIndex, float],
    varset: VariableSet,
    order: int,
    rank_tol: float = 1e-6,
) -> bool:
    """Rank-loop test: the level-``order`` moment matrix is flat when its
    numeric rank matches the rank of its level-(order-1) principal block.
    Flatness certifies that the relaxation value is attained by a
    finite-dimensional operator model."""
    if not isinstance(order, int) or order < 2:
        raise ValueError(f"flatness needs order >= 2, got {order!r}")
    if not rank_tol > 0:
        raise ValueError(f"rank_tol must be positive, got {rank_tol!r}")
    big = moment_matrix(varset, order).evaluate(values)
    small = moment_matrix(varset, order - 1).evaluate(values)
    return _numeric_rank(big, rank_tol) == _numeric_rank(small, rank_tol)


def extract_first_order(values: Mapping[MomentIndex, float], varset: VariableSet) -> np.ndarray:
    """Degree-1 moment readout, ordered like the variable set."""
    out = np.zeros(varset.count)
    for i in range(varset.count):
        index = canonicalize(Word(varset, (i,)))
        try:
            out[i] = values[index]
        except KeyError:
            raise ValueError(f"missing first-order moment for variable {varset.names[i]!r}") from None
    return out
