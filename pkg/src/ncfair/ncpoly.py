"""Algebra of non-commutative polynomials in hermitian operator variables.

Words (finite products of variables) multiply by concatenation and carry no
commutation relations.  Every variable is hermitian and every scalar is real,
so the expectation of a word equals the expectation of its reversal; moment
bookkeeping therefore identifies each word with its reverse and keeps the
lexicographically smaller of the two as the canonical representative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "VariableSet",
    "Word",
    "MomentIndex",
    "Polynomial",
    "make_variables",
    "canonicalize",
    "enumerate_words",
]


@dataclass(frozen=True)
class VariableSet:
    """Ordered collection of hermitian operator variable names.

    The position of a name fixes the integer letter used by :class:`Word`,
    so two sets with the same names in a different order are distinct.
    """

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("variable set must contain at least one name")
        seen: set[str] = set()
        for name in names:
            if not isinstance(name, str) or not name:
                raise ValueError(f"variable names must be non-empty strings, got {name!r}")
            if name in seen:
                raise ValueError(f"duplicate variable name: {name!r}")
            seen.add(name)

    @cached_property
    def _positions(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @property
    def count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise ValueError(f"unknown variable name: {name!r}") from None

    @property
    def identity(self) -> "Word":
        return Word(self, ())

    def word(self, letters: Iterable[int] = ()) -> "Word":
        return Word(self, tuple(letters))


def make_variables(names: Sequence[str]) -> VariableSet:
    """Build a :class:`VariableSet` from an ordered name sequence."""
    return VariableSet(tuple(names))


@dataclass(frozen=True)
class Word:
    """Product of variables encoded as a tuple of letter positions.

    The empty tuple is the multiplicative identity.  Ordering is by
    (degree, letters); words over different variable sets never compare.
    """

    varset: VariableSet
    letters: tuple[int, ...]

    def __post_init__(self) -> None:
        letters = tuple(self.letters)
        object.__setattr__(self, "letters", letters)
        n = self.varset.count
        for pos in letters:
            if not isinstance(pos, int) or not 0 <= pos < n:
                raise ValueError(f"letter {pos!r} outside variable set of size {n}")

    @property
    def degree(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return not self.letters

    def __mul__(self, other: "Word") -> "Word":
        if not isinstance(other, Word):
            return NotImplemented
        if other.varset != self.varset:
            raise ValueError("cannot multiply words over different variable sets")
        return Word(self.varset, self.letters + other.letters)

    def adjoint(self) -> "Word":
        # hermitian letters: the adjoint is the reversed product
        return Word(self.varset, self.letters[::-1])

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (len(self.letters), self.letters)

    def __lt__(self, other: "Word") -> bool:
        if not isinstance(other, Word) or other.varset != self.varset:
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if not self.letters:
            return "1"
        return "*".join(self.varset.names[i] for i in self.letters)

    def __repr__(self) -> str:
        return f"Word({self})"


@dataclass(frozen=True)
class MomentIndex:
    """Canonical representative of the pair {word, reversed word}.

    Real moments of hermitian operators satisfy y(w) == y(reverse(w)), so a
    moment vector is indexed by these equivalence classes.  Construct through
    :func:`canonicalize`; direct construction insists on canonical input.
    """

    word: Word

    def __post_init__(self) -> None:
        if self.word.letters[::-1] < self.word.letters:
            raise ValueError(f"word {self.word} is not canonical (reverse is smaller)")

    @property
    def degree(self) -> int:
        return self.word.degree

    @property
    def label(self) -> str:
        return str(self.word)

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return self.word.sort_key()

    def __lt__(self, other: "MomentIndex") -> bool:
        if not isinstance(other, MomentIndex) or other.word.varset != self.word.varset:
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"MomentIndex({self.label})"


def canonicalize(word: Word) -> MomentIndex:
    """Map a word to the moment index of its reversal class."""
    rev = word.letters[::-1]
    if rev < word.letters:
        return MomentIndex(Word(word.varset, rev))
    return MomentIndex(word)


def enumerate_words(varset: VariableSet, max_degree: int) -> list[Word]:
    """All words of degree <= max_degree in (degree, lexicographic) order."""
    if not isinstance(max_degree, int) or max_degree < 0:
        raise ValueError(f"max_degree must be a non-negative integer, got {max_degree!r}")
    n = varset.count
    out: list[Word] = []
    for deg in range(max_degree + 1):
        for letters in itertools.product(range(n), repeat=deg):
            out.append(Word(varset, letters))
    return out


class Polynomial:
    """Real linear combination of words with non-commutative multiplication.

    Instances behave as immutable values: arithmetic returns new objects and
    zero coefficients are pruned on construction.
    """

    __slots__ = ("varset", "_terms")

    def __init__(self, varset: VariableSet, terms: Mapping[Word, float] | None = None):
        clean: dict[Word, float] = {}
        for word, coeff in (terms or {}).items():
            if not isinstance(word, Word):
                raise TypeError(f"polynomial keys must be words, got {word!r}")
            if word.varset != varset:
                raise ValueError(f"word {word} belongs to a different variable set")
            value = float(coeff)
            if value != 0.0:
                clean[word] = value
        self.varset = varset
        self._terms = clean

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, varset: VariableSet) -> "Polynomial":
        return cls(varset, {})

    @classmethod
    def constant(cls, varset: VariableSet, value: float) -> "Polynomial":
        return cls(varset, {varset.identity: float(value)})

    @classmethod
    def variable(cls, varset: VariableSet, ref: int | str) -> "Polynomial":
        pos = varset.index(ref) if isinstance(ref, str) else int(ref)
        return cls(varset, {Word(varset, (pos,)): 1.0})

    @classmethod
    def variables(cls, varset: VariableSet) -> list["Polynomial"]:
        return [cls.variable(varset, i) for i in range(varset.count)]

    # -- inspection ---------------------------------------------------

    @property
    def terms(self) -> dict[Word, float]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Word, float]]:
        return iter(self._terms.items())

    @property
    def degree(self) -> int:
        return max((w.degree for w in self._terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, word: Word) -> float:
        return self._terms.get(word, 0.0)

    def adjoint(self) -> "Polynomial":
        return Polynomial(self.varset, {w.adjoint(): c for w, c in self._terms.items()})

    def is_hermitian(self) -> bool:
        return all(self._terms.get(w.adjoint()) == c for w, c in self._terms.items())

    # -- arithmetic ---------------------------------------------------

    def _coerce(self, other) -> "Polynomial | None":
        if isinstance(other, Polynomial):
            if other.varset != self.varset:
                raise ValueError("polynomials over different variable sets")
            return other
        if isinstance(other, (int, float)):
            return Polynomial.constant(self.varset, other)
        return None

    def __add__(self, other) -> "Polynomial":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        terms = dict(self._terms)
        for word, coeff in rhs._terms.items():
            terms[word] = terms.get(word, 0.0) + coeff
        return Polynomial(self.varset, terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.varset, {w: -c for w, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return self + (-rhs)

    def __rsub__(self, other) -> "Polynomial":
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        return rhs + (-self)

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(self.varset, {w: c * other for w, c in self._terms.items()})
        rhs = self._coerce(other)
        if rhs is None:
            return NotImplemented
        terms: dict[Word, float] = {}
        for wa, ca in self._terms.items():
            for wb, cb in rhs._terms.items():
                word = wa * wb
                terms[word] = terms.get(word, 0.0) + ca * cb
        return Polynomial(self.varset, terms)

    def __rmul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return self * other
        return NotImplemented

    def evaluate(self, values: Sequence[float]) -> float:
        """Scalar (commuting) substitution of values for the variables."""
        if len(values) != self.varset.count:
            raise ValueError(
                f"expected {self.varset.count} values, got {len(values)}"
            )
        total = 0.0
        for word, coeff in self._terms.items():
            prod = coeff
            for pos in word.letters:
                prod *= values[pos]
            total += prod
        return total

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.varset == other.varset and self._terms == other._terms

    __hash__ = None  # mutable-dict backed; not usable as a key

    def __repr__(self) -> str:
        if not self._terms:
            return "Polynomial(0)"
        parts = [f"{c:g}*{w}" for w, c in sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())]
        return "Polynomial(" + " + ".join(parts) + ")"
