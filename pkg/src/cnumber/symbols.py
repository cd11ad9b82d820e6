"""Lower and upper coherent-state symbols of single-mode monomials.

The upper symbol of a normal-ordered monomial ``a*^m a^n`` is found by
rewriting it in anti-normal order (all annihilators to the left) with the
canonical commutator, since an anti-normal word ``a^j a*^i`` has upper
symbol ``z^j conj(z)^i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np

CREATE, ANNIHILATE = "c", "a"


@dataclass(frozen=True)
class SymbolPolynomial:
    """Polynomial sum of coef * conj(z)**i * z**j, keyed by (i, j)."""

    terms: Mapping[tuple[int, int], Fraction | complex]

    @classmethod
    def from_dict(cls, terms) -> SymbolPolynomial:
        return cls({k: v for k, v in sorted(terms.items()) if v != 0})

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zc = np.conj(z)
        out = np.zeros_like(z)
        for (i, j), c in self.terms.items():
            out = out + complex(c) * zc**i * z**j
        return out

    def __add__(self, other: SymbolPolynomial) -> SymbolPolynomial:
        acc = dict(self.terms)
        for k, v in other.terms.items():
            acc[k] = acc.get(k, 0) + v
        return SymbolPolynomial.from_dict(acc)

    def __sub__(self, other: SymbolPolynomial) -> SymbolPolynomial:
        return self + other.scale(-1)

    def scale(self, c) -> SymbolPolynomial:
        return SymbolPolynomial.from_dict({k: c * v for k, v in self.terms.items()})

    def degree(self) -> int:
        return max((i + j for i, j in self.terms), default=0)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (i, j), c in sorted(self.terms.items(), key=lambda kv: (-sum(kv[0]), kv[0])):
            if i == j and i > 0:
                mono = f"|z|^{2 * i}"
            else:
                mono = "".join(
                    s for s in (f"z*^{i}" if i else "", f"z^{j}" if j else "")
                )
            parts.append(f"{c}" if not mono else (mono if c == 1 else f"{c}*{mono}"))
        return " + ".join(parts)


def _is_antinormal(word: str) -> bool:
    return CREATE + ANNIHILATE not in word


@lru_cache(maxsize=None)
def antinormal_expansion(word: str) -> tuple[tuple[str, int], ...]:
    """Rewrite a word in a/c into anti-normal words using a* a = a a* - 1.

    Returns ``((word, integer coefficient), ...)`` sorted by word.
    """
    pending = {word: 1}
    done: dict[str, int] = {}
    while pending:
        w, c = pending.popitem()
        if c == 0:
            continue
        pos = w.find(CREATE + ANNIHILATE)
        if pos < 0:
            done[w] = done.get(w, 0) + c
            continue
        swapped = w[:pos] + ANNIHILATE + CREATE + w[pos + 2:]
        contracted = w[:pos] + w[pos + 2:]
        pending[swapped] = pending.get(swapped, 0) + c
        pending[contracted] = pending.get(contracted, 0) - c
    return tuple(sorted((w, c) for w, c in done.items() if c != 0))


@lru_cache(maxsize=None)
def symbol_reorder(m: int, n: int) -> SymbolPolynomial:
    """Upper symbol of the normal-ordered monomial a*^m a^n."""
    if m < 0 or n < 0:
        raise ValueError("monomial powers must be non-negative")
    terms: dict[tuple[int, int], Fraction] = {}
    for w, c in antinormal_expansion(CREATE * m + ANNIHILATE * n):
        assert _is_antinormal(w)
        key = (w.count(CREATE), w.count(ANNIHILATE))
        terms[key] = terms.get(key, Fraction(0)) + Fraction(c)
    return SymbolPolynomial.from_dict(terms)


@lru_cache(maxsize=None)
def lower_symbol(m: int, n: int) -> SymbolPolynomial:
    """Lower symbol <z| a*^m a^n |z> = conj(z)^m z^n."""
    if m < 0 or n < 0:
        raise ValueError("monomial powers must be non-negative")
    return SymbolPolynomial({(m, n): Fraction(1)})


def symbol(m: int, n: int, variant: str) -> SymbolPolynomial:
    if variant == "lower":
        return lower_symbol(m, n)
    if variant == "upper":
        return symbol_reorder(m, n)
    raise ValueError(f"variant must be 'lower' or 'upper', got {variant!r}")
