"""Exact exponential sums over residue classes and symplectic bottom rows.

Generalized quadratic Gauss sums G(a,b,c) = sum_{n mod c} e((a n^2 + b n)/c)
and matrix-argument Kloosterman sums

    K(Q,T;C) = sum_{D mod C*Lambda} e(tr(A C^-1 Q + C^-1 D T))

where (A B; C D) runs over bottom-row classes of Sp(2,Z) with the given C,
Lambda is the lattice of integer symmetric 2x2 matrices, and Q, T are
half-integral binary forms.  All phases are exact rationals mod 1; floating
point enters only in PhaseSum.value().

Conventions: a bottom row (C, D) requires C*tD symmetric; completions (A, B)
satisfy A*tB = B*tA, C*tD = D*tC, A*tD - B*tC = I (row form of Sp).  The
phase tr(A C^-1 Q) is independent of the completion choice mod 1, since any
two completions differ by (A,B) -> (A + SC, B + SD) and tr(SQ) is an integer
for integral symmetric S.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce

import numpy as np

from .forms import HalfIntegralForm, elementary_divisors, snf

__all__ = [
    "PhaseSum",
    "SymplecticPair",
    "NotCompletableError",
    "gauss_sum",
    "gauss_sum_direct",
    "symplectic_complete",
    "complete_bottom_row",
    "enumerate_D_classes",
    "kitaoka_kloosterman",
    "kloosterman_envelope",
]


@lru_cache(maxsize=None)
def _root_table(m: int) -> np.ndarray:
    return np.exp((2j * np.pi / m) * np.arange(m))


class PhaseSum:
    """Multiset of rational phases r/m in [0,1) with integer multiplicities.

    Stored as a single modulus m and a counts vector of length m;
    value() = sum_r counts[r] * e(r/m), evaluated once by pairwise
    reduction over ascending phase, so repeated calls and merges are
    bit-reproducible.
    """

    __slots__ = ("modulus", "counts", "_value")

    def __init__(self, modulus: int, counts) -> None:
        if modulus < 1:
            raise ValueError("modulus must be positive")
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (modulus,):
            raise ValueError("counts must have length equal to the modulus")
        self.modulus = int(modulus)
        self.counts = counts
        self._value = None

    @classmethod
    def from_residues(cls, residues, modulus: int, weight: int = 1) -> "PhaseSum":
        r = np.asarray(residues, dtype=np.int64) % modulus
        counts = np.bincount(r, minlength=modulus) * weight
        return cls(modulus, counts)

    @classmethod
    def from_fractions(cls, fractions) -> "PhaseSum":
        items = []
        for entry in fractions:
            if isinstance(entry, tuple):
                f, mult = entry
            else:
                f, mult = entry, 1
            f = Fraction(f) % 1
            items.append((f, int(mult)))
        m = reduce(math.lcm, (f.denominator for f, _ in items), 1)
        counts = np.zeros(m, dtype=np.int64)
        for f, mult in items:
            counts[f.numerator * (m // f.denominator)] += mult
        return cls(m, counts)

    def phases(self):
        """Nonzero phases as (Fraction in [0,1), multiplicity), ascending."""
        idx = np.flatnonzero(self.counts)
        return [(Fraction(int(r), self.modulus), int(self.counts[r])) for r in idx]

    def value(self) -> complex:
        if self._value is None:
            terms = self.counts * _root_table(self.modulus)
            self._value = complex(np.add.reduce(terms))
        return self._value

    def total_multiplicity(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return int(np.count_nonzero(self.counts))

    def __repr__(self) -> str:
        return f"PhaseSum(modulus={self.modulus}, terms={self.total_multiplicity()})"


def gauss_sum_direct(a: int, b: int, c: int) -> PhaseSum:
    """G(a,b,c) by direct enumeration of n mod c."""
    if c < 1:
        raise ValueError("c must be a positive integer")
    a, b = a % c, b % c
    n = np.arange(c, dtype=np.int64)
    return PhaseSum.from_residues((a * n * n + b * n) % c, c)


def gauss_sum(a: int, b: int, c: int) -> PhaseSum:
    """G(a,b,c) via the gcd reduction.

    With g = (a,c): if g does not divide b the sum vanishes (the multiset is
    still returned, built directly, and its value is 0 to rounding).  If g | b,
    the multiset of (a n^2 + b n)/c over n mod c equals g copies of the
    multiset of ((a/g) n^2 + (b/g) n)/(c/g) over n mod c/g, because the phase
    depends on n only mod c/g.  Agrees with gauss_sum_direct as an exact
    multiset.
    """
    if c < 1:
        raise ValueError("c must be a positive integer")
    a, b = a % c, b % c
    g = math.gcd(a, c)
    if b % g != 0:
        return gauss_sum_direct(a, b, c)
    a2, b2, c2 = a // g, b // g, c // g
    n = np.arange(c2, dtype=np.int64)
    inner = np.bincount((a2 * n * n + b2 * n) % c2, minlength=c2)
    counts = np.zeros(c, dtype=np.int64)
    counts[np.arange(c2, dtype=np.int64) * g] = inner * g
    return PhaseSum(c, counts)


def _as_int_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=np.int64)
    if A.shape != (2, 2):
        raise ValueError("expected a 2x2 integer matrix")
    return A


def _det2(C: np.ndarray) -> int:
    return int(C[0, 0]) * int(C[1, 1]) - int(C[0, 1]) * int(C[1, 0])


class NotCompletableError(ValueError):
    """Raised when (C D) extends to no element of Sp(2,Z)."""


@dataclass(frozen=True, eq=False)
class SymplecticPair:
    """Bottom row (C, D) of a candidate element of Sp(2,Z), det C != 0."""

    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", _as_int_matrix(self.C))
        object.__setattr__(self, "D", _as_int_matrix(self.D))
        if _det2(self.C) == 0:
            raise ValueError("C must be nonsingular")
        if not np.array_equal(self.C @ self.D.T, self.D @ self.C.T):
            raise ValueError("C*tD must be symmetric")


def complete_bottom_row(C, D) -> tuple[np.ndarray, np.ndarray]:
    """Extend (C, D) with C*tD symmetric to (A B; C D) in Sp(2,Z).

    Works for singular C as well (needed for rank-deficient lower blocks).
    Solves (A B)*G = I for G = vstack(tD, -tC) via Smith reduction, then
    cancels the antisymmetric defect of A*tB with a shear (A,B) += S(C,D).
    Raises NotCompletableError when the divisors of G are not (1,1),
    equivalently when the gcd of the 2x2 minors of (C D) exceeds 1.
    """
    C = _as_int_matrix(C)
    D = _as_int_matrix(D)
    if not np.array_equal(C @ D.T, D @ C.T):
        raise ValueError("C*tD must be symmetric")
    G = np.vstack([D.T, -C.T])
    U, S, V = snf(G)
    if S[0][0] != 1 or S[1][1] != 1:
        raise NotCompletableError(
            "gcd of the 2x2 minors of (C D) exceeds 1; no symplectic completion"
        )
    U = np.array(U, dtype=np.int64)
    V = np.array(V, dtype=np.int64)
    X = V @ U[:2, :]
    A, B = X[:, :2].copy(), X[:, 2:].copy()
    f = int((A @ B.T - B @ A.T)[0, 1])
    S2 = np.array([[0, f], [0, 0]], dtype=np.int64)
    A += S2 @ C
    B += S2 @ D
    if not np.array_equal(A @ B.T, B @ A.T):
        raise AssertionError("completion lost A*tB symmetry")
    if not np.array_equal(A @ D.T - B @ C.T, np.eye(2, dtype=np.int64)):
        raise AssertionError("completion failed A*tD - B*tC = I")
    return A, B


def symplectic_complete(pair: SymplecticPair) -> tuple[np.ndarray, np.ndarray]:
    """Completion (A, B) for a nonsingular bottom row."""
    return complete_bottom_row(pair.C, pair.D)


def _completable_mask(C: np.ndarray, D11, D12, D21, D22) -> np.ndarray:
    # gcd of the six 2x2 minors of the 2x4 block (C D), vectorized over D
    c11, c12, c21, c22 = (int(C[0, 0]), int(C[0, 1]), int(C[1, 0]), int(C[1, 1]))
    det = c11 * c22 - c12 * c21
    minors = np.stack(
        [
            np.broadcast_to(np.int64(abs(det)), D11.shape),
            np.abs(c11 * D21 - c21 * D11),
            np.abs(c11 * D22 - c21 * D12),
            np.abs(c12 * D21 - c22 * D11),
            np.abs(c12 * D22 - c22 * D12),
            np.abs(D11 * D22 - D12 * D21),
        ]
    )
    return np.gcd.reduce(minors, axis=0) == 1


@lru_cache(maxsize=None)
def _d_classes_cached(key: tuple[int, int, int, int]):
    C = np.array(key, dtype=np.int64).reshape(2, 2)
    d0 = _det2(C)
    d = abs(d0)
    c11, c12, c21, c22 = (int(C[0, 0]), int(C[0, 1]), int(C[1, 0]), int(C[1, 1]))
    out = []
    # D mod C*Lambda <-> symmetric X = C^-1 D mod 1 <-> Y = d*X in (Z/d)^3
    # with C*sym(Y) = 0 mod d; then D = C*sym(Y)/d is integral.
    y = np.arange(d, dtype=np.int64)
    y2g, y4g = np.meshgrid(y, y, indexing="ij")
    y2g, y4g = y2g.ravel(), y4g.ravel()
    for y1 in range(d):
        n11 = c11 * y1 + c12 * y2g
        n12 = c11 * y2g + c12 * y4g
        n21 = c21 * y1 + c22 * y2g
        n22 = c21 * y2g + c22 * y4g
        ok = (n11 % d == 0) & (n12 % d == 0) & (n21 % d == 0) & (n22 % d == 0)
        if not ok.any():
            continue
        D11, D12 = n11[ok] // d0, n12[ok] // d0
        D21, D22 = n21[ok] // d0, n22[ok] // d0
        if d0 < 0:
            D11, D12, D21, D22 = -D11, -D12, -D21, -D22
        keep = _completable_mask(C, D11, D12, D21, D22)
        for i in np.flatnonzero(keep):
            D = np.array([[D11[i], D12[i]], [D21[i], D22[i]]], dtype=np.int64)
            out.append(SymplecticPair(C, D))
    return tuple(out)


def enumerate_D_classes(C) -> list[SymplecticPair]:
    """All classes D mod C*Lambda with (C, D) a completable bottom row.

    Exact quotient enumeration: D lies over C iff X = C^-1 D is symmetric,
    and D mod C*Lambda corresponds to X mod integer symmetric matrices, i.e.
    to Y = |det C|*X in (Z/|det C|)^3 with C*sym(Y) = 0 mod |det C|.  Each Y
    in the canonical box [0, |det C|)^3 is one class; completability is a
    class invariant (right multiplication of (C D) by a unimodular 4x4
    preserves the gcd of 2x2 minors).  Ordered lexicographically in Y.
    """
    C = _as_int_matrix(C)
    if _det2(C) == 0:
        raise ValueError("C must be nonsingular")
    return list(_d_classes_cached(tuple(int(x) for x in C.ravel())))


def _fraction_inverse(C: np.ndarray):
    d = _det2(C)
    return [
        [Fraction(int(C[1, 1]), d), Fraction(-int(C[0, 1]), d)],
        [Fraction(-int(C[1, 0]), d), Fraction(int(C[0, 0]), d)],
    ]


_KLOOSTERMAN_TABLES: dict[tuple[int, int, int, int], list] = {}


def _kloosterman_table(key: tuple[int, int, int, int]):
    """Per-class phase functionals (w1, w2s, w4, x1, x2s, x4) for fixed C.

    The class phase is tr(A C^-1 Q + C^-1 D T) = w1 q1 + w2s q2/2 + w4 q4
    + x1 t1 + x2s t2/2 + x4 t4 with W = A C^-1 and X = C^-1 D, where
    (q1,q2,q4), (t1,t2,t4) are the form triples (doubled off-diagonals).
    """
    tab = _KLOOSTERMAN_TABLES.get(key)
    if tab is not None:
        return tab
    C = np.array(key, dtype=np.int64).reshape(2, 2)
    Cinv = _fraction_inverse(C)
    tab = []
    for pair in _d_classes_cached(key):
        A, _ = complete_bottom_row(C, pair.D)
        W = [
            [sum(Fraction(int(A[i, k])) * Cinv[k][j] for k in range(2)) for j in range(2)]
            for i in range(2)
        ]
        X = [
            [sum(Cinv[i][k] * int(pair.D[k, j]) for k in range(2)) for j in range(2)]
            for i in range(2)
        ]
        tab.append(
            (
                W[0][0], W[0][1] + W[1][0], W[1][1],
                X[0][0], X[0][1] + X[1][0], X[1][1],
            )
        )
    _KLOOSTERMAN_TABLES[key] = tab
    return tab


def kitaoka_kloosterman(Q: HalfIntegralForm, T: HalfIntegralForm, C) -> PhaseSum:
    """K(Q,T;C) as an exact phase multiset over the D-classes of C."""
    C = _as_int_matrix(C)
    if _det2(C) == 0:
        raise ValueError("C must be nonsingular")
    key = tuple(int(x) for x in C.ravel())
    q1, q2, q4 = Q.as_tuple()
    t1, t2, t4 = T.as_tuple()
    hq2, ht2 = Fraction(q2, 2), Fraction(t2, 2)
    phases = []
    for w1, w2s, w4, x1, x2s, x4 in _kloosterman_table(key):
        phases.append(
            w1 * q1 + w2s * hq2 + w4 * q4 + x1 * t1 + x2s * ht2 + x4 * t4
        )
    return PhaseSum.from_fractions(phases)


@lru_cache(maxsize=None)
def _diag_class_table(e1: int, e2: int):
    """Admissible D-classes and completions for C = diag(e1, e2), e1 | e2.

    Classes are D = [[a, b], [m b, c]] with a, b in [0, e1), c in [0, e2),
    m = e2/e1.  Returns integer arrays (alpha1, alpha3, alpha4, a, b, c)
    where the completion satisfies A = [[alpha1, m alpha3], [alpha3, alpha4]]
    (forced by the symmetry of A C^-1).
    """
    if e1 < 1 or e2 % e1 != 0:
        raise ValueError("need positive e1 dividing e2")
    m = e2 // e1
    a = np.arange(e1, dtype=np.int64)
    av, bv, cv = np.meshgrid(a, a, np.arange(e2, dtype=np.int64), indexing="ij")
    av, bv, cv = av.ravel(), bv.ravel(), cv.ravel()
    minors = np.stack(
        [
            np.broadcast_to(np.int64(e1 * e2), av.shape),
            e1 * m * bv,
            e1 * cv,
            e2 * av,
            e2 * bv,
            np.abs(av * cv - m * bv * bv),
        ]
    )
    keep = np.gcd.reduce(minors, axis=0) == 1
    av, bv, cv = av[keep], bv[keep], cv[keep]
    Cmat = np.diag([e1, e2]).astype(np.int64)
    al1 = np.empty(av.shape, dtype=np.int64)
    al3 = np.empty(av.shape, dtype=np.int64)
    al4 = np.empty(av.shape, dtype=np.int64)
    for i in range(av.size):
        D = np.array(
            [[av[i], bv[i]], [m * bv[i], cv[i]]], dtype=np.int64
        )
        A, _ = complete_bottom_row(Cmat, D)
        if A[0, 1] != m * A[1, 0]:
            raise AssertionError("completion violates A*C^-1 symmetry")
        al1[i], al3[i], al4[i] = int(A[0, 0]), int(A[1, 0]), int(A[1, 1])
    return al1, al3, al4, av, bv, cv


def _kloosterman_diag(q_triple, t_triple, e1: int, e2: int) -> PhaseSum:
    """K(Q,T;diag(e1,e2)) with e1 | e2, via the cached class table.

    Phase of a class is (m(alpha1 q1 + alpha3 q2 + a t1 + b t2)
    + alpha4 q4 + c t4)/e2 with m = e2/e1; the numerator is integral.
    """
    al1, al3, al4, av, bv, cv = _diag_class_table(e1, e2)
    m = e2 // e1
    q1, q2, q4 = q_triple
    t1, t2, t4 = t_triple
    num = (m * (al1 * q1 + al3 * q2 + av * t1 + bv * t2) + al4 * q4 + cv * t4) % e2
    return PhaseSum.from_residues(num, e2)


def kloosterman_envelope(C, T: HalfIntegralForm, eps: float = 0.1) -> float:
    """c1^2 c2^(1/2+eps) gcd(c2, t4)^(1/2) for C with divisors (c1, c2).

    t4 is the lower-right integer entry of T transformed by the V of the
    elementary divisor decomposition C = U^-1 diag(c1,c2) V^-1.  Multiply by
    a fitted constant to dominate |K(Q,T;C)|.
    """
    C = _as_int_matrix(C)
    dec = elementary_divisors(C)
    t4 = T.transform(dec.V).c
    return (
        dec.c1**2
        * dec.c2 ** (0.5 + eps)
        * math.gcd(dec.c2, int(t4)) ** 0.5
    )
