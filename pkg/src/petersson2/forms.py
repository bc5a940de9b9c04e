"""Binary quadratic forms and integer-matrix utilities.

Conventions used throughout the package:

* A positive definite half-integral form is stored as ``(a, b, c)`` where ``b``
  is the DOUBLED off-diagonal entry: the Gram matrix is ``[[a, b/2], [b/2, c]]``
  and the value at ``x = (x1, x2)`` is ``a*x1**2 + b*x1*x2 + c*x2**2``.  The
  determinant ``a*c - b**2/4`` is kept exact as a :class:`~fractions.Fraction`.
* The Siegel bracket is ``A[X] = X^t A X``; :meth:`HalfIntegralForm.transform`
  implements it for integer ``X``.
* Unimodular matrices are plain 2x2 integer ``numpy`` arrays with det = +-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "HalfIntegralForm",
    "IntegralSymmetric",
    "ElementaryDivisorDecomposition",
    "gauss_reduce",
    "form_minimum",
    "content",
    "delta",
    "automorphisms",
    "repr_count",
    "vectors_with_value",
    "vectors_with_value_at_most",
    "primitive_vectors_with_value",
    "snf",
    "elementary_divisors",
    "coset_reps_P",
    "is_in_P",
    "is_unimodular",
    "unimodular_inverse",
    "complete_primitive_row",
    "complete_primitive_column",
    "egcd",
    "modinv",
]


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """Extended gcd: returns (g, x, y) with a*x + b*y = g = gcd(a, b) >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def modinv(a: int, m: int) -> int:
    """Inverse of a modulo m, in [0, m).  For m == 1 returns 0."""
    if m == 1:
        return 0
    g, x, _ = egcd(a % m, m)
    if g != 1:
        raise ValueError(f"{a} is not invertible modulo {m}")
    return x % m


def _mat(rows) -> np.ndarray:
    return np.array(rows, dtype=np.int64)


def is_unimodular(M) -> bool:
    M = np.asarray(M)
    if M.shape != (2, 2):
        return False
    d = int(M[0, 0]) * int(M[1, 1]) - int(M[0, 1]) * int(M[1, 0])
    return d in (1, -1)


def unimodular_inverse(M) -> np.ndarray:
    """Exact integer inverse of a 2x2 matrix with det = +-1."""
    a, b, c, d = int(M[0][0]), int(M[0][1]), int(M[1][0]), int(M[1][1])
    det = a * d - b * c
    if det not in (1, -1):
        raise ValueError("matrix is not unimodular")
    return _mat([[d * det, -b * det], [-c * det, a * det]])


def complete_primitive_row(u3: int, u4: int) -> np.ndarray:
    """A det = +1 integer matrix whose second row is (u3, u4).

    Requires gcd(u3, u4) = 1.
    """
    g, x, y = egcd(u4, -u3)
    if g != 1:
        raise ValueError("row is not primitive")
    return _mat([[x, y], [u3, u4]])


def complete_primitive_column(v1: int, v3: int) -> np.ndarray:
    """A det = +1 integer matrix whose first column is (v1, v3)."""
    g, x, y = egcd(v1, v3)
    if g != 1:
        raise ValueError("column is not primitive")
    return _mat([[v1, -y], [v3, x]])


@dataclass(frozen=True)
class HalfIntegralForm:
    """Positive definite binary quadratic form a*x^2 + b*x*y + c*y^2.

    ``b`` is the doubled off-diagonal entry of the Gram matrix (see module
    docstring); ``det`` carries the exact value ``a*c - b^2/4``.
    """

    a: int
    b: int
    c: int

    def __post_init__(self):
        for v in (self.a, self.b, self.c):
            if not isinstance(v, int):
                raise TypeError("form entries must be integers")

    @property
    def det(self) -> Fraction:
        return Fraction(4 * self.a * self.c - self.b * self.b, 4)

    def is_positive_definite(self) -> bool:
        return self.a > 0 and 4 * self.a * self.c - self.b * self.b > 0

    def evaluate(self, x1: int, x2: int) -> int:
        return self.a * x1 * x1 + self.b * x1 * x2 + self.c * x2 * x2

    def doubled_matrix(self) -> np.ndarray:
        """Integer matrix [[2a, b], [b, 2c]] = 2 * Gram matrix."""
        return _mat([[2 * self.a, self.b], [self.b, 2 * self.c]])

    def gram(self) -> np.ndarray:
        """Gram matrix as floats (off-diagonal b/2)."""
        return np.array(
            [[self.a, self.b / 2.0], [self.b / 2.0, self.c]], dtype=float
        )

    def transform(self, X) -> "HalfIntegralForm":
        """Siegel bracket self[X] = X^t * Gram * X for an integer matrix X."""
        X = np.asarray(X, dtype=np.int64)
        G2 = X.T @ self.doubled_matrix() @ X
        if G2[0, 0] % 2 or G2[1, 1] % 2:
            raise ArithmeticError("transform left the half-integral lattice")
        return HalfIntegralForm(int(G2[0, 0]) // 2, int(G2[0, 1]), int(G2[1, 1]) // 2)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.c)


@dataclass(frozen=True)
class IntegralSymmetric:
    """Integral symmetric 2x2 matrix [[s1, s2], [s2, s4]]."""

    s1: int
    s2: int
    s4: int

    def matrix(self) -> np.ndarray:
        return _mat([[self.s1, self.s2], [self.s2, self.s4]])


def gauss_reduce(form: HalfIntegralForm) -> tuple[HalfIntegralForm, np.ndarray]:
    """Gauss-reduce a positive definite form.

    Returns ``(reduced, U)`` with ``reduced = U * Gram * U^t`` (equivalently
    ``form.transform(U.T)``) and ``0 <= reduced.b <= reduced.a <= reduced.c``.
    The representative is unique for the GL(2,Z)-class.
    """
    if not form.is_positive_definite():
        raise ValueError("form must be positive definite")
    a, b, c = form.a, form.b, form.c
    # V accumulates the substitution x -> V x, reduced = form.transform(V).
    v11, v12, v21, v22 = 1, 0, 0, 1
    while True:
        # translate b into (-a, a]
        t = -((b + a) // (2 * a))
        if t:
            b2 = b + 2 * a * t
            c2 = a * t * t + b * t + c
            b, c = b2, c2
            v12, v22 = v12 + t * v11, v22 + t * v21
        if a > c:
            a, b, c = c, -b, a
            # substitution (x, y) -> (-y, x)
            v11, v12 = v12, -v11
            v21, v22 = v22, -v21
        else:
            break
    if b < 0:
        b = -b
        v12, v22 = -v12, -v22
    U = _mat([[v11, v21], [v12, v22]])  # U = V^t
    reduced = HalfIntegralForm(a, b, c)
    return reduced, U


def form_minimum(form: HalfIntegralForm) -> int:
    """Minimum nonzero value of the form over integer vectors."""
    reduced, _ = gauss_reduce(form)
    return reduced.a


def content(form: HalfIntegralForm) -> int:
    """gcd(a, b, c), the content of the form (b doubled)."""
    return math.gcd(math.gcd(abs(form.a), abs(form.b)), abs(form.c))


def _value_bounds(form: HalfIntegralForm, m: int) -> tuple[int, int]:
    # form[x] = m confines x to an ellipse: x1^2 <= 4mc/(4ac-b^2), sym. in x2.
    disc = 4 * form.a * form.c - form.b * form.b
    b1 = math.isqrt((4 * m * form.c) // disc)
    b2 = math.isqrt((4 * m * form.a) // disc)
    return b1, b2


def vectors_with_value(form: HalfIntegralForm, m: int) -> list[tuple[int, int]]:
    """All integer vectors x with form[x] = m, sorted lexicographically."""
    if m < 0:
        return []
    if m == 0:
        return [(0, 0)]
    if not form.is_positive_definite():
        raise ValueError("form must be positive definite")
    b1, b2 = _value_bounds(form, m)
    out = []
    for x1 in range(-b1, b1 + 1):
        for x2 in range(-b2, b2 + 1):
            if form.evaluate(x1, x2) == m:
                out.append((x1, x2))
    return out


def vectors_with_value_at_most(form: HalfIntegralForm, m: int) -> list[tuple[int, int]]:
    """All nonzero integer vectors x with form[x] <= m, sorted lexicographically."""
    if m <= 0 or not form.is_positive_definite():
        return []
    b1, b2 = _value_bounds(form, m)
    out = []
    for x1 in range(-b1, b1 + 1):
        for x2 in range(-b2, b2 + 1):
            if (x1 or x2) and form.evaluate(x1, x2) <= m:
                out.append((x1, x2))
    return out


def primitive_vectors_with_value(form: HalfIntegralForm, m: int) -> list[tuple[int, int]]:
    """Primitive integer vectors (gcd of coordinates 1) with form[x] = m."""
    return [
        (x1, x2)
        for (x1, x2) in vectors_with_value(form, m)
        if math.gcd(x1, x2) == 1
    ]


def repr_count(m: int, form: HalfIntegralForm) -> int:
    """Number of primitive representations of m by the form (signs counted)."""
    return len(primitive_vectors_with_value(form, m))


def automorphisms(Q: HalfIntegralForm) -> list[np.ndarray]:
    """All U in GL(2,Z) with U * Gram(Q) * U^t = Gram(Q)."""
    rows_a = vectors_with_value(Q, Q.a)
    rows_c = vectors_with_value(Q, Q.c)
    G2 = Q.doubled_matrix()
    out = []
    for x in rows_a:
        gx = (G2[0, 0] * x[0] + G2[0, 1] * x[1], G2[1, 0] * x[0] + G2[1, 1] * x[1])
        for y in rows_c:
            if x[0] * y[1] - x[1] * y[0] not in (1, -1):
                continue
            # cross term of U G U^t must equal the doubled off-diagonal b
            if gx[0] * y[0] + gx[1] * y[1] == Q.b:
                out.append(_mat([list(x), list(y)]))
    return out


def delta(Q: HalfIntegralForm, T: HalfIntegralForm) -> int:
    """#{U in GL(2,Z) : U * Gram(Q) * U^t = Gram(T)}.

    Computed by reducing both forms; the count is the automorphism count of the
    common reduced representative, or 0 if the reduced forms differ.
    """
    rq, _ = gauss_reduce(Q)
    rt, _ = gauss_reduce(T)
    if rq.as_tuple() != rt.as_tuple():
        return 0
    return len(automorphisms(rq))


# ---------------------------------------------------------------------------
# Smith normal form and elementary divisors
# ---------------------------------------------------------------------------


def _eye(n: int) -> list[list[int]]:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def snf(M) -> tuple[list[list[int]], list[list[int]], list[list[int]]]:
    """Smith normal form over Z with transforms.

    Returns ``(U, D, V)`` with ``U @ M @ V = D`` diagonal, ``U`` and ``V``
    unimodular, diagonal entries nonnegative with d1 | d2 | ... .  Uses exact
    Python integers; intended for the small matrices appearing here.
    """
    A = [[int(v) for v in row] for row in np.asarray(M)]
    m, n = len(A), len(A[0])
    U, V = _eye(m), _eye(n)

    def row_op(i, j, q):  # row_i -= q * row_j
        A[i] = [a - q * b for a, b in zip(A[i], A[j])]
        U[i] = [a - q * b for a, b in zip(U[i], U[j])]

    def col_op(i, j, q):  # col_i -= q * col_j
        for r in range(m):
            A[r][i] -= q * A[r][j]
        for r in range(n):
            V[r][i] -= q * V[r][j]

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for r in range(m):
            A[r][i], A[r][j] = A[r][j], A[r][i]
        for r in range(n):
            V[r][i], V[r][j] = V[r][j], V[r][i]

    k = 0
    while k < min(m, n):
        # pick the entry of smallest nonzero magnitude as pivot
        pivot = None
        for i in range(k, m):
            for j in range(k, n):
                if A[i][j] and (pivot is None or abs(A[i][j]) < abs(A[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        swap_rows(k, pivot[0])
        swap_cols(k, pivot[1])
        while True:
            done = True
            for i in range(k + 1, m):
                if A[i][k]:
                    q = A[i][k] // A[k][k]
                    row_op(i, k, q)
                    if A[i][k]:
                        swap_rows(k, i)
                        done = False
            for j in range(k + 1, n):
                if A[k][j]:
                    q = A[k][j] // A[k][k]
                    col_op(j, k, q)
                    if A[k][j]:
                        swap_cols(k, j)
                        done = False
            if done:
                break
        # pivot must divide the rest of the submatrix
        fixed = True
        for i in range(k + 1, m):
            for j in range(k + 1, n):
                if A[i][j] % A[k][k]:
                    row_op(k, i, -1)  # add row i to row k, restart this pivot
                    fixed = False
                    break
            if not fixed:
                break
        if fixed:
            k += 1

    for i in range(min(m, n)):
        if A[i][i] < 0:
            A[i] = [-v for v in A[i]]
            U[i] = [-v for v in U[i]]
    return U, A, V


@dataclass(frozen=True)
class ElementaryDivisorDecomposition:
    """C = U^-1 diag(c1, c2) V^-1 with c1 | c2 and U, V unimodular."""

    c1: int
    c2: int
    U: np.ndarray
    V: np.ndarray


def elementary_divisors(C) -> ElementaryDivisorDecomposition:
    """Elementary divisor decomposition of a nonsingular integer 2x2 matrix."""
    C = np.asarray(C)
    det = int(C[0, 0]) * int(C[1, 1]) - int(C[0, 1]) * int(C[1, 0])
    if det == 0:
        raise ValueError("matrix is singular")
    U, D, V = snf(C)
    c1, c2 = D[0][0], D[1][1]
    if c1 <= 0 or c2 <= 0 or c2 % c1:
        raise AssertionError("Smith form violated its own invariants")
    return ElementaryDivisorDecomposition(c1, c2, _mat(U), _mat(V))


# ---------------------------------------------------------------------------
# Cosets of P(n) = {[[a, b], [c, d]] in GL(2,Z) : b = 0 mod n}
# ---------------------------------------------------------------------------


def is_in_P(M, n: int) -> bool:
    return is_unimodular(M) and int(np.asarray(M)[0, 1]) % n == 0


@lru_cache(maxsize=None)
def _units(n: int) -> tuple[int, ...]:
    return tuple(w for w in range(1, n + 1) if math.gcd(w, n) == 1)


def _lift_primitive(b: int, d: int, n: int) -> tuple[int, int]:
    # integer pair = (b, d) mod n with gcd 1; small search is always enough
    for j in range(0, 4 * n + 1):
        for dd in (d + j * n, d - j * n):
            if math.gcd(b, dd) == 1:
                return b, dd
    for i in range(0, 4 * n + 1):  # pragma: no cover
        for bb in (b + i * n, b - i * n):
            if math.gcd(bb, d) == 1:
                return bb, d
    raise AssertionError("no primitive lift found")


def coset_reps_P(n: int) -> list[np.ndarray]:
    """Representatives of GL(2,Z) / P(n).

    Classes are in bijection with P^1(Z/n): the invariant of V * P(n) is the
    second column of V modulo scaling by units of Z/n.  Each representative is
    returned with det = +1; for n = 1 the single class is the identity.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return [_mat([[1, 0], [0, 1]])]
    units = _units(n)
    seen = {}
    for b in range(n):
        for d in range(n):
            if math.gcd(math.gcd(b, d), n) != 1:
                continue
            key = min((b * w % n, d * w % n) for w in units)
            if key in seen:
                continue
            seen[key] = (b, d)
    out = []
    for key in sorted(seen):
        b, d = _lift_primitive(*seen[key], n)
        # complete (b, d) as a second column, det +1: x*d - y*b = 1
        g, x, y = egcd(d, -b)
        assert g == 1
        out.append(_mat([[x, b], [y, d]]))
    return out
