import math
import random
from fractions import Fraction

import numpy as np
import pytest

from petersson2.expsums import (
    NotCompletableError,
    PhaseSum,
    SymplecticPair,
    complete_bottom_row,
    enumerate_D_classes,
    gauss_sum,
    gauss_sum_direct,
    kitaoka_kloosterman,
    kloosterman_envelope,
    _diag_class_table,
    _kloosterman_diag,
)
from petersson2.forms import HalfIntegralForm, elementary_divisors, unimodular_inverse

F = HalfIntegralForm
I2 = np.eye(2, dtype=np.int64)


def sp_check(A, B, C, D):
    A, B = np.asarray(A), np.asarray(B)
    C, D = np.asarray(C), np.asarray(D)
    assert np.array_equal(A @ B.T, B @ A.T)
    assert np.array_equal(C @ D.T, D @ C.T)
    assert np.array_equal(A @ D.T - B @ C.T, I2)


def random_unimodular(rng, steps=5):
    M = np.eye(2, dtype=np.int64)
    S = np.array([[0, -1], [1, 0]], dtype=np.int64)
    for _ in range(steps):
        M = M @ np.array([[1, rng.randrange(-2, 3)], [0, 1]], dtype=np.int64)
        if rng.random() < 0.5:
            M = M @ S
    return M


def test_phase_sum_basic():
    ps = PhaseSum.from_fractions([Fraction(0), Fraction(1, 4), Fraction(1, 4)])
    assert ps.modulus == 4
    assert ps.phases() == [(Fraction(0), 1), (Fraction(1, 4), 2)]
    assert ps.value() == pytest.approx(1 + 2j, abs=1e-14)
    assert ps.total_multiplicity() == 3


def test_phase_sum_negative_fraction_wraps():
    ps = PhaseSum.from_fractions([Fraction(-1, 3)])
    assert ps.phases() == [(Fraction(2, 3), 1)]


def test_gauss_sum_frozen_examples():
    for c in [1, 2, 5, 12, 37]:
        assert gauss_sum(0, 0, c).value() == pytest.approx(c, abs=1e-12)
    assert gauss_sum(1, 0, 4).value() == pytest.approx(2 + 2j, abs=1e-12)
    assert abs(gauss_sum(2, 1, 4).value()) < 1e-12


def test_gauss_sum_matches_direct_exhaustive_small():
    for c in range(1, 30):
        for a in range(c):
            for b in range(c):
                s1 = gauss_sum(a, b, c)
                s2 = gauss_sum_direct(a, b, c)
                assert s1.modulus == s2.modulus
                assert np.array_equal(s1.counts, s2.counts), (a, b, c)


def test_gauss_sum_random_larger_moduli():
    rng = random.Random(17)
    for _ in range(300):
        c = rng.randrange(30, 400)
        a = rng.randrange(-c, c)
        b = rng.randrange(-c, c)
        s1 = gauss_sum(a, b, c)
        s2 = gauss_sum_direct(a, b, c)
        assert np.array_equal(s1.counts, s2.counts)


def test_gauss_bound_small_sweep():
    for c in range(1, 60):
        for a in range(c):
            g = math.gcd(a, c)
            for b in range(c):
                v = abs(gauss_sum(a, b, c).value())
                assert v <= 2.0 * math.sqrt(g * c) + 1e-9


def test_complete_bottom_row_identity_case():
    A, B = complete_bottom_row(I2, np.zeros((2, 2), dtype=np.int64))
    sp_check(A, B, I2, np.zeros((2, 2)))
    # the canonical completion is itself valid
    sp_check(np.zeros((2, 2), dtype=np.int64), -I2, I2, np.zeros((2, 2)))


def test_complete_bottom_row_spec_cases():
    C = np.diag([1, 2]).astype(np.int64)
    D = np.diag([0, 1]).astype(np.int64)
    A, B = complete_bottom_row(C, D)
    sp_check(A, B, C, D)
    with pytest.raises(NotCompletableError):
        complete_bottom_row(np.diag([2, 2]), np.diag([2, 2]))


def test_complete_bottom_row_rejects_asymmetric():
    with pytest.raises(ValueError):
        complete_bottom_row(I2, np.array([[0, 1], [0, 0]]))


def test_complete_bottom_row_random():
    rng = random.Random(31)
    found = 0
    while found < 60:
        C = np.array(
            [[rng.randrange(-4, 5) for _ in range(2)] for _ in range(2)],
            dtype=np.int64,
        )
        X = np.array(
            [[rng.randrange(-3, 4), rng.randrange(-3, 4)], [0, rng.randrange(-3, 4)]]
        )
        X = X + X.T - np.diag(np.diag(X))  # random symmetric
        D = C @ X
        if not np.array_equal(C @ D.T, D @ C.T):
            continue
        try:
            A, B = complete_bottom_row(C, D)
        except NotCompletableError:
            continue
        sp_check(A, B, C, D)
        found += 1


def test_complete_bottom_row_singular_C():
    # rank-1 lower-left block, as in the rank-1 coset construction
    C = np.array([[3, 0], [0, 0]], dtype=np.int64)
    D = np.array([[1, 5], [0, 1]], dtype=np.int64)
    A, B = complete_bottom_row(C, D)
    sp_check(A, B, C, D)


def test_symplectic_pair_validation():
    with pytest.raises(ValueError):
        SymplecticPair(np.zeros((2, 2), dtype=np.int64), I2)
    with pytest.raises(ValueError):
        SymplecticPair(I2, np.array([[0, 1], [0, 0]]))


def dclasses_box(C, box_mult=2):
    """Independent box enumeration: all integer D with small entries,
    deduped by the exact class key Y = |det C| * (C^-1 D) mod |det C|."""
    C = np.asarray(C, dtype=np.int64)
    d0 = int(C[0, 0]) * int(C[1, 1]) - int(C[0, 1]) * int(C[1, 0])
    d = abs(d0)
    bound = box_mult * d
    adj = np.array([[C[1, 1], -C[0, 1]], [-C[1, 0], C[0, 0]]], dtype=np.int64)
    seen = {}
    rng = range(-bound, bound + 1)
    for d11 in rng:
        for d12 in rng:
            for d21 in rng:
                for d22 in rng:
                    D = np.array([[d11, d12], [d21, d22]], dtype=np.int64)
                    N = adj @ D  # = det * C^-1 D
                    if d0 < 0:
                        N = -N
                    if N[0, 1] != N[1, 0]:
                        continue
                    key = (N[0, 0] % d, N[0, 1] % d, N[1, 1] % d)
                    if key not in seen:
                        seen[key] = D
    out = []
    for key, D in sorted(seen.items()):
        m12 = abs(d0)
        m13 = abs(int(C[0, 0]) * D[1, 0] - int(C[1, 0]) * D[0, 0])
        m14 = abs(int(C[0, 0]) * D[1, 1] - int(C[1, 0]) * D[0, 1])
        m23 = abs(int(C[0, 1]) * D[1, 0] - int(C[1, 1]) * D[0, 0])
        m24 = abs(int(C[0, 1]) * D[1, 1] - int(C[1, 1]) * D[0, 1])
        m34 = abs(int(D[0, 0]) * D[1, 1] - int(D[0, 1]) * D[1, 0])
        if math.gcd(math.gcd(math.gcd(m12, m13), math.gcd(m14, m23)),
                    math.gcd(m24, m34)) == 1:
            out.append(D)
    return out


@pytest.mark.parametrize(
    "C,count",
    [
        (np.eye(2, dtype=np.int64), 1),
        (np.diag([1, 2]), 1),
        (np.diag([2, 2]), 4),
    ],
)
def test_enumerate_D_classes_frozen_counts(C, count):
    classes = enumerate_D_classes(C)
    assert len(classes) == count


def test_enumerate_D_classes_identity_is_zero():
    (pair,) = enumerate_D_classes(np.eye(2, dtype=np.int64))
    assert np.array_equal(pair.D, np.zeros((2, 2), dtype=np.int64))


def test_enumerate_D_classes_vs_box():
    mats = [
        np.eye(2, dtype=np.int64),
        np.diag([1, 2]),
        np.diag([1, 3]),
        np.diag([2, 2]),
        np.array([[1, 1], [0, 2]]),
        np.array([[2, 1], [1, 2]]),
        np.array([[0, 1], [2, 0]]),
        np.array([[1, 2], [-1, 1]]),
    ]
    for C in mats:
        exact = enumerate_D_classes(C)
        box = dclasses_box(C)
        assert len(exact) == len(box), C
        # classes themselves must coincide, not just counts
        d0 = int(C[0, 0]) * int(C[1, 1]) - int(C[0, 1]) * int(C[1, 0])
        d = abs(d0)
        adj = np.array([[C[1, 1], -C[0, 1]], [-C[1, 0], C[0, 0]]], dtype=np.int64)
        sgn = 1 if d0 > 0 else -1

        def key(D):
            N = sgn * (adj @ D)
            return (N[0, 0] % d, N[0, 1] % d, N[1, 1] % d)

        assert sorted(key(p.D) for p in exact) == sorted(key(D) for D in box)


def test_enumerate_D_classes_count_unimodular_invariant():
    rng = random.Random(41)
    base = [np.diag([1, 4]), np.diag([2, 6]), np.array([[2, 1], [0, 3]])]
    for C in base:
        n = len(enumerate_D_classes(C))
        for _ in range(4):
            U, V = random_unimodular(rng), random_unimodular(rng)
            assert len(enumerate_D_classes(U @ C @ V)) == n


def test_kloosterman_identity_C():
    for Q, T in [(F(1, 0, 1), F(1, 0, 1)), (F(1, 1, 2), F(2, 0, 3)), (F(1, 0, 2), F(1, 1, 1))]:
        ps = kitaoka_kloosterman(Q, T, I2)
        assert ps.total_multiplicity() == 1
        assert ps.value() == pytest.approx(1.0, abs=1e-14)


def test_kloosterman_diag12_closed_form():
    # single admissible class D=diag(0,1); phase (q4+t4)/2
    for Q in [F(1, 0, 1), F(1, 1, 1), F(2, 1, 3)]:
        for T in [F(1, 0, 1), F(1, 0, 2), F(1, 1, 2)]:
            got = kitaoka_kloosterman(Q, T, np.diag([1, 2])).value()
            want = (-1.0) ** ((Q.c + T.c) % 2)
            assert got == pytest.approx(want, abs=1e-12)


def test_kloosterman_brute_force_diag12_value():
    # independent brute force: box-enumerate D, complete, sum phases
    Q, T = F(1, 0, 1), F(1, 0, 1)
    C = np.diag([1, 2]).astype(np.int64)
    total = 0.0 + 0.0j
    for D in dclasses_box(C):
        A, _ = complete_bottom_row(C, D)
        Cinv = np.linalg.inv(C.astype(float))
        phase = np.trace(A @ Cinv @ Q.gram() + Cinv @ D @ T.gram())
        total += np.exp(2j * np.pi * phase)
    got = kitaoka_kloosterman(Q, T, C).value()
    assert got == pytest.approx(total, abs=1e-9)


def test_kloosterman_completion_choice_invariance():
    # shifting A by S*C with integral symmetric S leaves the value fixed
    Q, T = F(1, 1, 2), F(1, 0, 1)
    C = np.diag([2, 2]).astype(np.int64)
    base = kitaoka_kloosterman(Q, T, C).value()
    total = 0.0 + 0.0j
    rng = random.Random(3)
    for pair in enumerate_D_classes(C):
        A, B = complete_bottom_row(C, pair.D)
        S = np.array([[rng.randrange(-2, 3), rng.randrange(-2, 3)], [0, 0]])
        S = S + S.T - np.diag(np.diag(S))
        A2 = A + S @ C
        Cinv = np.linalg.inv(C.astype(float))
        phase = np.trace(A2 @ Cinv @ Q.gram() + Cinv @ pair.D @ T.gram())
        total += np.exp(2j * np.pi * phase)
    assert total == pytest.approx(base, abs=1e-9)


def test_kloosterman_symmetry_small():
    rng = random.Random(7)
    mats = [np.diag([1, 2]), np.diag([2, 4]), np.array([[2, 1], [0, 3]]),
            np.array([[1, 1], [-1, 2]]), np.diag([3, 3])]
    for C in mats:
        for _ in range(5):
            Q = F(rng.randrange(1, 4), rng.randrange(0, 2), rng.randrange(1, 4))
            T = F(rng.randrange(1, 4), rng.randrange(0, 2), rng.randrange(1, 4))
            if not (Q.is_positive_definite() and T.is_positive_definite()):
                continue
            k1 = kitaoka_kloosterman(Q, T, C).value()
            k2 = kitaoka_kloosterman(T, Q, C.T).value()
            assert k1 == pytest.approx(k2, abs=1e-10 * max(1.0, abs(k1)))


def test_kloosterman_values_real():
    # D -> -D pairs classes with opposite phases
    rng = random.Random(19)
    for _ in range(10):
        C = np.array([[rng.randrange(1, 4), rng.randrange(0, 3)],
                      [0, rng.randrange(1, 4)]], dtype=np.int64)
        Q = F(1, rng.randrange(0, 2), rng.randrange(1, 3))
        v = kitaoka_kloosterman(Q, F(1, 0, 1), C).value()
        assert abs(v.imag) < 1e-10


def test_diag_table_matches_enumeration():
    for e1, e2 in [(1, 1), (1, 2), (2, 2), (2, 4), (3, 3), (1, 6)]:
        table = _diag_class_table(e1, e2)
        exact = enumerate_D_classes(np.diag([e1, e2]))
        assert table[0].size == len(exact)


def test_kloosterman_diag_fast_path_agrees():
    rng = random.Random(57)
    for e1, e2 in [(1, 1), (1, 3), (2, 2), (2, 6), (3, 3), (4, 4)]:
        for _ in range(4):
            Q = F(rng.randrange(1, 4), rng.randrange(-2, 3), rng.randrange(1, 4))
            T = F(rng.randrange(1, 4), rng.randrange(-2, 3), rng.randrange(1, 4))
            slow = kitaoka_kloosterman(Q, T, np.diag([e1, e2])).value()
            fast = _kloosterman_diag(Q.as_tuple(), T.as_tuple(), e1, e2).value()
            assert fast == pytest.approx(slow, abs=1e-10 * max(1.0, abs(slow)))


def test_kloosterman_diagonalization_identity():
    # K(Q,T;C) = K(Q[tU], T[V]; diag) for C = U^-1 diag V^-1
    rng = random.Random(71)
    for _ in range(12):
        C = np.array([[rng.randrange(-3, 4) for _ in range(2)] for _ in range(2)],
                     dtype=np.int64)
        det = int(C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0])
        if det == 0 or abs(det) > 12:
            continue
        Q = F(rng.randrange(1, 3), rng.randrange(0, 2), rng.randrange(1, 3))
        T = F(rng.randrange(1, 3), rng.randrange(0, 2), rng.randrange(1, 3))
        dec = elementary_divisors(C)
        Qp = Q.transform(dec.U.T)
        Tp = T.transform(dec.V)
        lhs = kitaoka_kloosterman(Q, T, C).value()
        rhs = _kloosterman_diag(Qp.as_tuple(), Tp.as_tuple(), dec.c1, dec.c2).value()
        assert lhs == pytest.approx(rhs, abs=1e-9 * max(1.0, abs(lhs)))


def test_kloosterman_envelope_positive():
    v = kloosterman_envelope(np.diag([2, 4]), F(1, 0, 1))
    assert v > 0
