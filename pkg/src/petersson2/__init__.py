"""Geometric side of a Petersson-type formula for degree-2 Siegel cusp forms.

The package computes the Fourier-coefficient sum A(Q, N; T) of a degree-2
Poincare series attached to a positive definite half-integral form Q for the
congruence subgroup of level N, split by the rank of the lower-left block into
a form-equivalence count, a rank-1 layer (closed Bessel/Gauss-sum terms) and a
rank-2 layer (Kloosterman-type sums against a Bessel kernel integral), together
with truncation-tail reports and a brute-force torus-integration oracle.
"""

from petersson2.forms import (
    ElementaryDivisorDecomposition,
    HalfIntegralForm,
    IntegralSymmetric,
    content,
    coset_reps_P,
    delta,
    elementary_divisors,
    form_minimum,
    gauss_reduce,
    primitive_vectors_with_value,
    repr_count,
)

__version__ = "0.1.0"

__all__ = [
    "ElementaryDivisorDecomposition",
    "HalfIntegralForm",
    "IntegralSymmetric",
    "content",
    "coset_reps_P",
    "delta",
    "elementary_divisors",
    "form_minimum",
    "gauss_reduce",
    "primitive_vectors_with_value",
    "repr_count",
    "__version__",
]
