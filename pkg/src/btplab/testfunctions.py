"""Scalar test fields with analytic derivatives through order four.

Quadrature and finite-difference checks need exact derivatives: the fourth
derivative of a payoff enters the elliptic verifications, and estimating it
numerically from a noisy field amplifies error like h**-4.  Every registered
function therefore carries closed-form gradient, Laplacian, gradient of the
Laplacian, Hessian of the Laplacian, and bi-Laplacian.

Conventions: for ``dim == 1`` all callables take and return plain float
arrays (shape ``(...)``).  For ``dim == 2`` points have a trailing axis of
length 2; ``grad``/``grad_laplacian`` return shape ``(..., 2)`` and
``hessian_laplacian`` returns ``(..., 2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class TestFunction:
    name: str
    dim: int
    fn: Callable
    grad: Callable
    laplacian: Callable
    grad_laplacian: Callable
    hessian_laplacian: Callable
    bilaplacian: Callable
    growth_degree: int  # polynomial growth bound, gates quadrature truncation

    def __call__(self, y):
        return self.fn(y)


def _fn1d(name, f, d1, d2, d3, d4, growth):
    # in 1D: grad=f', laplacian=f'', grad(lap)=f''', hess(lap)=bilap=f''''
    return TestFunction(
        name=name,
        dim=1,
        fn=f,
        grad=d1,
        laplacian=d2,
        grad_laplacian=d3,
        hessian_laplacian=d4,
        bilaplacian=d4,
        growth_degree=growth,
    )


def _gauss_d(y):
    e = np.exp(-np.asarray(y) ** 2)
    return e


_REGISTRY: dict[str, TestFunction] = {}


def register(tf: TestFunction) -> TestFunction:
    _REGISTRY[tf.name] = tf
    return tf


register(_fn1d(
    "constant",
    lambda y: np.ones_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    growth=0,
))

register(_fn1d(
    "linear",
    lambda y: np.asarray(y, dtype=float),
    lambda y: np.ones_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    growth=1,
))

register(_fn1d(
    "square",
    lambda y: np.asarray(y, dtype=float) ** 2,
    lambda y: 2.0 * np.asarray(y, dtype=float),
    lambda y: np.full_like(np.asarray(y, dtype=float), 2.0),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    growth=2,
))

register(_fn1d(
    "cube",
    lambda y: np.asarray(y, dtype=float) ** 3,
    lambda y: 3.0 * np.asarray(y, dtype=float) ** 2,
    lambda y: 6.0 * np.asarray(y, dtype=float),
    lambda y: np.full_like(np.asarray(y, dtype=float), 6.0),
    lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    growth=3,
))

register(_fn1d(
    "gauss",
    lambda y: _gauss_d(y),
    lambda y: -2.0 * np.asarray(y, dtype=float) * _gauss_d(y),
    lambda y: (4.0 * np.asarray(y, dtype=float) ** 2 - 2.0) * _gauss_d(y),
    lambda y: (12.0 * np.asarray(y, dtype=float) - 8.0 * np.asarray(y, dtype=float) ** 3) * _gauss_d(y),
    lambda y: (16.0 * np.asarray(y, dtype=float) ** 4 - 48.0 * np.asarray(y, dtype=float) ** 2 + 12.0) * _gauss_d(y),
    growth=0,
))

register(_fn1d(
    "cosine",
    lambda y: np.cos(np.asarray(y, dtype=float)),
    lambda y: -np.sin(np.asarray(y, dtype=float)),
    lambda y: -np.cos(np.asarray(y, dtype=float)),
    lambda y: np.sin(np.asarray(y, dtype=float)),
    lambda y: np.cos(np.asarray(y, dtype=float)),
    growth=0,
))


def _h2d_fn(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0] ** 2 - p[..., 1] ** 2


def _h2d_grad(p):
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    out[..., 0] = 2.0 * p[..., 0]
    out[..., 1] = -2.0 * p[..., 1]
    return out


def _h2d_zero(p):
    p = np.asarray(p, dtype=float)
    return np.zeros(p.shape[:-1])


def _h2d_zerovec(p):
    p = np.asarray(p, dtype=float)
    return np.zeros_like(p)


def _h2d_zeromat(p):
    p = np.asarray(p, dtype=float)
    return np.zeros(p.shape[:-1] + (2, 2))


register(TestFunction(
    name="harmonic2d",
    dim=2,
    fn=_h2d_fn,
    grad=_h2d_grad,
    laplacian=_h2d_zero,
    grad_laplacian=_h2d_zerovec,
    hessian_laplacian=_h2d_zeromat,
    bilaplacian=_h2d_zero,
    growth_degree=2,
))


def get(name: str) -> TestFunction:
    """Look a test function up by registry name."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown test function {name!r}; known: {sorted(_REGISTRY)}"
        ) from None


def names() -> list[str]:
    return sorted(_REGISTRY)
