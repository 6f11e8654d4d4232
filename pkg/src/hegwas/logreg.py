"""Homomorphic logistic regression with the degree-7 sigmoid and fixed curvature.

One iteration: p = sigma7(X beta); g = X^T (y - p); beta += 4 (X^T X)^-1 g.
The transpose product reuses the CP columns of X as row-packed rows of X^T, so
no extra encryption of the transpose is needed here.
"""
from __future__ import annotations

from dataclasses import dataclass

from .ckks import Ciphertext, HeEngine, mult_integer, sub
from .errors import BudgetDepletedError, InputError
from .matrix import CPMatrix, REPMatrix, RPMatrix, cp_matvec, rp_matvec
from .oracle import SIGMA7_C1, SIGMA7_C3, SIGMA7_C5, SIGMA7_C7


@dataclass
class LogRegInputs:
    X: CPMatrix            # n x (d+1), leading ones column
    Xt_rep: REPMatrix      # X^T in expanded form, consumed by the projector build
    XtX_inv: CPMatrix      # (d+1) x (d+1), inverted in cleartext preprocessing
    y: Ciphertext          # binary response


@dataclass
class LogRegState:
    beta: Ciphertext
    p_prev: Ciphertext
    iteration: int


def sigmoid7(engine: HeEngine, ct: Ciphertext) -> Ciphertext:
    """Slotwise degree-7 sigmoid approximation; three ciphertext-mult levels deep.

    Evaluated as 0.5 + u*A + u4*(u*B) with u = x/8, A = c1 + c3 u^2 and
    B = c5 + c7 u^2, which keeps the u-chain and the square-chain balanced.
    """
    u = engine.mult_const(ct, 0.125)
    u2 = engine.mult(u, u)
    u4 = engine.mult(u2, u2)
    a = engine.add_const(engine.mult_plain(u2, engine.constant(SIGMA7_C3)), SIGMA7_C1)
    b = engine.add_const(engine.mult_plain(u2, engine.constant(SIGMA7_C7)), SIGMA7_C5)
    ua = engine.mult(u, a)
    ub = engine.mult(u, b)
    f = engine.mult(u4, ub)
    return engine.add_const(engine.add(ua, f), 0.5)


def transpose_view(x: CPMatrix) -> RPMatrix:
    """The CP columns of X are exactly the rows of X^T in row-packed form."""
    return RPMatrix(rows_ct=x.cols, rows=x.cols_logical, cols_logical=x.rows)


def hom_logreg(engine: HeEngine, inputs: LogRegInputs, kappa: int) -> tuple[Ciphertext, Ciphertext]:
    """Run kappa update iterations; returns (beta, stale probabilities).

    The returned probability vector is the one computed from the beta entering
    the final iteration, which is what the downstream statistic consumes.
    """
    if kappa < 1:
        raise InputError(f"kappa must be at least 1, got {kappa}")
    xt = transpose_view(inputs.X)
    beta = sub(inputs.y, inputs.y)  # exact zero vector at the response's level/scale
    p_prev = None
    for iteration in range(1, kappa + 1):
        try:
            xb = cp_matvec(engine, inputs.X, beta)
            # sigmoid7 fits the reflected sigmoid; feed it -X beta so the
            # probabilities increase with the linear predictor.
            p = sigmoid7(engine, mult_integer(xb, -1))
            p_prev = p
            residual = engine.sub(inputs.y, p)
            grad = rp_matvec(engine, xt, residual)
            delta = mult_integer(cp_matvec(engine, inputs.XtX_inv, grad), 4)
            beta = engine.add(beta, delta)
        except BudgetDepletedError as exc:
            raise BudgetDepletedError(
                f"noise budget exhausted during iteration {iteration} of {kappa}: {exc}"
            ) from exc
    return beta, p_prev
