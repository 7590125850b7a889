"""Fixed-bias soft-margin SVM trained by projected gradient ascent on the dual.

The dual objective

    W(alpha) = sum_i alpha_i - 1/2 sum_ij y_i y_j alpha_i alpha_j K(x_i, x_j)

is maximized subject to the box 0 <= alpha_i <= C; the bias is held at zero so
no equality constraint applies. The linear kernel matrix K = T Tt is built
once with partition_multiply; each ascent step needs K (y .* alpha), which is
row-local in K, so it runs through broadcast_multiply with the small vector
broadcast to all workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multiply import PartitionSchema, broadcast_multiply, partition_multiply
from .sparse import DenseMatrix, DenseVector, SparseMatrix, transpose

__all__ = ["SvmProblem", "SvmState", "svm_build_kernel", "svm_gradient",
           "svm_objective", "svm_train", "svm_predict", "read_svm_file", "accuracy"]


@dataclass(frozen=True)
class SvmProblem:
    """Training matrix (rows are examples), labels in {-1,+1}, box bound C,
    and ascent step size eta."""

    T: SparseMatrix
    y: DenseVector
    C: float = 1.0
    eta: float = 0.001

    def __post_init__(self):
        if len(self.y) != self.T.rows:
            raise ValueError(f"{len(self.y)} labels for {self.T.rows} examples")
        if not np.all(np.isin(self.y.values, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if self.C < 0:
            raise ValueError("C must be >= 0")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")


@dataclass
class SvmState:
    """Dual variables, the Gram matrix, and the objective history."""

    alpha: DenseVector
    K: SparseMatrix
    objective_history: list = field(default_factory=list)


def svm_build_kernel(T: SparseMatrix, schema=None, workers: int = 1) -> SparseMatrix:
    """Linear kernel K = T Tt; symmetric, diagonal holds squared row norms.

    The default schema splits only the example dimension (never the features,
    which form the inner dimension) and is independent of the worker count so
    the kernel is bit-identical however many workers run the build.
    """
    Tt = transpose(T)
    if schema is None:
        side = min(8, T.rows)
        schema = PartitionSchema(side, 1, side)
    K, _ = partition_multiply(T, Tt, schema, "rand", workers)
    return K


def _kernel_dot(K: SparseMatrix, coeff: np.ndarray, workers: int) -> np.ndarray:
    """K @ coeff computed row-by-row against the broadcast coefficient vector."""
    col = broadcast_multiply(K, DenseMatrix(coeff.reshape(-1, 1)), workers)
    out = np.zeros(K.rows)
    for i, cols, vals in col.iter_rows():
        if cols.size:
            out[i] = vals[0]
    return out


def svm_gradient(state: SvmState, prob: SvmProblem, workers: int = 1) -> DenseVector:
    """Ascent direction g_i = eta * (1 - y_i * sum_j y_j alpha_j K_ij)."""
    y = prob.y.values
    d = y * state.alpha.values
    kd = _kernel_dot(state.K, d, workers)
    return DenseVector(prob.eta * (1.0 - y * kd))


def svm_objective(alpha: np.ndarray, y: np.ndarray, K_dense: np.ndarray) -> float:
    q = y * alpha
    return float(alpha.sum() - 0.5 * q @ (K_dense @ q))


def svm_train(prob: SvmProblem, iters: int, workers: int = 1, schema=None) -> SvmState:
    """Projected gradient ascent from alpha = 0, clipping into [0, C] each step."""
    if iters < 0:
        raise ValueError("iters must be >= 0")
    K = svm_build_kernel(prob.T, schema, workers)
    K_dense = K.to_dense()
    alpha = np.zeros(prob.T.rows)
    state = SvmState(DenseVector(alpha), K, [svm_objective(alpha, prob.y.values, K_dense)])
    for _ in range(iters):
        g = svm_gradient(state, prob, workers)
        alpha = np.clip(state.alpha.values + g.values, 0.0, prob.C)
        state.alpha = DenseVector(alpha)
        state.objective_history.append(svm_objective(alpha, prob.y.values, K_dense))
    return state


def svm_predict(state: SvmState, prob: SvmProblem, Q: SparseMatrix,
                workers: int = 1) -> DenseVector:
    """Raw decision scores f(q) = sum_j alpha_j y_j <x_j, q> (bias fixed at 0);
    classify by sign."""
    if Q.cols != prob.T.cols:
        raise ValueError(f"query width {Q.cols} != training width {prob.T.cols}")
    d = prob.y.values * state.alpha.values
    # w = Tt d, then scores = Q w: two row-local products.
    w_col = broadcast_multiply(transpose(prob.T), DenseMatrix(d.reshape(-1, 1)), workers)
    w = np.zeros(prob.T.cols)
    for i, cols, vals in w_col.iter_rows():
        if cols.size:
            w[i] = vals[0]
    scores = broadcast_multiply(Q, DenseMatrix(w.reshape(-1, 1)), workers)
    out = np.zeros(Q.rows)
    for i, cols, vals in scores.iter_rows():
        if cols.size:
            out[i] = vals[0]
    return DenseVector(out)


def accuracy(scores: DenseVector, y: DenseVector) -> float:
    """Fraction of sign agreements; a zero score counts as the negative class."""
    pred = np.where(scores.values > 0, 1.0, -1.0)
    return float(np.mean(pred == y.values))


def read_svm_file(path, cols=None):
    """Parse label-prefixed sparse examples: '<label> <index>:<value> ...'.

    Labels may be -1/+1 already or any two distinct values, which are mapped
    to -1 (smaller) and +1 (larger). Returns (T, y).
    """
    from .io import ParseError

    labels = []
    rows = []
    max_col = -1
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            toks = line.split()
            try:
                labels.append(float(toks[0]))
            except ValueError:
                raise ParseError(path, lineno, f"bad label {toks[0]!r}") from None
            entries = []
            prev = -1
            for tok in toks[1:]:
                c, colon, v = tok.partition(":")
                if not colon:
                    raise ParseError(path, lineno, f"bad feature {tok!r}, expected index:value")
                try:
                    col = int(c)
                    val = float(v)
                except ValueError:
                    raise ParseError(path, lineno, f"bad feature {tok!r}") from None
                if col <= prev:
                    raise ParseError(path, lineno, f"feature index {col} not ascending")
                prev = col
                entries.append((col, val))
            if entries:
                max_col = max(max_col, entries[-1][0])
            rows.append(entries)
    if not rows:
        raise ParseError(path, 1, "no examples in file")
    width = cols if cols is not None else max_col + 1
    if max_col >= width:
        raise ParseError(path, 1, f"feature index {max_col} exceeds width {width}")
    if width < 1:
        raise ParseError(path, 1, "no features in file")

    uniq = sorted(set(labels))
    if set(uniq) <= {-1.0, 1.0}:
        y = labels
    elif len(uniq) == 2:
        y = [-1.0 if v == uniq[0] else 1.0 for v in labels]
    else:
        raise ParseError(path, 1, f"expected two label values, found {len(uniq)}")
    T = SparseMatrix.from_rows(len(rows), width, rows)
    return T, DenseVector(y)
