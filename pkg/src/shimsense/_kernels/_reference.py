"""Pure-NumPy kernel backend.

Mirrors the compiled backend in ``_fastkernels.pyx`` function for function;
the dispatcher in ``__init__`` picks whichever is available.  Both backends
recompute residual column norms from the deflated matrix at every pivot step
(no downdating), so their pivot choices agree except on exact floating-point
ties.
"""

import numpy as np


def pivot_columns(a, max_pivots, tol):
    """Greedy column pivoting by maximal residual 2-norm.

    At each step the remaining column with the largest residual norm (after
    orthogonalization against all previously selected columns) is chosen;
    ties break toward the lowest column index.  Stops early when the best
    residual norm drops below ``tol``.

    Returns ``(pivots, norms, rank_deficient)`` where ``norms[i]`` is the
    residual norm of pivot ``i`` at its selection step.
    """
    r = np.array(a, dtype=np.float64, copy=True, order="C")
    n_cols = r.shape[1]
    pivots = np.empty(max_pivots, dtype=np.int64)
    norms = np.empty(max_pivots, dtype=np.float64)
    alive = np.ones(n_cols, dtype=bool)
    count = 0
    rank_deficient = False
    for _ in range(max_pivots):
        sq = np.einsum("ij,ij->j", r, r)
        sq[~alive] = -1.0
        j = int(np.argmax(sq))  # argmax returns the first maximum
        best = np.sqrt(max(sq[j], 0.0))
        if best < tol:
            rank_deficient = True
            break
        pivots[count] = j
        norms[count] = best
        count += 1
        q = r[:, j] / best
        alive[j] = False
        r -= np.outer(q, q @ r)
        r[:, j] = 0.0
    return pivots[:count].copy(), norms[:count].copy(), rank_deficient


def soft_threshold(x, tau, out):
    """Elementwise shrinkage sign(x) * max(|x| - tau, 0) into ``out``."""
    np.absolute(x, out=out)
    out -= tau
    np.maximum(out, 0.0, out=out)
    out *= np.sign(x)
    return out
