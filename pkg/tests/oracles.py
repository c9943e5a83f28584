"""Independent reference implementations used to freeze expected values.

Each oracle is intentionally brute force and shares no code path with the
implementation it checks.
"""

import numpy as np


def greedy_pivot_oracle(a, max_pivots, tol=1e-12):
    """Step-by-step greedy pivoting that re-orthogonalizes from scratch.

    At every step, every remaining column of the original matrix is
    orthogonalized against the already-selected columns (via a fresh QR of
    the selection) and the largest residual norm wins, lowest index on ties.
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[1]
    selected = []
    norms = []
    for _ in range(max_pivots):
        if selected:
            q, _ = np.linalg.qr(a[:, selected])
        best_j, best_norm = -1, -1.0
        for j in range(m):
            if j in selected:
                continue
            c = a[:, j]
            if selected:
                c = c - q @ (q.T @ c)
            nrm = float(np.linalg.norm(c))
            if nrm > best_norm:
                best_norm, best_j = nrm, j
        if best_j < 0 or best_norm < tol:
            return selected, norms, True
        selected.append(best_j)
        norms.append(best_norm)
    return selected, norms, False


def prox_l1_grid_oracle(z, tau, lo=-5.0, hi=5.0, step=1e-5):
    """Grid-search minimizer of 0.5*(x - z)**2 + tau*|x| over [lo, hi]."""
    xs = np.arange(lo, hi + step, step)
    objective = 0.5 * (xs - z) ** 2 + tau * np.abs(xs)
    return float(xs[np.argmin(objective)])


def least_squares_normal_equations(m, y):
    """Solve min ||m a - y|| via the normal equations."""
    return np.linalg.solve(m.T @ m, m.T @ y)


def within_tolerance_count(x_true, x_hat, tol):
    """Direct loop count of |x_true - x_hat| <= tol."""
    hits = 0
    for a, b in zip(x_true, x_hat):
        if abs(a - b) <= tol:
            hits += 1
    return hits / len(x_true)


def mp_median_beta1_analytic():
    """Median of the Marchenko-Pastur law at aspect ratio 1.

    For beta = 1 the CDF has the closed form
    ``F(x) = (2/pi) * (theta + sin(theta)cos(theta))`` with
    ``theta = asin(sqrt(x)/2)``; solve F(x) = 1/2 by bisection.
    """
    def cdf(x):
        theta = np.arcsin(np.sqrt(x) / 2.0)
        return (2.0 / np.pi) * (theta + np.sin(theta) * np.cos(theta))

    lo, hi = 0.0, 4.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def full_pipeline_oracle(x_train, x_new, pcp_fn, tol=1e-7):
    """Straight-line recomputation of train + predict for one region.

    Mirrors the documented pipeline arithmetic (centering, robust split,
    cleaned mean, truncated modes, QR sensors, least-squares lift) without
    going through the pipeline orchestration code.
    """
    import shimsense as ss

    mean = x_train.mean(axis=1)
    centered = x_train - mean[:, None]
    dec = pcp_fn(centered, ss.PcpConfig(tol=tol))
    mean = mean - dec.sparse.mean(axis=1)
    u, s, vt = np.linalg.svd(dec.low_rank, full_matrices=False)
    data_s = np.linalg.svd(centered, compute_uv=False)
    r = ss.optimal_rank(data_s, *x_train.shape)
    r = min(max(r, 1), x_train.shape[1] - 1)
    # deterministic signs as documented: first nonzero entry nonnegative
    for j in range(r):
        col = u[:, j]
        nz = np.nonzero(col)[0]
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
    modes = u[:, :r]
    sel, _, _ = greedy_pivot_oracle(modes.T, r)
    sel = np.asarray(sel)
    sampled = modes[sel]
    coeff = np.linalg.lstsq(sampled, x_new[sel] - mean[sel], rcond=None)[0]
    return mean + modes @ coeff, sel
