"""Per-round kernels over the stacked (n_agents, dim) iterate arrays.

Both backends evaluate every element with the same operation order, so a
run is reproducible within a backend; the two backends are not promised to
agree bit-for-bit with each other.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


@njit
def _trigger_nb(W, W_hat, threshold, force, fired, post_l1):
    n, d = W.shape
    for i in range(n):
        s = 0.0
        for t in range(d):
            s += abs(W[i, t] - W_hat[i, t])
        if force or s >= threshold:
            fired[i] = True
            for t in range(d):
                W_hat[i, t] = W[i, t]
            post_l1[i] = 0.0
        else:
            fired[i] = False
            post_l1[i] = s


def _trigger_np(W, W_hat, threshold, force, fired, post_l1):
    n = W.shape[0]
    for i in range(n):
        s = float(np.add.reduce(np.abs(W[i] - W_hat[i])))
        if force or s >= threshold:
            fired[i] = True
            W_hat[i] = W[i]
            post_l1[i] = 0.0
        else:
            fired[i] = False
            post_l1[i] = s


@njit
def _update_nb(W, W_hat, indptr, indices, beta, alpha, G):
    n, d = W.shape
    step_sq = 0.0
    acc = np.empty(d)
    for i in range(n):
        acc[:] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for t in range(d):
                acc[t] += W_hat[i, t] - W_hat[j, t]
        for t in range(d):
            new = W[i, t] - beta * acc[t] - alpha * G[i, t]
            diff = new - W[i, t]
            step_sq += diff * diff
            W[i, t] = new
    return step_sq


def _update_np(W, W_hat, indptr, indices, beta, alpha, G):
    n, d = W.shape
    step_sq = 0.0
    acc = np.empty(d, dtype=W.dtype)
    for i in range(n):
        acc[:] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += W_hat[i] - W_hat[indices[p]]
        new = W[i] - beta * acc - alpha * G[i]
        diff = new - W[i]
        step_sq += float(diff @ diff)
        W[i] = new
    return step_sq


def trigger_broadcast(W, W_hat, threshold, force, fired, post_l1):
    """Event check for every agent; triggered rows get ``W_hat[i] = W[i]``.

    ``post_l1`` receives ||w_i - w_hat_i||_1 after the decision (0 for agents
    that fired).
    """
    fn = _trigger_nb if USE_NUMBA else _trigger_np
    fn(W, W_hat, float(threshold), bool(force), fired, post_l1)


def consensus_update(W, W_hat, indptr, indices, beta, alpha, G):
    """In place: w_i -= beta * sum_j (w_hat_i - w_hat_j) + alpha * g_i.

    Returns ||w(k+1) - w(k)||^2 summed over agents.
    """
    fn = _update_nb if USE_NUMBA else _update_np
    return fn(W, W_hat, indptr, indices, float(beta), float(alpha), G)


def l1_deviation(W, W_hat):
    return np.abs(W - W_hat).sum(axis=1)
