"""Pure numpy implementation of the Monte Carlo kernels.

Vectorized across trials.  Used when the compiled extension is missing or
``FAIRROUND_BACKEND=python``; results are bit-identical to ``_kernels``.
Summations that feed comparisons run in ascending job order to match the
C loops exactly.
"""

from __future__ import annotations

import numpy as np

from . import rng as R

BAD_HEIGHT = 0.09
SHIFT = 0.34
COIN_P = 0.5


def _tickets(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(k, cdf_rows.shape[1] - 1)


def _resolve_core(x, labels, cdf, prefix, max_iters, independent):
    """Resolve a block of trials.  ``labels`` is (T, m, n) or (1, m, n)."""
    T = prefix.shape[0]
    m, n = x.shape
    assign = np.full((T, n), -1, dtype=np.int32)
    iters = np.zeros((T, n), dtype=np.int32)
    tickets1 = np.zeros((T, n), dtype=np.int32)
    jobs = np.arange(n)
    for it in range(1, max_iters + 1):
        act = assign < 0
        rows = np.nonzero(act.any(axis=1))[0]
        if rows.size == 0:
            break
        act = act[rows]
        pre = prefix[rows]
        lab = labels if labels.shape[0] == 1 else labels[rows]
        A = rows.size
        rec = np.zeros((A, m, n), dtype=bool)
        for i in range(m):
            if independent:
                u = R.to_unit_np(R.draw_np(pre[:, None], it, i, jobs[None, :], R.GROUP))
                rec[:, i, :] = act & (u < x[i][None, :])
                continue
            lab_i = lab[:, i, :]
            for g in np.unique(lab_i):
                members = act & (lab_i == g)
                has = members.any(axis=1)
                if not has.any():
                    continue
                cum = np.cumsum(np.where(members, x[i][None, :], 0.0), axis=1)
                u = R.to_unit_np(R.draw_np(pre, it, i, int(g), R.GROUP))
                hit = u[:, None] < cum
                any_hit = hit.any(axis=1) & has
                first = hit.argmax(axis=1)
                rr = np.nonzero(any_hit)[0]
                rec[rr, i, first[rr]] = True
        rec &= (x > 0)[None, :, :]
        a_idx, i_idx, j_idx = np.nonzero(rec)
        real = np.zeros((A, m, n), dtype=np.int64)
        if a_idx.size:
            u = R.to_unit_np(R.draw_np(pre[a_idx], it, i_idx, j_idx, R.TICKET))
            real[a_idx, i_idx, j_idx] = _tickets(cdf[i_idx, j_idx], u)
        total = real.sum(axis=1)
        if it == 1:
            tickets1[rows] = total
        win_a, win_j = np.nonzero(act & (total > 0))
        if win_a.size:
            h = R.draw_np(pre[win_a], it, 0, win_j, R.PICK)
            r = R.to_index_np(h, total[win_a, win_j])
            csum = np.cumsum(real[win_a, :, win_j], axis=1)
            mach = (csum > r[:, None]).argmax(axis=1)
            assign[rows[win_a], win_j] = mach
            iters[rows[win_a], win_j] = it
    return assign, iters, tickets1


def resolve_batch(x, labels, cdf, seed, trial_start, trials, max_iters, independent):
    prefix = R.trial_prefix_np(seed, np.arange(trial_start, trial_start + trials, dtype=np.uint64))
    return _resolve_core(
        np.asarray(x, dtype=float), np.asarray(labels, dtype=np.int64)[None], cdf, prefix, max_iters, independent
    )


def grid_index(theta: np.ndarray, rho: np.ndarray, pow10: np.ndarray, kmin: int) -> np.ndarray:
    """k with rho*10^k < theta <= rho*10^(k+1), using the shared power table."""
    top = pow10.size - 2
    k = np.floor(np.log10(theta) - np.log10(rho)).astype(np.int64)
    k = np.clip(k, kmin, kmin + top)
    for _ in range(64):
        lo = rho * pow10[k - kmin] >= theta
        hi = rho * pow10[k - kmin + 1] < theta
        if not (lo.any() or hi.any()):
            break
        k = k - lo + hi
    return k


def _schedule_objective(assign, theta_a, p_a, w):
    T, n = assign.shape
    obj = np.zeros(T)
    for j in range(n):
        c = p_a[:, j].copy()
        for jj in range(n):
            if jj == j:
                continue
            earlier = theta_a[:, jj] < theta_a[:, j]
            if jj < j:
                earlier |= theta_a[:, jj] == theta_a[:, j]
            c += np.where((assign[:, jj] == assign[:, j]) & earlier, p_a[:, jj], 0.0)
        obj = obj + w[j] * c
    return obj


def sched_context(tb, prefix):
    """Representative thetas, association flags and grid indices per trial.

    Returns ``(I, J, theta, assoc, k, rho)`` where the last four are indexed
    (trial, pair) over the pairs ``(I[q], J[q])`` with positive height.
    """
    x, p = tb.x, tb.p
    I, J = np.nonzero(x > 0)
    xp, pp = x[I, J], p[I, J]
    u = R.to_unit_np(R.draw_np(prefix[:, None], 0, I[None, :], J[None, :], R.REP))
    cdf = tb.rep_cdf[I, J]  # (P, Rmax)
    r = (u[:, :, None] >= cdf[None, :, :]).sum(axis=2)
    r = np.minimum(r, tb.rep_cnt[I, J][None, :] - 1)
    s = tb.rep_s[I[None, :], J[None, :], r]
    tau = pp * R.to_open_unit_np(R.draw_np(prefix[:, None], 0, I[None, :], J[None, :], R.TAU))
    shift = np.where(xp >= BAD_HEIGHT, SHIFT * (s + xp * pp), SHIFT * s)
    theta_p = (s + shift) + tau
    bad = (10.0 * s < pp) & (xp < BAD_HEIGHT)
    rho = R.rho_from_np(R.draw_np(prefix, 0, 0, 0, R.RHO))
    coin = R.to_unit_np(R.draw_np(prefix[:, None], 0, I[None, :], J[None, :], R.COIN)) < COIN_P
    assoc_p = bad & coin
    k_p = grid_index(theta_p, np.broadcast_to(rho[:, None], theta_p.shape), tb.pow10, tb.kmin)
    return I, J, theta_p, assoc_p, k_p, rho


def sched_batch(tb, seed, trial_start, trials, baseline, max_iters):
    """Objective of the rounding (or the independent baseline) per trial."""
    prefix = R.trial_prefix_np(seed, np.arange(trial_start, trial_start + trials, dtype=np.uint64))
    x, p, w = tb.x, tb.p, tb.w
    m, n = x.shape
    T = trials
    rows = np.arange(T)
    if baseline:
        u = R.to_unit_np(R.draw_np(prefix[:, None], 0, 0, np.arange(n)[None, :], R.BASE))
        q = (u[:, :, None] >= tb.base_cdf[None, :, :]).sum(axis=2)
        q = np.minimum(q, tb.base_cnt[None, :] - 1)
        jj = np.broadcast_to(np.arange(n), (T, n))
        mi = tb.base_i[jj, q]
        s = tb.base_s[jj, q]
        pa = p[mi, jj]
        tau = pa * R.to_open_unit_np(R.draw_np(prefix[:, None], 0, mi, jj, R.TAU))
        theta_a = s + tau
        obj = _schedule_objective(mi.astype(np.int32), theta_a, pa, w)
        return obj, np.zeros(T, dtype=np.int32)

    I, J, theta_p, assoc_p, k_p, _ = sched_context(tb, prefix)

    theta = np.zeros((T, m, n))
    theta[:, I, J] = theta_p
    assoc = np.zeros((T, m, n), dtype=bool)
    assoc[:, I, J] = assoc_p
    kk = np.zeros((T, m, n), dtype=np.int64)
    kk[:, I, J] = k_p

    labels = np.broadcast_to(np.arange(n, dtype=np.int64), (T, m, n)).copy()
    for i in range(m):
        for j in range(n):
            if x[i, j] <= 0:
                continue
            lead = np.full(T, n, dtype=np.int64)
            total = np.zeros(T)
            for jj in range(n):
                same = assoc[:, i, j] & assoc[:, i, jj] & (kk[:, i, jj] == kk[:, i, j])
                total = total + np.where(same, x[i, jj], 0.0)
                lead = np.where(same & (lead == n), jj, lead)
            grouped = assoc[:, i, j] & (total <= 1.0)
            labels[:, i, j] = np.where(grouped, lead, j)

    assign, iters, _ = _resolve_core(x, labels, tb.cdf, prefix, max_iters, False)
    failed = (assign < 0).any(axis=1)
    a64 = np.maximum(assign, 0).astype(np.int64)
    jj = np.broadcast_to(np.arange(n), (T, n))
    theta_a = theta[rows[:, None], a64, jj]
    pa = p[a64, jj]
    obj = _schedule_objective(assign, theta_a, pa, w)
    best = iters.max(axis=1).astype(np.int32)
    obj[failed] = np.nan
    best[failed] = -1
    return obj, best
