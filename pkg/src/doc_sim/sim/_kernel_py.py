"""Pure-numpy mini-slot contention kernel (fallback backend).

Same contract and stream discipline as the compiled kernel in
``_kernel.pyx``.  Slots are processed in blocks: contention draws and the
transmit decisions of memoryless winners vectorize, while interval cut-off
and time-correlated (Jakes) winners are resolved in a sparse walk over the
success slots.  Because draws are counter-based, slots beyond the interval
boundary are discarded by simply not advancing the stream counters.
"""

from __future__ import annotations

import numpy as np

from .. import _rng

KIND_IID = 0
KIND_JAKES = 1
KIND_DISCRETE = 2

BLOCK = 4096


def _contention_block(p, contend_key, contend_ctr, b):
    n = p.shape[0]
    u = np.empty((b, n))
    for i in range(n):
        u[:, i] = _rng.draw_block(int(contend_key[i]), int(contend_ctr[i]), b)
    contend = u < p[None, :]
    return contend.sum(axis=1), contend


def _memoryless_decisions(succ, winner, kind, w, rho, u_giveup, thr_rate,
                          table_rates, u_edges, table_len, gain_key, gain_ctr):
    """Pre-draw gain uniforms and decide transmit/rate for non-Jakes winners."""
    transmit = np.zeros(succ.size, dtype=bool)
    rate = np.zeros(succ.size)
    for i in np.unique(winner):
        if kind[i] == KIND_JAKES:
            continue
        rows = np.flatnonzero(winner == i)
        ug = _rng.draw_block(int(gain_key[i]), int(gain_ctr[i]), rows.size)
        if kind[i] == KIND_DISCRETE:
            edges = u_edges[i, : int(table_len[i])]
            idx = np.searchsorted(edges, ug, side="left") - 1
            rk = np.where(idx >= 0, table_rates[i][np.maximum(idx, 0)], 0.0)
            tr = rk >= thr_rate[i]
            transmit[rows] = tr
            rate[rows] = np.where(tr, rk, 0.0)
        else:
            tr = ug >= u_giveup[i]
            transmit[rows] = tr
            if tr.any():
                g = -np.log1p(-ug[tr])
                rate[rows[tr]] = w[i] * np.log2(1.0 + rho[i] * g)
    return transmit, rate


def run_interval(t_total, t_tx, start_time,
                 p, kind, w, rho,
                 u_giveup, gain_giveup, thr_rate,
                 table_rates, u_edges, table_len,
                 jakes_omega, jakes_phase,
                 contend_key, contend_ctr,
                 gain_key, gain_ctr,
                 n_succ, hold_sum, bits, tx_count):
    """Run one controller interval; returns (elapsed, idle, collisions)."""
    time = 0
    idle = 0
    coll = 0
    hold_tx = int(t_tx) + 1
    any_jakes = bool(np.any(kind == KIND_JAKES))

    while time < t_total:
        b = int(min(BLOCK, t_total - time))
        cnt, contend = _contention_block(p, contend_key, contend_ctr, b)
        succ = np.flatnonzero(cnt == 1)
        winner = (np.argmax(contend[succ], axis=1)
                  if succ.size else np.empty(0, dtype=np.int64))
        transmit, rate = _memoryless_decisions(
            succ, winner, kind, w, rho, u_giveup, thr_rate,
            table_rates, u_edges, table_len, gain_key, gain_ctr)

        if any_jakes:
            n_done, extra, last = _walk_jakes(
                t_total, t_tx, start_time, time, succ, winner, transmit, rate,
                kind, w, rho, gain_giveup, jakes_omega, jakes_phase,
                n_succ, hold_sum, bits, tx_count, hold_tx)
        else:
            n_done, extra, last = _commit_vectorized(
                t_total, t_tx, time, succ, winner, transmit, rate,
                n_succ, hold_sum, bits, tx_count, hold_tx)

        consumed = min(b, max(last + 1, t_total - time - extra))
        # Committed draws: one contention draw per station per consumed slot,
        # one gain draw per processed memoryless win.
        contend_ctr += np.uint64(consumed)
        done_winners = winner[:n_done]
        memless = done_winners[kind[done_winners] != KIND_JAKES]
        np.add.at(gain_ctr, memless, np.uint64(1))

        head = cnt[:consumed]
        idle += int(np.count_nonzero(head == 0))
        coll += int(np.count_nonzero(head >= 2))
        time += consumed + extra

    return int(time), int(idle), int(coll)


def _commit_vectorized(t_total, t_tx, time, succ, winner, transmit, rate,
                       n_succ, hold_sum, bits, tx_count, hold_tx):
    """Commit processed successes without per-slot python looping."""
    if succ.size == 0:
        return 0, 0, -1
    hold = np.where(transmit, hold_tx, 1)
    extra_before = np.concatenate(([0], np.cumsum(hold - 1)[:-1]))
    over = time + succ + extra_before >= t_total
    n_done = int(np.argmax(over)) if over.any() else succ.size
    last = int(succ[n_done - 1]) if n_done else -1
    if n_done < succ.size:
        extra = int(extra_before[n_done])
    else:
        extra = int(extra_before[-1] + hold[-1] - 1)

    dw = winner[:n_done]
    np.add.at(n_succ, dw, 1)
    np.add.at(hold_sum, dw, hold[:n_done])
    tx = transmit[:n_done]
    np.add.at(tx_count, dw[tx], 1)
    np.add.at(bits, dw[tx], rate[:n_done][tx] * t_tx)
    return n_done, extra, last


def _walk_jakes(t_total, t_tx, start_time, time, succ, winner, transmit, rate,
                kind, w, rho, gain_giveup, jakes_omega, jakes_phase,
                n_succ, hold_sum, bits, tx_count, hold_tx):
    """Sequential success walk; needed because a Jakes winner's decision
    depends on the slot's absolute time, which depends on earlier holds."""
    extra = 0
    last = -1
    n_done = 0
    for s_pos in range(succ.size):
        j = int(succ[s_pos])
        if time + j + extra >= t_total:
            break
        i = int(winner[s_pos])
        if kind[i] == KIND_JAKES:
            t_abs = float(start_time + time + j + extra)
            arg = jakes_omega[i] * t_abs + jakes_phase[i]
            re = np.cos(arg).sum()
            im = np.sin(arg).sum()
            g = (re * re + im * im) / jakes_omega.shape[1]
            tr = g >= gain_giveup[i]
            rt = w[i] * np.log2(1.0 + rho[i] * g) if tr else 0.0
        else:
            tr = bool(transmit[s_pos])
            rt = float(rate[s_pos])
        n_succ[i] += 1
        if tr:
            bits[i] += rt * t_tx
            tx_count[i] += 1
            hold_sum[i] += hold_tx
            extra += hold_tx - 1
        else:
            hold_sum[i] += 1
        last = j
        n_done += 1
    return n_done, extra, last
