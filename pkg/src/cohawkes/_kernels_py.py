"""Pure numpy implementation of the E-step kernel (fallback for ``_kernels_c``).

Same signature and output contract as the compiled version: output arrays
are accumulated into and must be zero-initialised by the caller.
"""
from __future__ import annotations

import numpy as np

_PAIR_BUDGET = 4_000_000


def _chunks(conv_ptr):
    lengths = np.diff(conv_ptr)
    pairs = lengths * (lengths - 1) // 2
    start = 0
    budget = 0
    for m, npairs in enumerate(pairs):
        if budget and budget + npairs > _PAIR_BUDGET:
            yield start, m
            start, budget = m, 0
        budget += npairs
    if start < len(pairs):
        yield start, len(pairs)


def em_pass(times, senders, log_g, f_target, conv_ptr, chmap, log_alpha, beta,
            loglam_out, mass_out, delay_out, orphan_out):
    n_ch = len(log_alpha)
    conv_ptr = np.asarray(conv_ptr)
    for m0, m1 in _chunks(conv_ptr):
        lo, hi = conv_ptr[m0], conv_ptr[m1]
        if hi - lo == 0:
            continue
        lengths = np.diff(conv_ptr[m0:m1 + 1])
        conv_of = np.repeat(np.arange(m0, m1), lengths)
        start_of = np.repeat(conv_ptr[m0:m1], lengths)
        ev = np.arange(lo, hi)
        n_before = ev - start_of
        total = int(n_before.sum())
        tgt = np.repeat(ev, n_before)
        offs = np.arange(total) - np.repeat(np.cumsum(n_before) - n_before, n_before)
        par = np.repeat(start_of, n_before) + offs
        keep = times[par] < times[tgt]
        tgt, par = tgt[keep], par[keep]

        non_initial = ev[n_before > 0]
        has_parent = np.zeros(hi - lo, dtype=bool)
        has_parent[tgt - lo] = True
        orphans = non_initial[~has_parent[non_initial - lo]]
        if len(orphans):
            np.add.at(orphan_out, conv_of[orphans - lo], 1)

        loglam = np.zeros(m1 - m0)
        if len(tgt):
            ch = chmap[senders[tgt], senders[par]]
            fk = f_target[tgt]
            dt = times[tgt] - times[par]
            logc = log_alpha[ch] + np.log(fk) + log_g[par] - beta[ch] * fk * dt
            uniq, first = np.unique(tgt, return_index=True)
            inv = np.repeat(np.arange(len(uniq)), np.diff(np.append(first, len(tgt))))
            mx = np.maximum.reduceat(logc, first)
            e = np.exp(logc - mx[inv])
            s = np.add.reduceat(e, first)
            p = e / s[inv]
            tconv = conv_of[uniq - lo] - m0
            loglam += np.bincount(tconv, weights=mx + np.log(s), minlength=m1 - m0)
            pconv = conv_of[tgt - lo] - m0
            key = pconv * n_ch + ch
            mass_out[m0:m1] += np.bincount(key, weights=p, minlength=(m1 - m0) * n_ch).reshape(-1, n_ch)
            delay_out[m0:m1] += np.bincount(
                key, weights=p * fk * dt, minlength=(m1 - m0) * n_ch
            ).reshape(-1, n_ch)
        bad = orphan_out[m0:m1] > 0
        loglam[bad] = -np.inf
        loglam_out[m0:m1] = loglam
