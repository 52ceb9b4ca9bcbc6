"""Pure-Python reference versions of the compiled flip kernels.

Semantics match ``_flipcore`` exactly; these are used when the extension is
not built or when ``ARCTIC_PURE_PYTHON=1`` is set.
"""
import numpy as np


def _update(h, ny, v, coin):
    if coin:
        h[v] = min(h[v - ny] + 1, h[v + 1] + 1, h[v - ny - 1] + 1,
                   h[v + ny], h[v - 1], h[v + ny + 1])
    else:
        h[v] = max(h[v - ny], h[v + 1], h[v - ny - 1],
                   h[v + ny] - 1, h[v - 1] - 1, h[v + ny + 1] - 1)


def _decode(sites, draws):
    ns = np.uint64(len(sites))
    idx = ((np.asarray(draws, dtype=np.uint64) >> np.uint64(32)) * ns) >> np.uint64(32)
    return np.asarray(sites)[idx.astype(np.int64)], (np.asarray(draws) & np.uint64(1)).astype(np.uint8)


def apply_moves(h, ny, vs, coins):
    hl = h.tolist()
    for v, c in zip(np.asarray(vs).tolist(), np.asarray(coins).tolist()):
        _update(hl, ny, v, c)
    h[:] = hl


def apply_draws(h, ny, sites, draws):
    vs, coins = _decode(sites, draws)
    apply_moves(h, ny, vs, coins)


def coupled_draws(hs, ny, sites, draws):
    vs, coins = _decode(sites, draws)
    rows = [r.tolist() for r in hs]
    bad = 0
    for v, c in zip(vs.tolist(), coins.tolist()):
        for r in rows:
            _update(r, ny, v, c)
        for a, b in zip(rows[:-1], rows[1:]):
            if a[v] < b[v]:
                bad += 1
    for j, r in enumerate(rows):
        hs[j, :] = r
    return bad


def batch_draws(hs, ny, sites, draws):
    for j in range(hs.shape[0]):
        apply_draws(hs[j], ny, sites, draws[j])



def sweep_words(hs, ny, order, words, nsweeps):
    order = np.asarray(order, dtype=np.int64)
    ns = len(order)
    bits = np.unpackbits(np.asarray(words, dtype="<u8").view(np.uint8), bitorder="little")
    rows = [r.tolist() for r in hs]
    ol = order.tolist()
    bad = 0
    for s in range(nsweeps):
        coins = bits[s * ns:(s + 1) * ns].tolist()
        for v, coin in zip(ol, coins):
            for r in rows:
                _update(r, ny, v, coin)
            for a, b in zip(rows[:-1], rows[1:]):
                if a[v] < b[v]:
                    bad += 1
    for j, r in enumerate(rows):
        hs[j, :] = r
    return bad
