"""Compiled inner loops.

Everything random in the package flows through the counter hash below: the
SplitMix64 finalizer (Steele, Lea & Flood 2014) chained over the integer
coordinates of whatever is being keyed.  A key never depends on evaluation
order, so an environment is a pure function of (seed, level, site) and a walk
is a pure function of (environment, replica seed).

Law encoding shared by all kernels::

    kind    0 Dirichlet (Gamma draws), 1 mixture, 2 deterministic,
            3 flat Dirichlet (all alphas == 1, uniform spacings)
    alphas  float64[m]
    cumw    float64[c]   cumulative component weights (mixture only)
    comps   float64[c, m] component vectors (mixture / deterministic)
    steps   int64[m, nu]
"""

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

TAG_ENV = np.uint64(0x656E7669726F6E6D)
TAG_WALK = np.uint64(0x77616C6B65727321)
TAG_DERIVE = np.uint64(0x6465726976656421)

DIRICHLET, MIXTURE, DETERMINISTIC, FLAT = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def zigzag(i):
    i = np.int64(i)
    return np.uint64((i << 1) ^ (i >> 63))


@njit(cache=True, nogil=True)
def combine(h, c):
    return mix64(h + GOLDEN * (zigzag(c) + _ONE))


@njit(cache=True, nogil=True)
def to_unit(bits):
    # open interval (0, 1): safe for log
    return (np.float64(bits >> _S11) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def unit_draw(h, j):
    return to_unit(combine(h, j))


@njit(cache=True, nogil=True, inline="always")
def site_hash(level_key, osite, coords):
    h = level_key
    for d in range(coords.shape[0]):
        h = combine(h, osite[d] + coords[d])
    return h


@njit(cache=True, nogil=True)
def _log_gamma_ge1(h, j, alpha):
    """Log of a Gamma(alpha, 1) draw, alpha >= 1 (Marsaglia-Tsang)."""
    if alpha == 1.0:
        return math.log(-math.log(unit_draw(h, j))), j + 1
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        u1 = unit_draw(h, j)
        u2 = unit_draw(h, j + 1)
        j += 2
        x = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = unit_draw(h, j)
        j += 1
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return math.log(d * v), j


@njit(cache=True, nogil=True)
def _log_gamma(h, j, alpha):
    if alpha < 1.0:
        lg, j = _log_gamma_ge1(h, j, alpha + 1.0)
        u = unit_draw(h, j)
        return lg + math.log(u) / alpha, j + 1
    return _log_gamma_ge1(h, j, alpha)


@njit(cache=True, nogil=True)
def _fill_flat(h, out):
    # uniform spacings: exact Dirichlet(1, ..., 1)
    m = out.shape[0]
    if m == 1:
        out[0] = 1.0
        return
    for i in range(m - 1):
        out[i] = unit_draw(h, i)
    for i in range(1, m - 1):
        v = out[i]
        k = i - 1
        while k >= 0 and out[k] > v:
            out[k + 1] = out[k]
            k -= 1
        out[k + 1] = v
    out[m - 1] = 1.0 - out[m - 2]
    for i in range(m - 2, 0, -1):
        out[i] = out[i] - out[i - 1]


@njit(cache=True, nogil=True)
def _fill_dirichlet(alphas, h, out):
    m = out.shape[0]
    j = 0
    top = -np.inf
    for i in range(m):
        lg, j = _log_gamma(h, j, alphas[i])
        out[i] = lg
        if lg > top:
            top = lg
    total = 0.0
    for i in range(m):
        out[i] = math.exp(out[i] - top)
        total += out[i]
    for i in range(m):
        out[i] /= total


@njit(cache=True, nogil=True)
def _fill_const(comps, out):
    for i in range(out.shape[0]):
        out[i] = comps[0, i]


@njit(cache=True, nogil=True)
def _fill_mixture(cumw, comps, h, out):
    u = unit_draw(h, 0)
    c = 0
    nc = cumw.shape[0]
    while c < nc - 1 and u >= cumw[c]:
        c += 1
    for i in range(out.shape[0]):
        out[i] = comps[c, i]


@njit(cache=True, nogil=True)
def fill_vector(kind, alphas, cumw, comps, h, out):
    """Write the transition vector keyed by h into out.

    Hot loops repeat this dispatch inline: routing four arrays through an
    extra call costs several times the sampling itself."""
    if kind == FLAT:
        _fill_flat(h, out)
    elif kind == DETERMINISTIC:
        _fill_const(comps, out)
    elif kind == MIXTURE:
        _fill_mixture(cumw, comps, h, out)
    else:
        _fill_dirichlet(alphas, h, out)


@njit(cache=True, nogil=True)
def pick(vec, u):
    """Inverse-CDF index with strict comparison (zero-weight steps never win)."""
    c = 0.0
    last = 0
    for j in range(vec.shape[0]):
        if vec[j] > 0.0:
            last = j
        c += vec[j]
        if u < c:
            return j
    return last


@njit(cache=True, nogil=True)
def vectors_at(kind, alphas, cumw, comps, env_key, levels, sites):
    """Transition vectors at absolute (level, site) pairs."""
    n = levels.shape[0]
    m = comps.shape[1]
    out = np.empty((n, m))
    zero = np.zeros(sites.shape[1], np.int64)
    for i in range(n):
        h = site_hash(combine(env_key, levels[i]), zero, sites[i])
        fill_vector(kind, alphas, cumw, comps, h, out[i])
    return out


# ---------------------------------------------------------------- walks


@njit(cache=True, nogil=True)
def walk_batch(kind, alphas, cumw, comps, steps, env_keys, olev, osite, n,
               walk_keys, rec_idx, out_pos, out_steps, store_steps):
    """Quenched walks; env_keys has length 1 (shared) or one per replica."""
    nrep = walk_keys.shape[0]
    nu = steps.shape[1]
    m = steps.shape[0]
    nrec = rec_idx.shape[0]
    vec = np.empty(m)
    x = np.zeros(nu, np.int64)
    shared = env_keys.shape[0] == 1
    for r in range(nrep):
        ek = env_keys[0] if shared else env_keys[r]
        wk = walk_keys[r]
        for d in range(nu):
            x[d] = 0
        ri = 0
        for k in range(n + 1):
            while ri < nrec and rec_idx[ri] == k:
                for d in range(nu):
                    out_pos[r, ri, d] = x[d]
                ri += 1
            if k == n:
                break
            h = site_hash(combine(ek, olev + k), osite, x)
            if kind == FLAT:
                _fill_flat(h, vec)
            elif kind == DETERMINISTIC:
                _fill_const(comps, vec)
            elif kind == MIXTURE:
                _fill_mixture(cumw, comps, h, vec)
            else:
                _fill_dirichlet(alphas, h, vec)
            j = pick(vec, to_unit(combine(wk, k)))
            if store_steps:
                out_steps[r, k] = j
            for d in range(nu):
                x[d] += steps[j, d]


@njit(cache=True, nogil=True)
def iid_batch(cum_p, steps, walk_keys, n, rec_idx, out_pos, out_steps, store_steps):
    nrep = walk_keys.shape[0]
    nu = steps.shape[1]
    nrec = rec_idx.shape[0]
    x = np.zeros(nu, np.int64)
    p = np.empty(cum_p.shape[0])
    prev = 0.0
    for j in range(cum_p.shape[0]):
        p[j] = cum_p[j] - prev
        prev = cum_p[j]
    for r in range(nrep):
        wk = walk_keys[r]
        for d in range(nu):
            x[d] = 0
        ri = 0
        for k in range(n + 1):
            while ri < nrec and rec_idx[ri] == k:
                for d in range(nu):
                    out_pos[r, ri, d] = x[d]
                ri += 1
            if k == n:
                break
            j = pick(p, to_unit(combine(wk, k)))
            if store_steps:
                out_steps[r, k] = j
            for d in range(nu):
                x[d] += steps[j, d]


@njit(cache=True, nogil=True)
def pair_batch(kind, alphas, cumw, comps, steps, env_keys, olev, osite, n,
               keys_a, keys_b, counts, joint_col, joint_off):
    """Two walkers per replica in a shared environment; tallies collisions
    (positions equal before step k, k < n) and the joint step table split by
    whether the walkers sat on the same site."""
    nrep = keys_a.shape[0]
    nu = steps.shape[1]
    m = steps.shape[0]
    va = np.empty(m)
    vb = np.empty(m)
    x = np.zeros(nu, np.int64)
    y = np.zeros(nu, np.int64)
    shared = env_keys.shape[0] == 1
    for r in range(nrep):
        ek = env_keys[0] if shared else env_keys[r]
        for d in range(nu):
            x[d] = 0
            y[d] = 0
        c = 0
        for k in range(n):
            lk = combine(ek, olev + k)
            same = True
            for d in range(nu):
                if x[d] != y[d]:
                    same = False
                    break
            h = site_hash(lk, osite, x)
            if kind == FLAT:
                _fill_flat(h, va)
            elif kind == DETERMINISTIC:
                _fill_const(comps, va)
            elif kind == MIXTURE:
                _fill_mixture(cumw, comps, h, va)
            else:
                _fill_dirichlet(alphas, h, va)
            ua = to_unit(combine(keys_a[r], k))
            ub = to_unit(combine(keys_b[r], k))
            ja = pick(va, ua)
            if same:
                c += 1
                jb = pick(va, ub)
                joint_col[ja, jb] += 1
            else:
                h = site_hash(lk, osite, y)
                if kind == FLAT:
                    _fill_flat(h, vb)
                elif kind == DETERMINISTIC:
                    _fill_const(comps, vb)
                elif kind == MIXTURE:
                    _fill_mixture(cumw, comps, h, vb)
                else:
                    _fill_dirichlet(alphas, h, vb)
                jb = pick(vb, ub)
                joint_off[ja, jb] += 1
            for d in range(nu):
                x[d] += steps[ja, d]
                y[d] += steps[jb, d]
        counts[r] = c


@njit(cache=True, nogil=True)
def path_observables(kind, alphas, cumw, comps, steps, env_key, olev, osite, positions):
    """Transition vectors along a path: row k is the vector at (k, positions[k])."""
    npts = positions.shape[0]
    m = steps.shape[0]
    out = np.empty((npts, m))
    for k in range(npts):
        h = site_hash(combine(env_key, olev + k), osite, positions[k])
        fill_vector(kind, alphas, cumw, comps, h, out[k])
    return out


# ------------------------------------------------------------- box helpers


@njit(cache=True, nogil=True)
def _strides(shape):
    nu = shape.shape[0]
    st = np.empty(nu, np.int64)
    s = 1
    for d in range(nu - 1, -1, -1):
        st[d] = s
        s *= shape[d]
    return st


@njit(cache=True, nogil=True, inline="always")
def _advance(c, lo, hi):
    d = c.shape[0] - 1
    while d >= 0:
        c[d] += 1
        if c[d] <= hi[d]:
            return
        c[d] = lo[d]
        d -= 1


@njit(cache=True, nogil=True, inline="always")
def _flat(c, LO, st):
    idx = 0
    for d in range(c.shape[0]):
        idx += (c[d] - LO[d]) * st[d]
    return idx


# ------------------------------------------------------- forward occupation


@njit(cache=True, nogil=True)
def fwd_series(kind, alphas, cumw, comps, steps, env_key, olev, osite, n, vbar, slab):
    """Exact forward recursion of the quenched law from the view origin.

    Returns (means[n+1, nu], pikg[n, nu]).  When slab has n+1 rows the full
    level tables are written into it (box-flattened, row-major)."""
    m = steps.shape[0]
    nu = steps.shape[1]
    smin = np.empty(nu, np.int64)
    smax = np.empty(nu, np.int64)
    for d in range(nu):
        smin[d] = steps[0, d]
        smax[d] = steps[0, d]
        for j in range(1, m):
            smin[d] = min(smin[d], steps[j, d])
            smax[d] = max(smax[d], steps[j, d])
    LO = np.empty(nu, np.int64)
    shape = np.empty(nu, np.int64)
    size = 1
    for d in range(nu):
        LO[d] = n * smin[d]
        shape[d] = n * (smax[d] - smin[d]) + 1
        size *= shape[d]
    st = _strides(shape)
    offs = np.zeros(m, np.int64)
    for j in range(m):
        for d in range(nu):
            offs[j] += steps[j, d] * st[d]
    cur = np.zeros(size)
    nxt = np.zeros(size)
    zero = np.zeros(nu, np.int64)
    cur[_flat(zero, LO, st)] = 1.0
    means = np.zeros((n + 1, nu))
    pikg = np.zeros((max(n, 0), nu))
    vec = np.empty(m)
    c = np.empty(nu, np.int64)
    lo = np.empty(nu, np.int64)
    hi = np.empty(nu, np.int64)
    store = slab.shape[0] == n + 1
    for k in range(n + 1):
        total = 1
        for d in range(nu):
            lo[d] = k * smin[d]
            hi[d] = k * smax[d]
            c[d] = lo[d]
            total *= hi[d] - lo[d] + 1
        lk = combine(env_key, olev + k)
        for _ in range(total):
            idx = _flat(c, LO, st)
            r = cur[idx]
            if r != 0.0:
                cur[idx] = 0.0
                if store:
                    slab[k, idx] = r
                for d in range(nu):
                    means[k, d] += r * c[d]
                if k < n:
                    h = site_hash(lk, osite, c)
                    if kind == FLAT:
                        _fill_flat(h, vec)
                    elif kind == DETERMINISTIC:
                        _fill_const(comps, vec)
                    elif kind == MIXTURE:
                        _fill_mixture(cumw, comps, h, vec)
                    else:
                        _fill_dirichlet(alphas, h, vec)
                    for d in range(nu):
                        drift = 0.0
                        for j in range(m):
                            drift += vec[j] * steps[j, d]
                        pikg[k, d] += r * (drift - vbar[d])
                    for j in range(m):
                        nxt[idx + offs[j]] += r * vec[j]
            _advance(c, lo, hi)
        tmp = cur
        cur = nxt
        nxt = tmp
    return means, pikg


@njit(cache=True, nogil=True)
def fwd_sq_many(kind, alphas, cumw, comps, steps, env_keys, n, vbar, ladder):
    """|E_0^w X_l - l vbar|^2 at each ladder depth l, one row per environment."""
    nu = steps.shape[1]
    out = np.empty((env_keys.shape[0], ladder.shape[0]))
    dummy = np.empty((0, 0))
    osite = np.zeros(nu, np.int64)
    for e in range(env_keys.shape[0]):
        means, _ = fwd_series(kind, alphas, cumw, comps, steps, env_keys[e], 0, osite, n, vbar, dummy)
        for i in range(ladder.shape[0]):
            s = 0.0
            for d in range(nu):
                dv = means[ladder[i], d] - ladder[i] * vbar[d]
                s += dv * dv
            out[e, i] = s
    return out


# --------------------------------------------------------- backward density


@njit(cache=True, nogil=True)
def density(kind, alphas, cumw, comps, steps, env_key, olev, osite, n):
    """sum_x P_x^w(X_n = 0) over sites x at level -n (relative to the view)."""
    m = steps.shape[0]
    nu = steps.shape[1]
    smin = np.empty(nu, np.int64)
    smax = np.empty(nu, np.int64)
    for d in range(nu):
        smin[d] = steps[0, d]
        smax[d] = steps[0, d]
        for j in range(1, m):
            smin[d] = min(smin[d], steps[j, d])
            smax[d] = max(smax[d], steps[j, d])
    LO = np.empty(nu, np.int64)
    shape = np.empty(nu, np.int64)
    size = 1
    for d in range(nu):
        LO[d] = -n * smax[d]
        shape[d] = n * (smax[d] - smin[d]) + 1
        size *= shape[d]
    st = _strides(shape)
    cur = np.zeros(size)
    nxt = np.zeros(size)
    zero = np.zeros(nu, np.int64)
    cur[_flat(zero, LO, st)] = 1.0
    vec = np.empty(m)
    c = np.empty(nu, np.int64)
    nb = np.empty(nu, np.int64)
    lo = np.empty(nu, np.int64)
    hi = np.empty(nu, np.int64)
    for j in range(n):
        # sites at level -(j+1) feeding level -j
        total = 1
        for d in range(nu):
            lo[d] = -(j + 1) * smax[d]
            hi[d] = -(j + 1) * smin[d]
            c[d] = lo[d]
            total *= hi[d] - lo[d] + 1
        lk = combine(env_key, olev - (j + 1))
        for _ in range(total):
            h = site_hash(lk, osite, c)
            if kind == FLAT:
                _fill_flat(h, vec)
            elif kind == DETERMINISTIC:
                _fill_const(comps, vec)
            elif kind == MIXTURE:
                _fill_mixture(cumw, comps, h, vec)
            else:
                _fill_dirichlet(alphas, h, vec)
            val = 0.0
            for z in range(m):
                inside = True
                for d in range(nu):
                    nb[d] = c[d] + steps[z, d]
                    if nb[d] < -j * smax[d] or nb[d] > -j * smin[d]:
                        inside = False
                if inside:
                    val += vec[z] * cur[_flat(nb, LO, st)]
            nxt[_flat(c, LO, st)] = val
            _advance(c, lo, hi)
        tmp = cur
        cur = nxt
        nxt = tmp
    total = 1
    for d in range(nu):
        lo[d] = -n * smax[d]
        hi[d] = -n * smin[d]
        c[d] = lo[d]
        total *= hi[d] - lo[d] + 1
    f = 0.0
    for _ in range(total):
        f += cur[_flat(c, LO, st)]
        _advance(c, lo, hi)
    return f


# ------------------------------------------------------ resolvent sweep


@njit(cache=True, nogil=True)
def resolvent_sweep(kind, alphas, cumw, comps, steps, env_key, olev, osite,
                    box_lo, box_hi, L, eps, vbar, positions):
    """Backward solve of (1+eps) h = g + Pi h on a finite window.

    h is set to zero at level L and outside [box_lo, box_hi]; the companion
    function b solves the same discounted recursion with boundary value 1, so
    |h_true - h| <= (sup|h_true|) * b pointwise.

    positions[k] (k = 0..n) is a path in view coordinates.  Returns
    h_path[n+1, nu], b_path[n+1], h_next[n+1, m, nu], b_next[n+1, m]
    where *_next[k, j] is taken at (k+1, positions[k] + steps[j]).
    """
    m = steps.shape[0]
    nu = steps.shape[1]
    npts = positions.shape[0]
    smin = np.empty(nu, np.int64)
    smax = np.empty(nu, np.int64)
    for d in range(nu):
        smin[d] = steps[0, d]
        smax[d] = steps[0, d]
        for j in range(1, m):
            smin[d] = min(smin[d], steps[j, d])
            smax[d] = max(smax[d], steps[j, d])
    shape = np.empty(nu, np.int64)
    size = 1
    for d in range(nu):
        shape[d] = box_hi[d] - box_lo[d] + 1
        size *= shape[d]
    st = _strides(shape)
    h_cur = np.zeros((size, nu))
    h_nxt = np.zeros((size, nu))
    b_cur = np.zeros(size)
    b_nxt = np.ones(size)
    h_path = np.zeros((npts, nu))
    b_path = np.ones(npts)
    h_next = np.zeros((npts, m, nu))
    b_next = np.ones((npts, m))
    vec = np.empty(m)
    acc = np.empty(nu)
    c = np.empty(nu, np.int64)
    nb = np.empty(nu, np.int64)
    lo = np.empty(nu, np.int64)
    hi = np.empty(nu, np.int64)
    offs = np.zeros(m, np.int64)
    for z in range(m):
        for d in range(nu):
            offs[z] += steps[z, d] * st[d]
    # when all steps share the parity of their coordinate sum, only sites with
    # sum(c) = lvl * that parity (mod 2) can influence the view origin's cone
    par = 0
    for d in range(nu):
        par += steps[0, d]
    par &= 1
    parity = True
    for z in range(1, m):
        q = 0
        for d in range(nu):
            q += steps[z, d]
        if (q & 1) != par:
            parity = False
    damp = 1.0 / (1.0 + eps)
    last = nu - 1
    for lvl in range(L - 1, -1, -1):
        outer = 1
        empty = False
        for d in range(nu):
            lo[d] = max(box_lo[d], lvl * smin[d])
            hi[d] = min(box_hi[d], lvl * smax[d])
            c[d] = lo[d]
            if hi[d] < lo[d]:
                empty = True
            if d < last:
                outer *= hi[d] - lo[d] + 1
        if empty:
            outer = 0
        lk = combine(env_key, olev + lvl)
        want = (lvl * par) & 1
        stride = 2 if parity else 1
        for _ in range(outer):
            start = lo[last]
            if parity:
                q = start
                for d in range(last):
                    q += c[d]
                start += (q - want) & 1
            for x in range(start, hi[last] + 1, stride):
                c[last] = x
                idx = _flat(c, box_lo, st)
                h = site_hash(lk, osite, c)
                if kind == FLAT:
                    _fill_flat(h, vec)
                elif kind == DETERMINISTIC:
                    _fill_const(comps, vec)
                elif kind == MIXTURE:
                    _fill_mixture(cumw, comps, h, vec)
                else:
                    _fill_dirichlet(alphas, h, vec)
                interior = True
                for d in range(nu):
                    if c[d] + smin[d] < box_lo[d] or c[d] + smax[d] > box_hi[d]:
                        interior = False
                bv = 0.0
                for d in range(nu):
                    acc[d] = -vbar[d]
                for z in range(m):
                    w = vec[z]
                    ni = idx + offs[z]
                    if not interior:
                        inside = True
                        for d in range(nu):
                            nb[d] = c[d] + steps[z, d]
                            if nb[d] < box_lo[d] or nb[d] > box_hi[d]:
                                inside = False
                        if not inside:
                            bv += w
                            for d in range(nu):
                                acc[d] += w * steps[z, d]
                            continue
                    bv += w * b_nxt[ni]
                    for d in range(nu):
                        acc[d] += w * (steps[z, d] + h_nxt[ni, d])
                for d in range(nu):
                    h_cur[idx, d] = damp * acc[d]
                b_cur[idx] = damp * bv
            # odometer over the outer coordinates
            d = last - 1
            while d >= 0:
                c[d] += 1
                if c[d] <= hi[d]:
                    break
                c[d] = lo[d]
                d -= 1
        if lvl < npts:
            idx = _flat(positions[lvl], box_lo, st)
            for d in range(nu):
                h_path[lvl, d] = h_cur[idx, d]
            b_path[lvl] = b_cur[idx]
        if 1 <= lvl <= npts:
            k = lvl - 1
            for z in range(m):
                for d in range(nu):
                    nb[d] = positions[k, d] + steps[z, d]
                ni = _flat(nb, box_lo, st)
                for d in range(nu):
                    h_next[k, z, d] = h_cur[ni, d]
                b_next[k, z] = b_cur[ni]
        tmp = h_cur
        h_cur = h_nxt
        h_nxt = tmp
        tb = b_cur
        b_cur = b_nxt
        b_nxt = tb
    return h_path, b_path, h_next, b_next


# --------------------------------------------------------- collision chain


@njit(cache=True, nogil=True)
def collision_chain(qsteps, q_homog, q_origin, n):
    """P(Y_k = 0), k < n, for the chain with kernel q_origin at 0 and
    q_homog elsewhere."""
    Q = qsteps.shape[0]
    nu = qsteps.shape[1]
    qmin = np.empty(nu, np.int64)
    qmax = np.empty(nu, np.int64)
    for d in range(nu):
        qmin[d] = qsteps[0, d]
        qmax[d] = qsteps[0, d]
        for j in range(1, Q):
            qmin[d] = min(qmin[d], qsteps[j, d])
            qmax[d] = max(qmax[d], qsteps[j, d])
    LO = np.empty(nu, np.int64)
    shape = np.empty(nu, np.int64)
    size = 1
    for d in range(nu):
        LO[d] = n * qmin[d]
        shape[d] = n * (qmax[d] - qmin[d]) + 1
        size *= shape[d]
    st = _strides(shape)
    offs = np.zeros(Q, np.int64)
    for j in range(Q):
        for d in range(nu):
            offs[j] += qsteps[j, d] * st[d]
    cur = np.zeros(size)
    nxt = np.zeros(size)
    zero = np.zeros(nu, np.int64)
    origin = _flat(zero, LO, st)
    cur[origin] = 1.0
    ret = np.zeros(n)
    c = np.empty(nu, np.int64)
    lo = np.empty(nu, np.int64)
    hi = np.empty(nu, np.int64)
    for k in range(n):
        ret[k] = cur[origin]
        if k == n - 1:
            break
        total = 1
        for d in range(nu):
            lo[d] = k * qmin[d]
            hi[d] = k * qmax[d]
            c[d] = lo[d]
            total *= hi[d] - lo[d] + 1
        for _ in range(total):
            idx = _flat(c, LO, st)
            r = cur[idx]
            if r != 0.0:
                cur[idx] = 0.0
                if idx == origin:
                    for j in range(Q):
                        nxt[idx + offs[j]] += r * q_origin[j]
                else:
                    for j in range(Q):
                        nxt[idx + offs[j]] += r * q_homog[j]
            _advance(c, lo, hi)
        tmp = cur
        cur = nxt
        nxt = tmp
    return ret
