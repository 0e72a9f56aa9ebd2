"""Hot inner loops: simplex pivoting and GRU sequence passes.

``simplex_iterate`` sticks to the numpy subset numba compiles, so
``maybe_njit`` can hand back either the compiled or the interpreted function. Callers own
validation; kernels assume well-formed contiguous float64 arrays.
"""
import numpy as np

from hemsdr._accel import maybe_njit

LP_OPTIMAL = 0
LP_UNBOUNDED = 1
LP_ITERATION_LIMIT = 2


@maybe_njit
def simplex_iterate(tab, dj, x, basis, is_basic, at_upper, lb, ub, max_iter, piv_tol, opt_tol):
    """Bounded-variable primal simplex on a dense tableau, in place.

    ``tab`` holds B^-1 A, ``dj`` the reduced costs and ``x`` the current
    point (nonbasic variables sit on ``lb`` or ``ub`` as flagged by
    ``at_upper``). Dantzig pricing is used until a degenerate step occurs;
    from then on Bland's rule picks both the entering variable and the
    leaving row until the objective moves again.

    Returns ``(status, iterations)``.
    """
    m, n = tab.shape
    free_range = ub - lb
    degenerate_run = 0
    for it in range(max_iter):
        viol = np.where(at_upper, dj, -dj)
        for j in range(n):
            if is_basic[j] or free_range[j] <= 0.0:
                viol[j] = 0.0
        if degenerate_run > 0:
            cand = np.nonzero(viol > opt_tol)[0]
            if cand.shape[0] == 0:
                return LP_OPTIMAL, it
            q = cand[0]
        else:
            q = np.argmax(viol)
            if viol[q] <= opt_tol:
                return LP_OPTIMAL, it
        direction = -1.0 if at_upper[q] else 1.0
        col = tab[:, q] * direction

        theta = free_range[q]
        leave = -1
        leave_to_upper = False
        for i in range(m):
            a = col[i]
            bi = basis[i]
            lim = 0.0
            to_up = False
            if a > piv_tol:
                lim = (x[bi] - lb[bi]) / a
                to_up = False
            elif a < -piv_tol:
                if ub[bi] == np.inf:
                    continue
                lim = (ub[bi] - x[bi]) / (-a)
                to_up = True
            else:
                continue
            if lim < 0.0:
                lim = 0.0
            if lim < theta - 1e-12:
                theta = lim
                leave = i
                leave_to_upper = to_up
            elif leave >= 0 and lim <= theta + 1e-12 and bi < basis[leave]:
                theta = min(theta, lim)
                leave = i
                leave_to_upper = to_up
        if theta == np.inf:
            return LP_UNBOUNDED, it

        if theta <= 1e-12:
            degenerate_run += 1
        else:
            degenerate_run = 0

        x[q] += direction * theta
        x[basis] -= col * theta

        if leave < 0:
            at_upper[q] = not at_upper[q]
            x[q] = ub[q] if at_upper[q] else lb[q]
            continue

        piv = tab[leave, q]
        tab[leave, :] /= piv
        prow = tab[leave, :].copy()
        f = tab[:, q].copy()
        f[leave] = 0.0
        tab -= np.outer(f, prow)
        dq = dj[q]
        if dq != 0.0:
            dj -= dq * prow
        dj[q] = 0.0

        old = basis[leave]
        is_basic[old] = False
        at_upper[old] = leave_to_upper
        x[old] = ub[old] if leave_to_upper else lb[old]
        basis[leave] = q
        is_basic[q] = True
        at_upper[q] = False
    return LP_ITERATION_LIMIT, max_iter


# The GRU passes, like the dense layers and the optimiser updates, stay in
# numpy: they are bound by BLAS calls or memory traffic, and compiled
# versions measured no faster (see benchmarks/).

def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def gru_layer_forward(xs, h0, wx, wh, b):
    """Unroll one GRU layer over a batch of sequences.

    ``xs`` is (steps, batch, in), ``wx`` (in, 3H), ``wh`` (H, 3H), ``b`` (3H,)
    with gate blocks ordered update, reset, candidate. The candidate applies
    the reset gate to the previous state before the recurrent product.

    Returns hidden states (steps+1, batch, H) with ``hs[0] = h0`` and the gate
    activations (steps, batch, 3H) needed for the backward pass.
    """
    steps, batch, n_in = xs.shape
    hidden = h0.shape[1]
    ax = (xs.reshape(steps * batch, n_in) @ wx + b).reshape(steps, batch, 3 * hidden)
    hs = np.empty((steps + 1, batch, hidden))
    gates = np.empty((steps, batch, 3 * hidden))
    hs[0] = h0
    whz = wh[:, :2 * hidden]
    whn = wh[:, 2 * hidden:]
    for t in range(steps):
        h = hs[t]
        zr = _sigmoid(ax[t, :, :2 * hidden] + h @ whz)
        r = zr[:, hidden:]
        cand = np.tanh(ax[t, :, 2 * hidden:] + (r * h) @ whn)
        z = zr[:, :hidden]
        hs[t + 1] = cand + z * (h - cand)
        gates[t, :, :2 * hidden] = zr
        gates[t, :, 2 * hidden:] = cand
    return hs, gates


def gru_layer_backward(xs, hs, gates, wx, wh, dhs):
    """Backpropagation through time for ``gru_layer_forward``.

    ``dhs`` (steps, batch, H) is the loss gradient arriving at every output
    state from above. Returns ``(dxs, dwx, dwh, db, dh0)``.
    """
    steps, batch, n_in = xs.shape
    hidden = hs.shape[2]
    whz_t = wh[:, :2 * hidden].T
    whn_t = wh[:, 2 * hidden:].T
    da = np.empty((steps, batch, 3 * hidden))
    dh_next = np.zeros((batch, hidden))
    z_all = gates[:, :, :hidden]
    r_all = gates[:, :, hidden:2 * hidden]
    c_all = gates[:, :, 2 * hidden:]
    for t in range(steps - 1, -1, -1):
        h = hs[t]
        z, r, cand = z_all[t], r_all[t], c_all[t]
        dh = dhs[t] + dh_next
        dan = dh * (1.0 - z) * (1.0 - cand * cand)
        drh = dan @ whn_t
        da[t, :, :hidden] = dh * (h - cand) * z * (1.0 - z)
        da[t, :, hidden:2 * hidden] = drh * h * r * (1.0 - r)
        da[t, :, 2 * hidden:] = dan
        dh_next = dh * z + drh * r + da[t, :, :2 * hidden] @ whz_t
    flat = da.reshape(steps * batch, 3 * hidden)
    dwx = xs.reshape(steps * batch, n_in).T @ flat
    dxs = (flat @ wx.T).reshape(steps, batch, n_in)
    db = flat.sum(axis=0)
    dwh = np.empty(wh.shape)
    dwh[:, :2 * hidden] = hs[:-1].reshape(steps * batch, hidden).T @ flat[:, :2 * hidden]
    rh = (r_all * hs[:-1]).reshape(steps * batch, hidden)
    dwh[:, 2 * hidden:] = rh.T @ flat[:, 2 * hidden:]
    return dxs, dwx, dwh, db, dh_next
