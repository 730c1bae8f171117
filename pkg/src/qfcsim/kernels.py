"""Inner loops that dominate runtime.

Each kernel exists twice: a numba-compiled loop (``*_nb``) and a
vectorised numpy version (``*_np``). The public name dispatches on
``qfcsim._accel.USE_NUMBA``. Both versions are exercised by the test
suite and compared in ``benchmarks/bench_kernels.py``.
"""
import numpy as np

from . import _accel
from ._accel import njit

# lock controller phases
SETTLE = 0
PROBE_PLUS = 1
PROBE_MINUS = 2


# ---------------------------------------------------------------------------
# non-paralyzable dead time
# ---------------------------------------------------------------------------

@njit
def dead_time_keep_nb(ts, tau):
    n = ts.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return keep
    keep[0] = True
    last = ts[0]
    for i in range(1, n):
        if ts[i] - last >= tau:
            keep[i] = True
            last = ts[i]
    return keep


def dead_time_keep_np(ts, tau):
    # jump from each kept event straight to the first event outside its dead window
    n = ts.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    nxt = np.searchsorted(ts, ts + tau, side="left")
    i = 0
    while i < n:
        keep[i] = True
        i = nxt[i]
    return keep


def dead_time_keep(ts, tau):
    """Boolean mask of events surviving a non-paralyzable dead time ``tau``.

    ``ts`` must be sorted int64 timestamps; ``tau`` uses the same unit.
    """
    ts = np.ascontiguousarray(ts, dtype=np.int64)
    tau = np.int64(tau)
    if _accel.USE_NUMBA:
        return dead_time_keep_nb(ts, tau)
    return dead_time_keep_np(ts, tau)


# ---------------------------------------------------------------------------
# batched Levenberg-Marquardt for eta = eta_max * sin^2(L * sqrt(beta * P))
# ---------------------------------------------------------------------------

@njit
def lm_sin2_nb(power, y, sigma, length, p0, max_iter, tol):
    nb, npt = y.shape
    out = np.empty((nb, 2))
    conv = np.zeros(nb, dtype=np.bool_)
    chi2_out = np.empty(nb)
    sqp = np.sqrt(power)
    for b in range(nb):
        beta = p0[b, 0]
        em = p0[b, 1]
        lam = 1e-3
        chi2 = 0.0
        for k in range(npt):
            u = length * np.sqrt(beta) * sqp[k]
            s = np.sin(u)
            r = (y[b, k] - em * s * s) / sigma[b, k]
            chi2 += r * r
        done = False
        for it in range(max_iter):
            a00 = 0.0
            a01 = 0.0
            a11 = 0.0
            g0 = 0.0
            g1 = 0.0
            sb = np.sqrt(beta)
            for k in range(npt):
                u = length * sb * sqp[k]
                s = np.sin(u)
                w = 1.0 / sigma[b, k]
                r = (y[b, k] - em * s * s) * w
                j0 = em * np.sin(2.0 * u) * length * sqp[k] / (2.0 * sb) * w
                j1 = s * s * w
                a00 += j0 * j0
                a01 += j0 * j1
                a11 += j1 * j1
                g0 += j0 * r
                g1 += j1 * r
            d00 = a00 * (1.0 + lam)
            d11 = a11 * (1.0 + lam)
            det = d00 * d11 - a01 * a01
            if det <= 0.0 or not np.isfinite(det):
                lam *= 10.0
                if lam > 1e12:
                    done = True
                    break
                continue
            db = (d11 * g0 - a01 * g1) / det
            de = (d00 * g1 - a01 * g0) / det
            nbeta = beta + db
            nem = em + de
            new_chi2 = np.inf
            if nbeta > 0.0:
                new_chi2 = 0.0
                for k in range(npt):
                    u = length * np.sqrt(nbeta) * sqp[k]
                    s = np.sin(u)
                    r = (y[b, k] - nem * s * s) / sigma[b, k]
                    new_chi2 += r * r
            if new_chi2 <= chi2:
                small = (abs(db) <= tol * (abs(beta) + tol)) and (abs(de) <= tol * (abs(em) + tol))
                beta = nbeta
                em = nem
                chi2 = new_chi2
                lam = max(lam * 0.1, 1e-12)
                if small:
                    done = True
                    break
            else:
                lam *= 10.0
                if lam > 1e12:
                    done = True
                    break
        out[b, 0] = beta
        out[b, 1] = em
        conv[b] = done
        chi2_out[b] = chi2
    return out, conv, chi2_out


def _sin2_chi2(power, y, sigma, length, beta, em):
    s = np.sin(length * np.sqrt(beta)[:, None] * np.sqrt(power)[None, :])
    r = (y - em[:, None] * s * s) / sigma
    return np.sum(r * r, axis=1)


def lm_sin2_np(power, y, sigma, length, p0, max_iter, tol):
    nb = y.shape[0]
    beta = p0[:, 0].copy()
    em = p0[:, 1].copy()
    lam = np.full(nb, 1e-3)
    chi2 = _sin2_chi2(power, y, sigma, length, beta, em)
    active = np.ones(nb, dtype=bool)
    conv = np.zeros(nb, dtype=bool)
    sqp = np.sqrt(power)[None, :]
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        b, e, lm_ = beta[idx], em[idx], lam[idx]
        sb = np.sqrt(b)[:, None]
        u = length * sb * sqp
        s = np.sin(u)
        w = 1.0 / sigma[idx]
        r = (y[idx] - e[:, None] * s * s) * w
        j0 = e[:, None] * np.sin(2.0 * u) * length * sqp / (2.0 * sb) * w
        j1 = s * s * w
        a00 = np.sum(j0 * j0, axis=1)
        a01 = np.sum(j0 * j1, axis=1)
        a11 = np.sum(j1 * j1, axis=1)
        g0 = np.sum(j0 * r, axis=1)
        g1 = np.sum(j1 * r, axis=1)
        d00 = a00 * (1.0 + lm_)
        d11 = a11 * (1.0 + lm_)
        det = d00 * d11 - a01 * a01
        good_det = (det > 0.0) & np.isfinite(det)
        with np.errstate(divide="ignore", invalid="ignore"):
            db = np.where(good_det, (d11 * g0 - a01 * g1) / det, 0.0)
            de = np.where(good_det, (d00 * g1 - a01 * g0) / det, 0.0)
        nbeta = b + db
        nem = e + de
        new_chi2 = np.full(idx.size, np.inf)
        pos = good_det & (nbeta > 0.0)
        if pos.any():
            new_chi2[pos] = _sin2_chi2(power, y[idx[pos]], sigma[idx[pos]], length, nbeta[pos], nem[pos])
        accept = pos & (new_chi2 <= chi2[idx])
        small = (np.abs(db) <= tol * (np.abs(b) + tol)) & (np.abs(de) <= tol * (np.abs(e) + tol))

        acc = idx[accept]
        beta[acc] = nbeta[accept]
        em[acc] = nem[accept]
        chi2[acc] = new_chi2[accept]
        lam[acc] = np.maximum(lam[acc] * 0.1, 1e-12)
        rej = idx[~accept]
        lam[rej] *= 10.0

        finished = accept & small
        stuck = ~accept & (lam[idx] > 1e12)
        conv[idx[finished | stuck]] = True
        active[idx[finished | stuck]] = False
    return np.stack([beta, em], axis=1), conv, chi2


def lm_sin2(power, y, sigma, length, p0, max_iter=200, tol=1e-12):
    """Fit ``eta_max * sin(L sqrt(beta P))**2`` to each row of ``y``.

    Returns ``(params, converged, chi2)`` with ``params[:, 0] = beta`` and
    ``params[:, 1] = eta_max``.
    """
    power = np.ascontiguousarray(power, dtype=np.float64)
    y = np.atleast_2d(np.ascontiguousarray(y, dtype=np.float64))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), y.shape)
    sigma = np.ascontiguousarray(sigma)
    p0 = np.ascontiguousarray(np.broadcast_to(np.asarray(p0, dtype=np.float64), (y.shape[0], 2)))
    if _accel.USE_NUMBA:
        return lm_sin2_nb(power, y, sigma, float(length), p0, int(max_iter), float(tol))
    return lm_sin2_np(power, y, sigma, float(length), p0, int(max_iter), float(tol))


# ---------------------------------------------------------------------------
# chopper-gated dither lock
# ---------------------------------------------------------------------------

@njit
def lock_loop_nb(n_steps, dt, chopper_hz, duty, res0, drift, rw_sigma, normals,
                 setpoint, step, phase, last_t, plus_t, fsr, coef, t_peak, center):
    t_out = np.empty(n_steps)
    det_out = np.empty(n_steps)
    tr_out = np.empty(n_steps)
    measure = np.empty(n_steps, dtype=np.bool_)
    res = res0
    sq = np.sqrt(dt)
    for k in range(n_steps):
        t = k * dt
        if k > 0:
            res += drift * dt + rw_sigma * sq * normals[k]
        is_lock = (t * chopper_hz) % 1.0 < duty
        offset = 0.0
        if is_lock:
            if phase == PROBE_PLUS:
                offset = step
            elif phase == PROBE_MINUS:
                offset = -step
        d = res - (setpoint + offset)
        s = np.sin(np.pi * (d - center) / fsr)
        tr = t_peak / (1.0 + coef * s * s)
        t_out[k] = t
        det_out[k] = d
        tr_out[k] = tr
        measure[k] = not is_lock
        if is_lock:
            if phase == SETTLE:
                last_t = tr
                phase = PROBE_PLUS
            elif phase == PROBE_PLUS:
                plus_t = tr
                phase = PROBE_MINUS
            else:
                if plus_t > tr and plus_t > last_t:
                    setpoint += step
                elif tr > plus_t and tr > last_t:
                    setpoint -= step
                phase = SETTLE
    return t_out, det_out, tr_out, measure, setpoint, phase, last_t, plus_t


def lock_loop_np(n_steps, dt, chopper_hz, duty, res0, drift, rw_sigma, normals,
                 setpoint, step, phase, last_t, plus_t, fsr, coef, t_peak, center):
    # the controller is a serial state machine; only the drift path vectorises
    k = np.arange(n_steps)
    t_out = k * dt
    incr = drift * dt + rw_sigma * np.sqrt(dt) * normals
    incr[0] = res0
    res = np.cumsum(incr)
    is_lock = (t_out * chopper_hz) % 1.0 < duty
    det_out = np.empty(n_steps)
    tr_out = np.empty(n_steps)
    for i in range(n_steps):
        offset = 0.0
        if is_lock[i]:
            if phase == PROBE_PLUS:
                offset = step
            elif phase == PROBE_MINUS:
                offset = -step
        d = res[i] - (setpoint + offset)
        s = np.sin(np.pi * (d - center) / fsr)
        tr = t_peak / (1.0 + coef * s * s)
        det_out[i] = d
        tr_out[i] = tr
        if is_lock[i]:
            if phase == SETTLE:
                last_t = tr
                phase = PROBE_PLUS
            elif phase == PROBE_PLUS:
                plus_t = tr
                phase = PROBE_MINUS
            else:
                if plus_t > tr and plus_t > last_t:
                    setpoint += step
                elif tr > plus_t and tr > last_t:
                    setpoint -= step
                phase = SETTLE
    return t_out, det_out, tr_out, ~is_lock, setpoint, phase, last_t, plus_t


def lock_loop(*args):
    if _accel.USE_NUMBA:
        return lock_loop_nb(*args)
    return lock_loop_np(*args)
