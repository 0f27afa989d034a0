"""Hot loops: hourly epidemic propagation and pairwise POI co-presence.

Each kernel exists twice, a numba ``@njit`` version and a pure-numpy version
with the same signature. ``BDVAX_DISABLE_NUMBA=1`` (or numba being absent)
selects the numpy path. Deterministic runs agree across paths to rounding;
stochastic runs use each backend's own binomial sampler, so the streams differ.
"""
from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("BDVAX_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = numba is not None and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations


def simulate_numpy(hour_ptr, comm, poi, weight, pop, poi_factor, beta_poi, beta_base,
                   sigma_h, gamma_h, ifr, delay_h, S, E, I, R, V, D, pending,
                   start_hour, n_hours, vac_hour, vac_frac, homogeneous, stochastic, seed,
                   daily_deaths, daily_infections, cum_inf, prev_sum, sus_sum):
    """Advance the state arrays in place by ``n_hours`` hours.

    Returns the number of flows that had to be clamped at zero.
    """
    n = pop.size
    m = poi_factor.size
    rng = np.random.default_rng(seed) if stochastic else None
    clamped = 0
    total_pop = pop.sum()
    for step in range(n_hours):
        t = start_hour + step
        day = step // 24

        hit = vac_hour == t
        if hit.any():
            if stochastic:
                moved = rng.binomial(S[hit].astype(np.int64), vac_frac[hit]).astype(np.float64)
            else:
                moved = S[hit] * vac_frac[hit]
            S[hit] -= moved
            V[hit] += moved

        prev = I / pop
        prev_sum += prev
        sus_sum += S / pop

        if homogeneous:
            hazard = np.full(n, beta_base / 24.0 * I.sum() / total_pop)
        else:
            lo, hi = hour_ptr[t], hour_ptr[t + 1]
            c, p, w = comm[lo:hi], poi[lo:hi], weight[lo:hi]
            lam = np.bincount(p, weights=w * prev[c], minlength=m) * poi_factor
            expo = np.bincount(c, weights=w * lam[p], minlength=n)
            hazard = beta_poi * expo / pop + beta_base / 24.0 * prev
        prob = np.minimum(hazard, 1.0)

        if stochastic:
            new_e = rng.binomial(S.astype(np.int64), prob).astype(np.float64)
            new_i = rng.binomial(E.astype(np.int64), sigma_h).astype(np.float64)
            new_r = rng.binomial(I.astype(np.int64), gamma_h).astype(np.float64)
            doomed = rng.binomial(new_r.astype(np.int64), ifr).astype(np.float64)
        else:
            new_e = S * prob
            new_i = E * sigma_h
            new_r = I * gamma_h
            doomed = new_r * ifr

        S -= new_e
        E += new_e - new_i
        I += new_i - new_r
        R += new_r
        if delay_h > 0:
            slot = t % delay_h
            released = pending[:, slot].copy()
            pending[:, slot] = doomed
        else:
            released = doomed
        R -= released
        D += released

        for arr in (S, E, I, R):
            neg = arr < 0
            if neg.any():
                clamped += int(neg.sum())
                arr[neg] = 0.0

        cum_inf += new_e
        daily_deaths[day] += released.sum()
        daily_infections[day] += new_e.sum()
    return clamped


def contact_matrix_numpy(hour_ptr, comm, poi, weight, poi_factor, n, n_hours):
    """C[a, b] = sum_t sum_p w[t][a][p] * w[t][b][p] * poi_factor[p]."""
    from scipy import sparse

    end = hour_ptr[n_hours]
    m = poi_factor.size
    hours = np.repeat(np.arange(n_hours), np.diff(hour_ptr[: n_hours + 1]))
    cols = hours * m + poi[:end]
    data = weight[:end] * np.sqrt(poi_factor[poi[:end]])
    W = sparse.csr_matrix((data, (comm[:end], cols)), shape=(n, n_hours * m))
    return np.asarray((W @ W.T).todense())


# ---------------------------------------------------------------------------
# numba implementations

if numba is not None:

    @njit(cache=True, nogil=True)
    def _simulate_nb(hour_ptr, comm, poi, weight, pop, poi_factor, beta_poi, beta_base,
                     sigma_h, gamma_h, ifr, delay_h, S, E, I, R, V, D, pending,
                     start_hour, n_hours, vac_hour, vac_frac, homogeneous, stochastic, seed,
                     daily_deaths, daily_infections, cum_inf, prev_sum, sus_sum):
        n = pop.size
        m = poi_factor.size
        if stochastic:
            np.random.seed(seed)
        clamped = 0
        total_pop = 0.0
        for c in range(n):
            total_pop += pop[c]
        prev = np.empty(n)
        lam = np.zeros(m)
        hazard = np.empty(n)
        for step in range(n_hours):
            t = start_hour + step
            day = step // 24

            for c in range(n):
                if vac_hour[c] == t:
                    if stochastic:
                        moved = float(np.random.binomial(np.int64(S[c]), vac_frac[c]))
                    else:
                        moved = S[c] * vac_frac[c]
                    S[c] -= moved
                    V[c] += moved

            total_i = 0.0
            for c in range(n):
                prev[c] = I[c] / pop[c]
                prev_sum[c] += prev[c]
                sus_sum[c] += S[c] / pop[c]
                total_i += I[c]

            if homogeneous:
                h = beta_base / 24.0 * total_i / total_pop
                for c in range(n):
                    hazard[c] = h
            else:
                lo = hour_ptr[t]
                hi = hour_ptr[t + 1]
                for j in range(m):
                    lam[j] = 0.0
                for k in range(lo, hi):
                    lam[poi[k]] += weight[k] * prev[comm[k]]
                for j in range(m):
                    lam[j] *= poi_factor[j]
                for c in range(n):
                    hazard[c] = 0.0
                for k in range(lo, hi):
                    hazard[comm[k]] += weight[k] * lam[poi[k]]
                for c in range(n):
                    hazard[c] = beta_poi * hazard[c] / pop[c] + beta_base / 24.0 * prev[c]

            slot = t % delay_h if delay_h > 0 else 0
            for c in range(n):
                prob = hazard[c] if hazard[c] < 1.0 else 1.0
                if stochastic:
                    new_e = float(np.random.binomial(np.int64(S[c]), prob))
                    new_i = float(np.random.binomial(np.int64(E[c]), sigma_h))
                    new_r = float(np.random.binomial(np.int64(I[c]), gamma_h))
                    doomed = float(np.random.binomial(np.int64(new_r), ifr[c]))
                else:
                    new_e = S[c] * prob
                    new_i = E[c] * sigma_h
                    new_r = I[c] * gamma_h
                    doomed = new_r * ifr[c]
                S[c] -= new_e
                E[c] += new_e - new_i
                I[c] += new_i - new_r
                R[c] += new_r
                if delay_h > 0:
                    released = pending[c, slot]
                    pending[c, slot] = doomed
                else:
                    released = doomed
                R[c] -= released
                D[c] += released
                if S[c] < 0:
                    S[c] = 0.0
                    clamped += 1
                if E[c] < 0:
                    E[c] = 0.0
                    clamped += 1
                if I[c] < 0:
                    I[c] = 0.0
                    clamped += 1
                if R[c] < 0:
                    R[c] = 0.0
                    clamped += 1
                cum_inf[c] += new_e
                daily_deaths[day] += released
                daily_infections[day] += new_e
        return clamped

    @njit(cache=True, nogil=True)
    def _contact_matrix_nb(hour_ptr, comm, poi, weight, poi_factor, n, n_hours):
        m = poi_factor.size
        out = np.zeros((n, n))
        counts = np.zeros(m + 1, np.int64)
        for t in range(n_hours):
            lo = hour_ptr[t]
            hi = hour_ptr[t + 1]
            size = hi - lo
            if size == 0:
                continue
            # bucket this hour's entries by POI
            for j in range(m + 1):
                counts[j] = 0
            for k in range(lo, hi):
                counts[poi[k] + 1] += 1
            for j in range(m):
                counts[j + 1] += counts[j]
            order = np.empty(size, np.int64)
            fill = counts[:m].copy()
            for k in range(lo, hi):
                j = poi[k]
                order[fill[j]] = k
                fill[j] += 1
            for j in range(m):
                a0 = counts[j]
                a1 = counts[j + 1]
                f = poi_factor[j]
                for x in range(a0, a1):
                    kx = order[x]
                    cx = comm[kx]
                    wx = weight[kx] * f
                    for y in range(a0, a1):
                        ky = order[y]
                        out[cx, comm[ky]] += wx * weight[ky]
        return out


def simulate(*args):
    if USE_NUMBA:
        return _simulate_nb(*args)
    return simulate_numpy(*args)


def contact_matrix(hour_ptr, comm, poi, weight, poi_factor, n, n_hours):
    if USE_NUMBA:
        return _contact_matrix_nb(hour_ptr, comm, poi, weight, poi_factor, n, n_hours)
    return contact_matrix_numpy(hour_ptr, comm, poi, weight, poi_factor, n, n_hours)
