# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the stage loop and the mean-field flow integrator.

Mirrors ``_kernels_py`` operation for operation; uniform draws come from the
same numpy bit-generator streams via their C interface, so the two backends
produce bit-identical trajectories.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, fabs, isfinite, pow

from numpy.random cimport bitgen_t

BACKEND_NAME = "compiled"

cdef double _MIN_PROB = 1e-300
cdef const char *_CAPSULE_NAME = "BitGenerator"


cdef bitgen_t *_bitgen(object generator) except NULL:
    capsule = generator.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE_NAME):
        raise ValueError("expected a numpy Generator-backed bit generator")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE_NAME)


def run_stages(
    const double[:, :, :, ::1] U,
    const long long[::1] counts,
    const unsigned char[:, ::1] obs,
    double[:, ::1] q_check,
    double[:, ::1] q_hat,
    double[:, :, ::1] beliefs,
    tracker,
    rngs,
    long long stage_start,
    long long num_stages,
    double alpha_c,
    double alpha_k0,
    double alpha_rho,
    double tau,
    double[:, ::1] probs,
    long long[::1] actions,
    double[::1] payoffs,
    double[::1] steps,
    unsigned char[::1] clamped,
    order=None,
):
    """See ``_kernels_py.run_stages``; ``order`` is accepted but the compiled
    loop always processes agents in index order (equivalent by construction)."""
    cdef Py_ssize_t n = counts.shape[0]
    cdef bitgen_t *gens[64]
    cdef Py_ssize_t i, j, a, b, m, mj, act, ai, aj
    cdef long long local, k, last_clamp = -1
    cdef double alpha, q, qmax, total, e, u, cum, pay
    cdef double u_obs, ucheck_at_played, uhat, pb, ratio, step_size, e_b
    cdef bint has_tracker = tracker is not None
    cdef double[:, ::1] trk

    if n > 64:
        raise ValueError("compiled kernel supports at most 64 agents")
    if has_tracker:
        trk = tracker
    for i in range(n):
        gens[i] = _bitgen(rngs[i])

    for local in range(num_stages):
        k = stage_start + local
        alpha = alpha_c / pow(k + alpha_k0, alpha_rho)

        for i in range(n):
            m = counts[i]
            qmax = q_check[i, 0] + q_hat[i, 0]
            for a in range(1, m):
                q = q_check[i, a] + q_hat[i, a]
                if q > qmax:
                    qmax = q
            total = 0.0
            for a in range(m):
                e = exp((q_check[i, a] + q_hat[i, a] - qmax) / tau)
                probs[i, a] = e
                total += e
            for a in range(m):
                probs[i, a] = probs[i, a] / total
            u = gens[i].next_double(gens[i].state)
            act = m - 1
            cum = 0.0
            for a in range(m):
                cum += probs[i, a]
                if u < cum:
                    act = a
                    break
            actions[i] = act

        for i in range(n):
            pay = 0.0
            ai = actions[i]
            for j in range(n):
                if j != i:
                    pay += U[i, j, ai, actions[j]]
            payoffs[i] = pay

        for i in range(n):
            m = counts[i]
            ai = actions[i]

            ucheck_at_played = 0.0
            for a in range(m):
                u_obs = 0.0
                for j in range(n):
                    if j != i and obs[i, j]:
                        u_obs += U[i, j, a, actions[j]]
                if a == ai:
                    ucheck_at_played = u_obs
                q_check[i, a] = q_check[i, a] + alpha * (u_obs - q_check[i, a])

            for j in range(n):
                if j != i and obs[i, j]:
                    aj = actions[j]
                    mj = counts[j]
                    for b in range(mj):
                        e_b = 1.0 if b == aj else 0.0
                        beliefs[i, j, b] = beliefs[i, j, b] + alpha * (
                            e_b - beliefs[i, j, b]
                        )

            uhat = payoffs[i] - ucheck_at_played
            pb = probs[i, ai]
            if pb < _MIN_PROB:
                pb = _MIN_PROB
            ratio = alpha / pb
            if ratio > 1.0:
                step_size = 1.0
                clamped[i] = 1
                last_clamp = k
            else:
                step_size = ratio
                clamped[i] = 0
            q_hat[i, ai] = q_hat[i, ai] + step_size * (uhat - q_hat[i, ai])
            steps[i] = step_size

        if has_tracker:
            for i in range(n):
                ai = actions[i]
                for a in range(counts[i]):
                    e_b = 1.0 if a == ai else 0.0
                    trk[i, a] = trk[i, a] + alpha * (e_b - trk[i, a])

    return last_clamp


cdef void _flow_field(
    const double[:, :, :, ::1] U,
    const long long[::1] counts,
    const unsigned char[:, ::1] obs,
    double tau,
    double[:, :, ::1] Y,
    double[:, ::1] br,
    double[:, :, ::1] dY,
) noexcept nogil:
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t i, j, a, b, mi, mj
    cdef double q, qmax, total, e, s_obs, s_un, t
    for j in range(n):
        mj = counts[j]
        qmax = Y[0, j, 0] + Y[1, j, 0]
        for b in range(1, mj):
            q = Y[0, j, b] + Y[1, j, b]
            if q > qmax:
                qmax = q
        total = 0.0
        for b in range(mj):
            e = exp((Y[0, j, b] + Y[1, j, b] - qmax) / tau)
            br[j, b] = e
            total += e
        for b in range(mj):
            br[j, b] = br[j, b] / total
    for i in range(n):
        mi = counts[i]
        for a in range(mi):
            s_obs = 0.0
            s_un = 0.0
            for j in range(n):
                if j == i:
                    continue
                t = 0.0
                for b in range(counts[j]):
                    t += U[i, j, a, b] * br[j, b]
                if obs[i, j]:
                    s_obs += t
                else:
                    s_un += t
            dY[0, i, a] = s_obs - Y[0, i, a]
            dY[1, i, a] = s_un - Y[1, i, a]
            dY[2, i, a] = br[i, a] - Y[2, i, a]


def integrate_flow(
    const double[:, :, :, ::1] U,
    const long long[::1] counts,
    const unsigned char[:, ::1] obs,
    double tau,
    double[:, :, ::1] Y,
    double h,
    long long num_steps,
    bint use_rk4,
    const long long[::1] sample_steps,
    double[:, :, :, ::1] out_samples,
    double[:, ::1] br,
    double[:, :, ::1] K1,
    double[:, :, ::1] K2,
    double[:, :, ::1] K3,
    double[:, :, ::1] K4,
    double[:, :, ::1] Ytmp,
):
    """See ``_kernels_py.integrate_flow``."""
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t i, a, c, s_idx = 0
    cdef Py_ssize_t num_samples = sample_steps.shape[0]
    cdef long long step
    cdef double max_drift = 0.0
    cdef double ssum, v, drift
    cdef long long bad_step = -1

    with nogil:
        for step in range(num_steps + 1):
            if s_idx < num_samples and sample_steps[s_idx] == step:
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            out_samples[s_idx, c, i, a] = Y[c, i, a]
                s_idx += 1
            if step == num_steps:
                break

            if use_rk4:
                _flow_field(U, counts, obs, tau, Y, br, K1)
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            Ytmp[c, i, a] = Y[c, i, a] + 0.5 * h * K1[c, i, a]
                _flow_field(U, counts, obs, tau, Ytmp, br, K2)
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            Ytmp[c, i, a] = Y[c, i, a] + 0.5 * h * K2[c, i, a]
                _flow_field(U, counts, obs, tau, Ytmp, br, K3)
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            Ytmp[c, i, a] = Y[c, i, a] + h * K3[c, i, a]
                _flow_field(U, counts, obs, tau, Ytmp, br, K4)
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            Y[c, i, a] = Y[c, i, a] + (h / 6.0) * (
                                K1[c, i, a]
                                + 2.0 * K2[c, i, a]
                                + 2.0 * K3[c, i, a]
                                + K4[c, i, a]
                            )
            else:
                _flow_field(U, counts, obs, tau, Y, br, K1)
                for c in range(3):
                    for i in range(n):
                        for a in range(counts[i]):
                            Y[c, i, a] = Y[c, i, a] + h * K1[c, i, a]

            for i in range(n):
                ssum = 0.0
                for a in range(counts[i]):
                    v = Y[2, i, a]
                    if v < 0.0:
                        v = 0.0
                        Y[2, i, a] = 0.0
                    ssum += v
                drift = fabs(ssum - 1.0)
                if drift > max_drift:
                    max_drift = drift
                for a in range(counts[i]):
                    Y[2, i, a] = Y[2, i, a] / ssum

            for c in range(3):
                for i in range(n):
                    for a in range(counts[i]):
                        if not isfinite(Y[c, i, a]):
                            bad_step = step
                            break
                    if bad_step >= 0:
                        break
                if bad_step >= 0:
                    break
            if bad_step >= 0:
                break

    return max_drift, bad_step
