"""Pure-Python mirror of the compiled kernels.

Selected automatically when the Cython extension is unavailable (or when
``POLYQ_BACKEND=python``).  Every floating-point operation here is written in
the exact order the compiled kernel uses, and action sampling consumes one
``Generator.random()`` double per agent per stage exactly as the compiled
path does, so the two backends produce bit-identical trajectories.

Do not "optimize" the arithmetic into numpy reductions: summation order is
part of the contract.
"""

from __future__ import annotations

import math

BACKEND_NAME = "python"

# Guards denormal underflow in the step-size ratio; never binds at moderate
# temperatures with bounded payoffs.
_MIN_PROB = 1e-300


def run_stages(
    U,
    counts,
    obs,
    q_check,
    q_hat,
    beliefs,
    tracker,
    rngs,
    stage_start,
    num_stages,
    alpha_c,
    alpha_k0,
    alpha_rho,
    tau,
    probs,
    actions,
    payoffs,
    steps,
    clamped,
    order=None,
):
    """Advance the learning dynamics ``num_stages`` stages in place.

    ``q_check``, ``q_hat`` are (n, m_max); ``beliefs`` is (n, n, m_max) with
    row (i, j) meaningful only when ``obs[i, j]``; ``tracker`` is an optional
    (n, m_max) array of weighted empirical action averages updated with the
    common step size.  ``probs``, ``actions``, ``payoffs``, ``steps`` and
    ``clamped`` are working buffers that hold the last executed stage's
    smoothed-best-response probabilities, joint actions, realized payoffs,
    applied payoff-estimate step sizes, and threshold flags.

    ``order`` permutes the per-agent processing order; because each agent
    reads only pre-stage state and writes only its own slices (from its own
    random sub-stream), any order yields the identical trajectory.

    Returns the last stage index at which the step-size threshold clamped,
    or -1 if it never fired during this call.
    """
    n = len(counts)
    if order is None:
        order = range(n)
    last_clamp = -1
    for local in range(num_stages):
        k = stage_start + local
        alpha = alpha_c / (k + alpha_k0) ** alpha_rho

        # Phase 1: smoothed best responses and simultaneous action draws.
        for i in order:
            m = counts[i]
            qmax = -math.inf
            for a in range(m):
                q = q_check[i, a] + q_hat[i, a]
                if q > qmax:
                    qmax = q
            total = 0.0
            for a in range(m):
                e = math.exp((q_check[i, a] + q_hat[i, a] - qmax) / tau)
                probs[i, a] = e
                total += e
            for a in range(m):
                probs[i, a] = probs[i, a] / total
            u = rngs[i].random()
            act = m - 1
            cum = 0.0
            for a in range(m):
                cum += probs[i, a]
                if u < cum:
                    act = a
                    break
            actions[i] = act

        # Phase 2: realized payoffs of the joint profile.
        for i in order:
            pay = 0.0
            ai = actions[i]
            for j in range(n):
                if j != i:
                    pay += U[i, j, ai, actions[j]]
            payoffs[i] = pay

        # Phase 3: per-agent estimator updates from pre-stage quantities.
        for i in order:
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

        if tracker is not None:
            for i in order:
                ai = actions[i]
                for a in range(counts[i]):
                    e_a = 1.0 if a == ai else 0.0
                    tracker[i, a] = tracker[i, a] + alpha * (e_a - tracker[i, a])

    return last_clamp


def _flow_field(U, counts, obs, tau, Y, br, dY):
    """Mean-field drift of (belief-part, payoff-part, empirical average)."""
    n = len(counts)
    qc = Y[0]
    qh = Y[1]
    pi = Y[2]
    for j in range(n):
        mj = counts[j]
        qmax = -math.inf
        for b in range(mj):
            q = qc[j, b] + qh[j, b]
            if q > qmax:
                qmax = q
        total = 0.0
        for b in range(mj):
            e = math.exp((qc[j, b] + qh[j, b] - qmax) / tau)
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
            dY[0, i, a] = s_obs - qc[i, a]
            dY[1, i, a] = s_un - qh[i, a]
            dY[2, i, a] = br[i, a] - pi[i, a]


def integrate_flow(
    U,
    counts,
    obs,
    tau,
    Y,
    h,
    num_steps,
    use_rk4,
    sample_steps,
    out_samples,
    br,
    K1,
    K2,
    K3,
    K4,
    Ytmp,
):
    """Fixed-step integration of the mean-field flow, mutating ``Y``.

    States are recorded into ``out_samples[s]`` whenever the step counter
    reaches ``sample_steps[s]`` (sorted, starting at 0).  After every step the
    empirical-average block is clamped at zero and renormalized onto the
    simplex; the largest pre-renormalization |sum - 1| is returned together
    with the step index at which a non-finite value first appeared (-1 if the
    state stayed finite).
    """
    n = len(counts)
    max_drift = 0.0
    s_idx = 0
    num_samples = len(sample_steps)
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
            mi = counts[i]
            ssum = 0.0
            for a in range(mi):
                v = Y[2, i, a]
                if v < 0.0:
                    v = 0.0
                    Y[2, i, a] = 0.0
                ssum += v
            drift = abs(ssum - 1.0)
            if drift > max_drift:
                max_drift = drift
            for a in range(mi):
                Y[2, i, a] = Y[2, i, a] / ssum

        for c in range(3):
            for i in range(n):
                for a in range(counts[i]):
                    if not math.isfinite(Y[c, i, a]):
                        return max_drift, step
    return max_drift, -1
