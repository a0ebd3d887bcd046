"""Numba kernels for the hot simulation loops.

All kernels advance a fixed number of steps over pre-drawn random chunks
(one row per entity), so results are bit-reproducible for a given seed and
independent of chunking.  Spike times are recorded as step indices; the end
of step k is time (k+1)*dt.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _advance(u_prev, I, a_m, dtC, theta, noise, bridge_u, noise_amp, var_step):
    """One free (non-refractory) membrane step; returns (u_new, spiked)."""
    u_new = a_m * u_prev + dtC * I + noise_amp * noise
    if u_new >= theta:
        return u_new, True
    if var_step > 0.0:
        p_cross = np.exp(-2.0 * (theta - u_prev) * (theta - u_new) / var_step)
        if bridge_u < p_cross:
            return u_new, True
    return u_new, False


@njit(cache=True)
def network_chunk(u, isyn, refr,
                  Q, q_bias, p_bias,
                  seg_of_step, I_seg,
                  normals, bridge_u, bias_u,
                  a_m, dtC, theta, u_rst, noise_amp, var_step,
                  refr_steps, decay_syn, inv_tau_syn,
                  layer_of, n_layers,
                  wd_on, wd_thresh_counts, wd_current, wd_win,
                  wd_ring, wd_sum, wd_pos, wd_release,
                  step0, out_ids, out_steps):
    """Advance a recurrent network by one chunk of steps.

    Q[i, j] is the charge delivered to j's synapse filter per spike of i.
    q_bias/p_bias define one Poisson bias source per neuron (charge, per-step
    probability).  External currents are piecewise constant: step k uses row
    I_seg[seg_of_step[k]].  The per-layer watchdog (wd_*) injects wd_current
    into every neuron of a layer while that layer's windowed spike count is
    below wd_thresh_counts, and keeps injecting for one full window after
    recovery.
    Returns the number of spikes written to out_ids/out_steps.
    """
    n = u.shape[0]
    K = normals.shape[1]
    n_out = 0
    pos = wd_pos[0]
    for k in range(K):
        seg = seg_of_step[k]
        # synapse decay + bias source arrivals
        for i in range(n):
            isyn[i] *= decay_syn
            if p_bias[i] > 0.0 and bias_u[i, k] < p_bias[i]:
                isyn[i] += q_bias[i] * inv_tau_syn
        # watchdog bookkeeping uses last window's counts
        for l in range(n_layers):
            if wd_on[l] != 0:
                if wd_sum[l] < wd_thresh_counts[l]:
                    wd_release[l] = wd_win
                elif wd_release[l] > 0:
                    wd_release[l] -= 1
                wd_sum[l] -= wd_ring[l, pos]
                wd_ring[l, pos] = 0
        for i in range(n):
            I = isyn[i] + I_seg[seg, i]
            l = layer_of[i]
            if wd_on[l] != 0 and wd_release[l] > 0:
                I += wd_current[l]
            if refr[i] > 0:
                refr[i] -= 1
                u[i] = u_rst
                continue
            u_new, spiked = _advance(u[i], I, a_m, dtC, theta,
                                     normals[i, k], bridge_u[i, k],
                                     noise_amp, var_step)
            if spiked:
                u[i] = u_rst
                refr[i] = refr_steps
                out_ids[n_out] = i
                out_steps[n_out] = step0 + k
                n_out += 1
                for j in range(n):
                    qij = Q[i, j]
                    if qij != 0.0:
                        isyn[j] += qij * inv_tau_syn
                if wd_on[l] != 0:
                    wd_ring[l, pos] += 1
                    wd_sum[l] += 1
            else:
                u[i] = u_new
        pos += 1
        if pos == wd_ring.shape[1]:
            pos = 0
    wd_pos[0] = pos
    return n_out


@njit(cache=True)
def lanes_chunk(u, isyn, refr,
                I_const, q_bias, p_bias,
                normals, bridge_u, bias_u,
                a_m, dtC, theta, u_rst, noise_amp, var_step,
                refr_steps, decay_syn, inv_tau_syn,
                counts):
    """Independent single neurons under constant current + optional bias source.

    Cheaper specialization of network_chunk for transfer-curve measurements;
    only spike counts are recorded.
    """
    n = u.shape[0]
    K = normals.shape[1]
    for k in range(K):
        for i in range(n):
            isyn[i] *= decay_syn
            if p_bias[i] > 0.0 and bias_u[i, k] < p_bias[i]:
                isyn[i] += q_bias[i] * inv_tau_syn
            if refr[i] > 0:
                refr[i] -= 1
                u[i] = u_rst
                continue
            u_new, spiked = _advance(u[i], I_const[i] + isyn[i], a_m, dtC,
                                     theta, normals[i, k], bridge_u[i, k],
                                     noise_amp, var_step)
            if spiked:
                u[i] = u_rst
                refr[i] = refr_steps
                counts[i] += 1
            else:
                u[i] = u_new


@njit(cache=True)
def trainer_chunk(W, bv, bh,
                  u, isyn, refr,
                  tr_v, tr_h, tr_sv, tr_sh,
                  I_data, data_on, g_steps,
                  normals, bridge_u, bias_u,
                  inv_beta, ln_gamma_tau, c_bias, p_bias,
                  a_m, dtC, theta, u_rst, noise_amp, var_step,
                  refr_steps, decay_syn,
                  A_w, A_b, decay_stdp, stdp_on,
                  counts_v, counts_h):
    """Event-driven CD epoch chunk on a visible/hidden network.

    Weights live in dimensionless units; a spike of visible i injects
    W[i, :] * inv_beta into hidden synapse currents (the charge W tau_syn/beta
    spread over the tau_syn filter) and symmetrically for hidden spikes.
    Bias Poisson sources deliver (b - ln(gamma tau_r))/beta / nu_bias per
    spike; their charge tracks the evolving biases.  The modulated pair STDP
    updates W and the biases in place; traces decay once per step.
    """
    nv = W.shape[0]
    nh = W.shape[1]
    n = nv + nh
    K = normals.shape[1]
    for k in range(K):
        g = g_steps[k]
        clamp = data_on[k] != 0
        for i in range(n):
            isyn[i] *= decay_syn
            if bias_u[i, k] < p_bias:
                b_i = bv[i] if i < nv else bh[i - nv]
                isyn[i] += (b_i - ln_gamma_tau) * inv_beta * c_bias
                if stdp_on and g != 0:
                    if i < nv:
                        bv[i] += g * (A_b / A_w) * tr_v[i]
                        tr_sv[i] += A_b
                    else:
                        bh[i - nv] += g * (A_b / A_w) * tr_h[i - nv]
                        tr_sh[i - nv] += A_b
        for i in range(n):
            I = isyn[i]
            if clamp and i < nv:
                I += I_data[i]
            if refr[i] > 0:
                refr[i] -= 1
                u[i] = u_rst
                continue
            u_new, spiked = _advance(u[i], I, a_m, dtC, theta,
                                     normals[i, k], bridge_u[i, k],
                                     noise_amp, var_step)
            if not spiked:
                u[i] = u_new
                continue
            u[i] = u_rst
            refr[i] = refr_steps
            if i < nv:
                counts_v[i] += 1
                for j in range(nh):
                    isyn[nv + j] += W[i, j] * inv_beta
                if stdp_on:
                    if g != 0:
                        for j in range(nh):
                            W[i, j] += g * tr_h[j]
                        bv[i] += g * tr_sv[i]
                    tr_v[i] += A_w
            else:
                j = i - nv
                counts_h[j] += 1
                for ii in range(nv):
                    isyn[ii] += W[ii, j] * inv_beta
                if stdp_on:
                    if g != 0:
                        for ii in range(nv):
                            W[ii, j] += g * tr_v[ii]
                        bh[j] += g * tr_sh[j]
                    tr_h[j] += A_w
        if stdp_on:
            for i in range(nv):
                tr_v[i] *= decay_stdp
                tr_sv[i] *= decay_stdp
            for j in range(nh):
                tr_h[j] *= decay_stdp
                tr_sh[j] *= decay_stdp


@njit(cache=True)
def gibbs_chunk(W, bv, bh, v, h, uniforms, codes):
    """Block-Gibbs iterations; one row of uniforms per iteration.

    Layout of each row: nh values for the hidden sweep, then nv for the
    visible sweep.  codes[k] packs the joint state, visible units in the low
    bits (unit i = bit i, hidden j = bit nv+j).
    """
    nv, nh = W.shape
    K = uniforms.shape[0]
    for k in range(K):
        for j in range(nh):
            x = bh[j]
            for i in range(nv):
                if v[i] != 0:
                    x += W[i, j]
            p = 1.0 / (1.0 + np.exp(-x))
            h[j] = 1 if uniforms[k, j] < p else 0
        for i in range(nv):
            x = bv[i]
            for j in range(nh):
                if h[j] != 0:
                    x += W[i, j]
            p = 1.0 / (1.0 + np.exp(-x))
            v[i] = 1 if uniforms[k, nh + i] < p else 0
        c = 0
        for i in range(nv):
            if v[i] != 0:
                c += 1 << i
        for j in range(nh):
            if h[j] != 0:
                c += 1 << (nv + j)
        codes[k] = c
    return


@njit(cache=True)
def hazard_chunk(Wj, b, zeta, psp, uniforms, alpha_psp, tau_steps,
                 psp_jump, psp_decay, step0, out_ids, out_steps):
    """Discrete-time hazard sampler (abstract neuron model).

    Units are scanned in fixed order each step.  A free unit (zeta <= 1)
    spikes with probability sigmoid(u - log tau_steps); a spike sets
    zeta = tau_steps, i.e. its binary state stays 1 for tau_steps steps and
    may be prolonged seamlessly by an immediate re-fire.  With alpha_psp the
    drive uses the filtered trains `psp` (jump psp_jump per spike, decay
    psp_decay per step); otherwise it uses the rectangular z boxes given by
    zeta > 0.
    """
    n = b.shape[0]
    K = uniforms.shape[1]
    log_tau = np.log(tau_steps)
    n_out = 0
    for k in range(K):
        if alpha_psp:
            for j in range(n):
                psp[j] *= psp_decay
        for i in range(n):
            if zeta[i] > 1:
                zeta[i] -= 1
                continue
            x = b[i]
            if alpha_psp:
                for j in range(n):
                    if Wj[j, i] != 0.0:
                        x += Wj[j, i] * psp[j]
            else:
                for j in range(n):
                    if zeta[j] > 0 and Wj[j, i] != 0.0:
                        x += Wj[j, i]
            p = 1.0 / (1.0 + np.exp(-(x - log_tau)))
            if uniforms[i, k] < p:
                zeta[i] = tau_steps
                out_ids[n_out] = i
                out_steps[n_out] = step0 + k
                n_out += 1
                if alpha_psp:
                    psp[i] += psp_jump
            else:
                zeta[i] = 0
    return n_out
