"""NumPy reference implementation of the LSTM time-step loops.

Same contract as the compiled extension (`_core`): the wrapper in
`kernels.py` does the bulk input/weight products outside the loop, these
functions only iterate over time. Gate packing order is i, f, g, o.
"""

import numpy as np
from scipy.special import expit

NAME = "python"


def forward_loop(G, U, h0, c0, mh, C, Hseq):
    """Run the recurrence over time.

    G arrives holding the input-side preactivations (x_t @ W + b) for every
    step and is overwritten in place with the post-activation gates. C and
    Hseq receive the cell and hidden states. mh is the recurrent-dropout
    mask (ones when disabled), applied to h before the gate product only;
    the carried state itself is never dropped.
    """
    B, T, H4 = G.shape
    H = H4 // 4
    h = h0.copy()
    c = c0.copy()
    for t in range(T):
        z = G[:, t, :]
        z += (h * mh) @ U
        i = expit(z[:, :H])
        f = expit(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = expit(z[:, 3 * H :])
        z[:, :H] = i
        z[:, H : 2 * H] = f
        z[:, 2 * H : 3 * H] = g
        z[:, 3 * H :] = o
        c = f * c + i * g
        h = o * np.tanh(c)
        C[:, t, :] = c
        Hseq[:, t, :] = h


def backward_loop(G, C, Hseq, h0, c0, U, mh, dHseq, dcT, dZ, dh0, dc0):
    """Reverse pass: fills dZ (gate-preactivation grads), dh0 and dc0.

    dHseq carries the loss gradient at every step's hidden output; steps a
    model never reads are simply zero there.
    """
    B, T, H4 = G.shape
    H = H4 // 4
    dh = np.zeros((B, H))
    dc = dcT.copy()
    Ut = U.T
    for t in range(T - 1, -1, -1):
        gates = G[:, t, :]
        i = gates[:, :H]
        f = gates[:, H : 2 * H]
        g = gates[:, 2 * H : 3 * H]
        o = gates[:, 3 * H :]
        tc = np.tanh(C[:, t, :])
        dht = dHseq[:, t, :] + dh
        dct = dc + dht * o * (1.0 - tc * tc)
        c_prev = C[:, t - 1, :] if t > 0 else c0
        dz = dZ[:, t, :]
        dz[:, :H] = (dct * g) * i * (1.0 - i)
        dz[:, H : 2 * H] = (dct * c_prev) * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = (dct * i) * (1.0 - g * g)
        dz[:, 3 * H :] = (dht * tc) * o * (1.0 - o)
        dc = dct * f
        dh = (dz @ Ut) * mh
    dh0[:] = dh
    dc0[:] = dc
