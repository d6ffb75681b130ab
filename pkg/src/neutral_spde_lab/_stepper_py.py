"""Pure-numpy time-stepping kernel (fallback for the compiled ``_stepper``)."""
import numpy as np


def advance(hist, pos, z, dW, wg, wq, a, b, h, alpha1, c_shift, semi, stride, y_out, z_out):
    """Advance every replica and mode by ``dW.shape[1]`` steps, in place.

    ``hist`` has shape (R, K, 2M) and stores each history value twice
    (index i and i + M) so the window ``hist[..., pos:pos+M]`` -- nodes
    theta = -r .. 0 -- is contiguous.  ``z`` (R, K) holds the neutral
    bracket.  With ``Q_w[y] = sum_j w_j y(t + theta_j)`` the drift is

        -a y(t) - a (c_shift y(t-r) + Q_wq[y])

    and the bracket is ``y - alpha1 y(t-r) - Q_wg[y]``, solved for the new
    endpoint value after each step.  Every ``stride``-th state is written
    to ``y_out``/``z_out``.  Returns the new ring position.
    """
    R, K, M2 = hist.shape
    M = wg.size
    N = M - 1
    use_g = bool(np.any(wg))
    use_q = bool(np.any(wq))
    g_end = wg[N]
    nsteps = dW.shape[1]
    p = pos
    o = 0
    for s in range(nsteps):
        w = hist[:, :, p:p + M]
        yt = w[:, :, N]
        G = c_shift * w[:, :, 0]
        if use_q:
            G = G + w @ wq
        S = alpha1 * w[:, :, 1]
        if use_g:
            S = S + w[:, :, 1:] @ wg[:N]
        noise = dW[:, s, None] * b
        if semi:
            yn = (z - h * a * G + noise + S) / (1.0 - g_end + h * a)
            zn = (1.0 - g_end) * yn - S
        else:
            zn = z + h * (-a * yt - a * G) + noise
            yn = (zn + S) / (1.0 - g_end)
        z[...] = zn
        hist[:, :, p] = yn
        hist[:, :, p + M] = yn
        p += 1
        if p == M:
            p = 0
        if (s + 1) % stride == 0:
            y_out[:, o, :] = hist[:, :, p + N]
            z_out[:, o, :] = z
            o += 1
    return p
