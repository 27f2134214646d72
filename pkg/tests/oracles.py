"""Slow, obviously-correct reference implementations used only by tests."""
import numpy as np


def dft(x):
    """O(N^2) DFT of a 1-D signal; twiddle index reduced mod N before the exp."""
    n = len(x)
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * jk / n) @ np.asarray(x, dtype=np.complex128)


def stft_reference(samples, n_fft, hop):
    """Centered STFT: reflect-pad by n_fft/2, periodic Hann, one DFT per frame."""
    pad = n_fft // 2
    padded = np.pad(np.asarray(samples, dtype=np.float64), pad, mode="reflect")
    window = np.array([0.5 - 0.5 * np.cos(2 * np.pi * i / n_fft) for i in range(n_fft)])
    n_frames = 1 + (len(padded) - n_fft) // hop
    cols = [dft(padded[t * hop : t * hop + n_fft] * window)[: n_fft // 2 + 1] for t in range(n_frames)]
    return np.stack(cols, axis=1)


def conv2d_reference(x, w, groups=1):
    """Grouped same-padded cross-correlation by explicit loops over taps (float64)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, cg, k, _ = w.shape
    og, pad = o // groups, (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, o, h, wd))
    for oc in range(o):
        g = oc // og
        for ci in range(cg):
            for ki in range(k):
                for kj in range(k):
                    out[:, oc] += w[oc, ci, ki, kj] * xp[:, g * cg + ci, ki : ki + h, kj : kj + wd]
    return out


def numeric_grad(f, x, h=1e-3):
    """Central finite differences of scalar ``f`` with respect to array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g
