"""Fourier features for timestamps and denoising times."""
import math

import numpy as np

DEFAULT_FREQS = 8


def fourier_encode(t, freqs=DEFAULT_FREQS):
    """Encode a scalar time as [sin(2^j*pi*t), cos(2^j*pi*t)], j=0..freqs-1.

    Interleaved sin-then-cos per frequency; output length 2*freqs.
    """
    if freqs < 1:
        raise ValueError("freqs must be >= 1")
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"non-finite timestamp {t!r}")
    out = np.empty(2 * freqs)
    for j in range(freqs):
        angle = (2.0 ** j) * math.pi * t
        out[2 * j] = math.sin(angle)
        out[2 * j + 1] = math.cos(angle)
    return out


def fourier_encode_many(ts, freqs=DEFAULT_FREQS):
    """Vectorized fourier_encode: ts (...,) -> (..., 2*freqs)."""
    ts = np.asarray(ts, dtype=np.float64)
    if not np.isfinite(ts).all():
        raise ValueError("non-finite timestamp in batch")
    if freqs < 1:
        raise ValueError("freqs must be >= 1")
    scales = (2.0 ** np.arange(freqs)) * np.pi
    angles = ts[..., None] * scales
    out = np.empty(ts.shape + (2 * freqs,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out
