"""Value noise, fractal layering and small image filters used by the synthesizer."""

from __future__ import annotations

import numpy as np


def _fade(t):
    # quintic smoothstep keeps lattice seams out of the gradient field
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(height, width, scale, rng):
    """Smoothly interpolated lattice noise in [0, 1]."""
    scale = max(float(scale), 1.0)
    gh = int(np.ceil(height / scale)) + 2
    gw = int(np.ceil(width / scale)) + 2
    grid = rng.random((gh, gw))

    y = np.linspace(0, (height - 1) / scale, height)
    x = np.linspace(0, (width - 1) / scale, width)
    yi, xi = np.floor(y).astype(int), np.floor(x).astype(int)
    yf, xf = _fade(y - yi), _fade(x - xi)

    yi_m, xi_m = np.meshgrid(yi, xi, indexing="ij")
    fy, fx = np.meshgrid(yf, xf, indexing="ij")
    v00 = grid[yi_m, xi_m]
    v01 = grid[yi_m, xi_m + 1]
    v10 = grid[yi_m + 1, xi_m]
    v11 = grid[yi_m + 1, xi_m + 1]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def fbm(height, width, octaves, rng, base_scale=None, persistence=0.5,
        lacunarity=2.0):
    """Fractal sum of value-noise octaves, normalized to [0, 1]."""
    if base_scale is None:
        base_scale = max(height, width) / 2.0
    out = np.zeros((height, width))
    amp, total, scl = 1.0, 0.0, float(base_scale)
    for _ in range(max(1, int(octaves))):
        out += amp * value_noise(height, width, scl, rng)
        total += amp
        amp *= persistence
        scl /= lacunarity
    return out / total


def gaussian_blur(img, sigma):
    """Separable Gaussian blur on a 2-D array; no-op for sigma <= 0."""
    if sigma <= 0:
        return img
    radius = max(1, int(np.ceil(3 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(img, radius, mode="reflect")
    tmp = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, padded)
    out = np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, tmp)
    return out


def spectrum_slope(gray):
    """Slope of the radially averaged log power spectrum of a 2-D image.

    A single scalar summary of image texture statistics: blurring or
    smoothing steepens (lowers) the slope, grain flattens it.
    """
    gray = np.asarray(gray, dtype=np.float64)
    f = np.fft.fftshift(np.fft.fft2(gray - gray.mean()))
    power = np.abs(f) ** 2
    h, w = gray.shape
    cy, cx = h // 2, w // 2
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - cy, xx - cx).astype(int)
    rmax = min(cy, cx)
    sums = np.bincount(r.ravel(), weights=power.ravel(), minlength=rmax + 1)
    counts = np.bincount(r.ravel(), minlength=rmax + 1)
    radii = np.arange(1, rmax)
    profile = sums[1:rmax] / np.maximum(counts[1:rmax], 1)
    valid = profile > 0
    logs_r = np.log(radii[valid])
    logs_p = np.log(profile[valid])
    slope = np.polyfit(logs_r, logs_p, 1)[0]
    return float(slope)
