"""
Fourier tools for periodic samples on a uniform grid.

All routines take real samples ``f[0..n-1]`` of a function of period
``period`` and work through ``numpy.fft.rfft``/``irfft``.
"""
import numpy as np


def wavenumbers(n: int, period: float) -> np.ndarray:
    """Angular wavenumbers 2*pi*m/period for the rfft modes m = 0..n//2."""
    return 2.0 * np.pi * np.arange(n // 2 + 1) / period


def derivative(f, period: float, order: int = 1) -> np.ndarray:
    """
    Spectral derivative of periodic samples.

    Args:
        f (array_like): Samples on a uniform grid
        period (float): Length of the periodic interval
        order (int): Derivative order (>= 0)

    Returns:
        Samples of the derivative of the trigonometric interpolant
    """
    f = np.asarray(f, dtype=float)
    if order == 0:
        return f.copy()
    n = f.size
    coeffs = np.fft.rfft(f)
    coeffs *= (1j * wavenumbers(n, period)) ** order
    # The Nyquist mode has no odd derivative on a real grid
    if order % 2 == 1 and n % 2 == 0:
        coeffs[-1] = 0.0
    return np.fft.irfft(coeffs, n=n)


def lowpass(f, max_mode: int) -> np.ndarray:
    """Drop every Fourier mode with index above ``max_mode``."""
    f = np.asarray(f, dtype=float)
    coeffs = np.fft.rfft(f)
    coeffs[max_mode + 1:] = 0.0
    return np.fft.irfft(coeffs, n=f.size)


def resample(f, m: int) -> np.ndarray:
    """
    Evaluate the trigonometric interpolant of ``f`` on ``m`` uniform points.

    Upsampling is exact for band-limited data; downsampling truncates the
    spectrum to the modes the coarse grid can hold.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    if m == n:
        return f.copy()
    coeffs = np.fft.rfft(f)
    out = np.zeros(m // 2 + 1, dtype=complex)
    keep = min(n // 2, m // 2)
    out[:keep + 1] = coeffs[:keep + 1]
    # Split a shared Nyquist coefficient between +m/2 and -m/2
    if n % 2 == 0 and keep == n // 2 and m > n:
        out[keep] *= 0.5
    if m % 2 == 0 and keep == m // 2 and m < n:
        out[keep] = out[keep].real * 2.0
    return np.fft.irfft(out, n=m) * (m / n)


def integrate(f, period: float) -> float:
    """Periodic trapezoid rule, spectrally accurate for smooth data."""
    f = np.asarray(f, dtype=float)
    return float(np.sum(f) * period / f.size)


def antiderivative(f, period: float) -> np.ndarray:
    """
    Zero-mean antiderivative of zero-mean periodic samples.

    The mean of ``f`` is discarded; callers integrating tangents of a
    closed curve rely on it vanishing.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    coeffs = np.fft.rfft(f)
    k = wavenumbers(n, period)
    out = np.zeros_like(coeffs)
    out[1:] = coeffs[1:] / (1j * k[1:])
    if n % 2 == 0:
        out[-1] = 0.0
    return np.fft.irfft(out, n=n)
