"""Fourier-Galerkin right-hand sides for periodic problems on [0, 2*pi).

A Fourier state is a complex vector of M coefficients in numpy FFT order,
``u(x) = sum_k modes[k] exp(i k x)`` with wavenumbers ``wavenumbers(M)``.
The k = -M/2 coefficient is always held at zero so positive and negative
modes stay balanced.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PDES",
    "wavenumbers",
    "to_modes",
    "to_values",
    "eval_modes",
    "dealias_product",
    "fourier_rhs",
]

PDES = ("advection", "advection_diffusion", "viscous_burgers")


def wavenumbers(M: int) -> np.ndarray:
    return np.fft.fftfreq(M, d=1.0 / M)


def _check_even(M):
    if M % 2:
        raise ValueError(f"Fourier states need an even number of modes, got {M}")


def to_modes(values) -> np.ndarray:
    """Coefficients of the trigonometric interpolant through M uniform samples."""
    values = np.asarray(values)
    M = values.shape[-1]
    _check_even(M)
    modes = np.fft.fft(values, axis=-1) / M
    modes[..., M // 2] = 0.0
    return modes


def to_values(modes) -> np.ndarray:
    """Real samples at the M uniform points ``2*pi*j/M``."""
    modes = np.asarray(modes)
    M = modes.shape[-1]
    return np.real(np.fft.ifft(modes, axis=-1) * M)


def eval_modes(modes, x) -> np.ndarray:
    """Evaluate the Fourier series at arbitrary points (real part)."""
    modes = np.asarray(modes)
    k = wavenumbers(modes.shape[-1])
    E = np.exp(1j * np.multiply.outer(np.asarray(x, float), k))
    return np.real(E @ modes.T).T if modes.ndim > 1 else np.real(E @ modes)


def _padded_size(M):
    n = -(-3 * M // 2)
    return n + (n % 2)


def _pad(modes, Mp):
    M = modes.size
    out = np.zeros(Mp, dtype=complex)
    half = M // 2
    out[:half] = modes[:half]
    out[Mp - half :] = modes[half:]
    return out


def _truncate(padded, M):
    Mp = padded.size
    half = M // 2
    out = np.concatenate([padded[:half], padded[Mp - half :]])
    out[half] = 0.0  # the unpaired -M/2 mode is never carried
    return out


def dealias_product(a, b) -> np.ndarray:
    """Coefficients of the pointwise product ``a*b`` using 3/2-rule padding.

    Exact (no aliasing) for inputs supported on the M representable modes.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("both states must be 1-D with the same number of modes")
    M = a.size
    _check_even(M)
    Mp = _padded_size(M)
    ua = np.fft.ifft(_pad(a, Mp)) * Mp
    ub = ua if b is a else np.fft.ifft(_pad(b, Mp)) * Mp
    prod = np.fft.fft(ua * ub) / Mp
    return _truncate(prod, M)


def fourier_rhs(pde: str, modes, nu: float = 0.0) -> np.ndarray:
    """Time derivative of the Fourier coefficients for ``pde``.

    advection: -ik u_k; advection_diffusion: (-ik - nu k^2) u_k;
    viscous_burgers: -(ik/2) (u^2)_k - nu k^2 u_k (conservative form).
    """
    if nu < 0:
        raise ValueError(f"viscosity must be non-negative, got {nu}")
    modes = np.asarray(modes)
    M = modes.size
    k = wavenumbers(M)
    if pde == "advection":
        out = -1j * k * modes
    elif pde == "advection_diffusion":
        out = (-1j * k - nu * k * k) * modes
    elif pde == "viscous_burgers":
        out = -0.5j * k * dealias_product(modes, modes) - nu * k * k * modes
    else:
        raise ValueError(f"unknown PDE {pde!r}; expected one of {PDES}")
    out[M // 2] = 0.0
    return out
