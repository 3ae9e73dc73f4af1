"""Circulant-permutation DFT precoders and the matching group combiners.

The bank uses ``U_n = W @ P**(n-1)`` where ``W`` is the unitary DFT matrix and
``P`` cyclically shifts columns by one, so column ``g`` of ``U_n`` is column
``(g + n) mod N`` of ``W`` (0-based).  Collecting column ``g`` across all
slots gives the combiner ``F_g = diag(w**(a*g)) @ W`` and therefore::

    conj(F_g) @ F_g'.T == diag(w**(a * (g' - g)))       w = exp(-2j*pi/N)

Weighting that diagonal by ``h`` and equalizing with ``1 / h`` leaves a
geometric sum of roots of unity: ``N`` when ``g == g'`` and zero otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dft_matrix(n: int) -> np.ndarray:
    """Symmetric unitary DFT matrix, entry ``(a, b) = exp(-2j*pi*a*b/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    # reduce the exponent mod n first so large n keeps full phase accuracy
    return np.exp(-2j * np.pi * (np.outer(idx, idx) % n) / n) / np.sqrt(n)


@dataclass(frozen=True)
class PrecoderBank:
    """Precoders ``U[n]`` (slot ``n``) and combiners ``F[g]`` (symbol ``g``), 0-based."""

    U: np.ndarray
    F: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def combiner_product(self, g: int, g_other: int) -> np.ndarray:
        return self.F[g].conj() @ self.F[g_other].T


def build_precoder_bank(n: int) -> PrecoderBank:
    w = dft_matrix(n)
    idx = np.arange(n)
    U = np.stack([w[:, (idx + slot) % n] for slot in range(n)])
    # F[g][:, slot] = U[slot][:, g]
    F = np.ascontiguousarray(np.transpose(U, (2, 1, 0)))
    U.setflags(write=False)
    F.setflags(write=False)
    return PrecoderBank(U=U, F=F)


def equalizer(h: np.ndarray) -> np.ndarray:
    """Elementwise reciprocal of ``h``; every entry must be nonzero."""
    h = np.asarray(h)
    if np.any(h == 0):
        raise ValueError("channel has a zero entry; the equalizer is undefined")
    return 1.0 / h


def cancellation_check(bank: PrecoderBank, h: np.ndarray, g: int, g_other: int) -> complex:
    """Return ``e.T @ conj(F_g) @ F_g'.T @ h`` with ``e = 1 / h``."""
    e = equalizer(h)
    return complex(e @ bank.combiner_product(g, g_other) @ h)
