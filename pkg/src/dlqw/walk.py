"""Unitary discrete-time quantum walk on a periodic 1-D lattice.

The walker carries a two-component internal degree of freedom (the coin,
components L and R).  One step of the walk is a coin-conditioned shift
(L moves one site left, R one site right) followed by a position-dependent
coin rotation.  Coin angles are stored as rates ("barred" values, radians per
unit time) and multiplied by the time step when a step is taken, which is the
scaling under which the walk converges to a Dirac equation as the lattice is
refined with spacing == time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

ScalarOrField = Union[float, Callable[[float, np.ndarray], "np.ndarray | float"]]


class DomainError(ValueError):
    """A numeric argument is outside the operation's domain."""


class ConfigurationError(ValueError):
    """Inconsistent grid, rate, or solver configuration."""


@dataclass(frozen=True)
class CoinAngles:
    """The four angles (xi0, xi1, theta, chi) parametrizing a 2x2 unitary coin."""

    xi0: float
    xi1: float
    theta: float
    chi: float

    def __post_init__(self):
        for name in ("xi0", "xi1", "theta", "chi"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"coin angle {name} must be finite, got {v!r}")


@dataclass(frozen=True)
class LatticeGrid:
    """Periodic 1-D lattice with ballistic scaling (spacing == time step).

    Site i sits at ``origin + i*spacing``; by default the origin is chosen so
    that the center site ``n_sites // 2`` is at x = 0.
    """

    n_sites: int
    spacing: float = 1.0
    time_step: float = 1.0
    origin: float | None = None

    def __post_init__(self):
        if self.n_sites < 4:
            raise ConfigurationError(f"n_sites must be >= 4, got {self.n_sites}")
        if not (self.spacing > 0 and self.time_step > 0):
            raise ConfigurationError("spacing and time_step must be positive")
        if abs(self.spacing - self.time_step) > 1e-12 * self.spacing:
            raise ConfigurationError(
                f"ballistic scaling requires spacing == time_step, "
                f"got a={self.spacing} eps={self.time_step}"
            )
        if self.origin is None:
            object.__setattr__(self, "origin", -(self.n_sites // 2) * self.spacing)

    @property
    def positions(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n_sites)

    @property
    def center_index(self) -> int:
        return self.n_sites // 2

    @classmethod
    def for_duration(cls, t_final: float, eps: float, pad: float = 0.0) -> "LatticeGrid":
        """Grid large enough that a centered start never reaches the wrap by t_final."""
        half = int(math.ceil((t_final + pad) / eps)) + 2
        return cls(n_sites=2 * half + 1, spacing=eps, time_step=eps)


@dataclass(frozen=True)
class AngleField:
    """Spacetime fields of the barred coin rates.

    Each entry is either a constant (homogeneous case) or a callable
    ``f(t, x) -> rate`` that must be pure.  ``theta_bar = -m`` encodes a mass
    m in the continuum limit; ``xi0_bar`` and ``-xi1_bar`` encode the
    electromagnetic potential components.
    """

    xi0_bar: ScalarOrField = 0.0
    xi1_bar: ScalarOrField = 0.0
    theta_bar: ScalarOrField = 0.0
    chi_bar: ScalarOrField = 0.0

    @classmethod
    def massive(cls, m: float) -> "AngleField":
        return cls(theta_bar=-m)

    def evaluate(self, t: float, x: np.ndarray) -> tuple[np.ndarray, ...]:
        """Evaluate the four barred rates at time t over positions x."""
        out = []
        for f in (self.xi0_bar, self.xi1_bar, self.theta_bar, self.chi_bar):
            v = f(t, x) if callable(f) else f
            out.append(np.broadcast_to(np.asarray(v, dtype=float), x.shape))
        return tuple(out)


@dataclass
class WaveState:
    """Two-component spinor field over a LatticeGrid.

    ``amplitudes`` has shape (2, n_sites); row 0 is the left-moving component,
    row 1 the right-moving one.
    """

    amplitudes: np.ndarray
    grid: LatticeGrid

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2, self.grid.n_sites):
            raise ConfigurationError(
                f"amplitudes shape {self.amplitudes.shape} != (2, {self.grid.n_sites})"
            )

    @classmethod
    def delta(cls, grid: LatticeGrid, coin=(1.0, 1.0), site: int | None = None) -> "WaveState":
        """State localized on one site (default: center) with the given coin state."""
        amp = np.zeros((2, grid.n_sites), dtype=complex)
        c = np.asarray(coin, dtype=complex)
        c = c / np.linalg.norm(c)
        amp[:, grid.center_index if site is None else site] = c
        return cls(amp, grid)

    @classmethod
    def gaussian(cls, grid: LatticeGrid, width: float, coin=(1.0, 1.0),
                 x0: float = 0.0, p0: float = 0.0) -> "WaveState":
        """Normalized Gaussian envelope (position std ``width``) times a coin state.

        Smooth initial data avoids the even/odd parity structure of delta
        starts, which matters when comparing against channels whose flip
        branches skip the shift.
        """
        x = grid.positions
        env = np.exp(-((x - x0) ** 2) / (4.0 * width**2) + 1j * p0 * x)
        c = np.asarray(coin, dtype=complex)
        amp = c[:, None] * env[None, :]
        amp /= np.linalg.norm(amp)
        return cls(amp, grid)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        """Per-site position distribution, summed over the coin."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=0).real

    def edge_mass(self) -> float:
        p = self.probabilities()
        return float(p[0] + p[-1])

    def copy(self) -> "WaveState":
        return WaveState(self.amplitudes.copy(), self.grid)


# Pauli matrices, indexed 0..3 with sigma^0 = identity.
SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def coin_matrix(angles: CoinAngles) -> np.ndarray:
    """2x2 unitary coin for the given angles.

    Returns e^{i xi0} [[e^{i xi1} cos th, i e^{i chi} sin th],
                       [i e^{-i chi} sin th, e^{-i xi1} cos th]].
    """
    x0, x1, th, ch = angles.xi0, angles.xi1, angles.theta, angles.chi
    c, s = np.cos(th), np.sin(th)
    m = np.array(
        [
            [np.exp(1j * x1) * c, 1j * np.exp(1j * ch) * s],
            [1j * np.exp(-1j * ch) * s, np.exp(-1j * x1) * c],
        ],
        dtype=complex,
    )
    return np.exp(1j * x0) * m


def coin_matrices(
    xi0: np.ndarray, xi1: np.ndarray, theta: np.ndarray, chi: np.ndarray
) -> np.ndarray:
    """Vectorized coin construction; returns shape (n, 2, 2) for angle arrays."""
    xi0, xi1, theta, chi = np.broadcast_arrays(xi0, xi1, theta, chi)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(xi0.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * xi1) * c
    out[..., 0, 1] = 1j * np.exp(1j * chi) * s
    out[..., 1, 0] = 1j * np.exp(-1j * chi) * s
    out[..., 1, 1] = np.exp(-1j * xi1) * c
    out *= np.exp(1j * xi0)[..., None, None]
    return out


def euler_angles(angles: CoinAngles) -> tuple[float, float, float]:
    """Map (xi1, theta, chi) to the Euler angles (psi, phi, Theta) of the rotation part."""
    return (angles.xi1 - angles.chi, angles.xi1 + angles.chi, 2.0 * angles.theta)


def coin_from_euler(psi: float, phi: float, Theta: float, xi0: float = 0.0) -> CoinAngles:
    """Inverse of :func:`euler_angles` (the global phase xi0 is a free choice)."""
    return CoinAngles(xi0=xi0, xi1=0.5 * (psi + phi), theta=0.5 * Theta, chi=0.5 * (phi - psi))


def shift_apply(state: WaveState) -> WaveState:
    """Coin-conditioned shift: L components move one site left, R one site right."""
    amp = np.empty_like(state.amplitudes)
    amp[0] = np.roll(state.amplitudes[0], -1)
    amp[1] = np.roll(state.amplitudes[1], +1)
    return WaveState(amp, state.grid)


def apply_coin_field(state: WaveState, coins: np.ndarray) -> WaveState:
    """Apply a per-site stack of 2x2 coins (shape (n, 2, 2) or (2, 2))."""
    if coins.ndim == 2:
        amp = coins @ state.amplitudes
    else:
        amp = np.einsum("xab,bx->ax", coins, state.amplitudes)
    return WaveState(amp, state.grid)


def step_coins(
    field: AngleField,
    t: float,
    grid: LatticeGrid,
    offsets: tuple | None = None,
) -> np.ndarray:
    """Coin stack for one step: angles eps*barred(t, x), plus optional offsets.

    ``offsets`` is a 4-tuple of additive angle contributions (scalars or
    per-site arrays), already carrying their own scaling.
    """
    x = grid.positions
    eps = grid.time_step
    vals = [eps * v for v in field.evaluate(t, x)]
    if offsets is not None:
        vals = [v + np.asarray(o) for v, o in zip(vals, offsets)]
    return coin_matrices(*vals)


def walk_step(state: WaveState, field: AngleField, t: float) -> WaveState:
    """One walk step: shift, then the position-dependent coin at time t."""
    return apply_coin_field(shift_apply(state), step_coins(field, t, state.grid))


def asymptotic_spread(theta: float) -> float:
    """Long-time spread rate sigma(t)/t of the constant-angle walk, in units a/eps."""
    if not math.isfinite(theta):
        raise DomainError("theta must be finite")
    return math.sqrt(1.0 - math.sin(theta))
