"""Array geometry, UE placement and large-scale fading for a subarray-split URA.

The array lies on the y-z plane with its first element at the origin. Elements
are grouped into ``B`` contiguous subarrays along the y-axis. UEs live in a
square cell on the x-y plane (z = 0) in front of the array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ContractError

MIN_ANTENNAS_PER_SA = 50


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    """Near/far-field boundary ``2 D^2 / lambda`` in meters."""
    if wavelength <= 0:
        raise ConfigurationError(f"wavelength must be positive, got {wavelength}")
    if aperture < 0:
        raise ConfigurationError(f"aperture must be non-negative, got {aperture}")
    return 2.0 * aperture**2 / wavelength


@dataclass(frozen=True)
class ArrayGeometry:
    m_y: int = 100
    m_z: int = 5
    spacing: float = 0.1
    subarrays: int = 10
    wavelength: float = 0.125

    def __post_init__(self):
        if self.m_y < 1 or self.m_z < 1:
            raise ConfigurationError("antenna counts must be positive")
        if self.spacing <= 0:
            raise ConfigurationError("element spacing must be positive")
        if self.wavelength <= 0:
            raise ConfigurationError("wavelength must be positive")
        if self.subarrays < 1:
            raise ConfigurationError("number of subarrays must be >= 1")
        if self.n_antennas % self.subarrays != 0:
            raise ConfigurationError(
                f"M mod B != 0 (M={self.n_antennas}, B={self.subarrays})")
        if self.antennas_per_sa < MIN_ANTENNAS_PER_SA:
            raise ConfigurationError(
                f"M_b = {self.antennas_per_sa} < {MIN_ANTENNAS_PER_SA} antennas per subarray")

    @property
    def n_antennas(self) -> int:
        return self.m_y * self.m_z

    @property
    def antennas_per_sa(self) -> int:
        return self.n_antennas // self.subarrays

    @property
    def aperture(self) -> float:
        return self.m_y * self.spacing

    @property
    def sa_aperture(self) -> float:
        return self.aperture / self.subarrays

    @property
    def sa_rayleigh_distance(self) -> float:
        return rayleigh_distance(self.sa_aperture, self.wavelength)

    def element_positions(self) -> np.ndarray:
        """(M, 3) element coordinates, y-major so that each run of ``M_b``
        consecutive rows is one subarray."""
        iy, iz = np.meshgrid(np.arange(self.m_y), np.arange(self.m_z), indexing="ij")
        pos = np.zeros((self.n_antennas, 3))
        pos[:, 1] = iy.ravel() * self.spacing
        pos[:, 2] = iz.ravel() * self.spacing
        return pos

    def subarray_of_element(self) -> np.ndarray:
        return np.repeat(np.arange(self.subarrays), self.antennas_per_sa)


@dataclass(frozen=True)
class FadingModel:
    g_db: float = -34.53
    kappa: float = 3.8
    sigma_sf_db: float = 10.0

    def __post_init__(self):
        if not self.kappa > 2:
            raise ConfigurationError(f"path-loss exponent must exceed 2, got {self.kappa}")
        if self.sigma_sf_db < 0:
            raise ConfigurationError("shadow-fading std must be >= 0")


def large_scale_gain(distance, model: FadingModel, shadow_db=0.0):
    """Linear gain ``10^(-kappa log10 r + (g + shadow)/10)``; works on arrays."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ContractError("distance must be positive")
    out = 10.0 ** (-model.kappa * np.log10(d) + (model.g_db + np.asarray(shadow_db)) / 10.0)
    return float(out) if out.ndim == 0 else out


def per_sa_average_beta(per_element_gains) -> float:
    gains = np.asarray(per_element_gains, dtype=float)
    if gains.size == 0:
        raise ContractError("cannot average an empty list of gains")
    return float(gains.mean())


def min_element_distance(points: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Distance from each point to its nearest array element.

    Elements sit on a regular grid in the x=0 plane, so the nearest element is
    the grid node closest to the point's projection.
    """
    points = np.atleast_2d(points)
    d = geometry.spacing
    iy = np.clip(np.rint(points[:, 1] / d), 0, geometry.m_y - 1)
    iz = np.clip(np.rint(points[:, 2] / d), 0, geometry.m_z - 1)
    return np.sqrt(points[:, 0] ** 2 + (points[:, 1] - iy * d) ** 2
                   + (points[:, 2] - iz * d) ** 2)


def cell_bounds(cell_side: float, geometry: ArrayGeometry,
                standoff: Optional[float] = None) -> tuple[float, float, float, float]:
    """(x_lo, x_hi, y_lo, y_hi) of the square cell.

    The cell is centred on the array's y-midpoint. ``standoff`` is the x of the
    near edge; by default the subarray Rayleigh distance.
    """
    if cell_side <= 0:
        raise ConfigurationError("cell side must be positive")
    x0 = geometry.sa_rayleigh_distance if standoff is None else float(standoff)
    if x0 < 0:
        raise ConfigurationError("cell standoff must be >= 0")
    y_mid = (geometry.m_y - 1) * geometry.spacing / 2
    return x0, x0 + cell_side, y_mid - cell_side / 2, y_mid + cell_side / 2


def far_field_feasible(cell_side: float, geometry: ArrayGeometry,
                       standoff: Optional[float] = None) -> bool:
    """Whether some part of the cell lies beyond the subarray Rayleigh distance."""
    x_lo, x_hi, y_lo, y_hi = cell_bounds(cell_side, geometry, standoff)
    corners = np.array([[x, y, 0.0] for x in (x_lo, x_hi) for y in (y_lo, y_hi)])
    return bool(np.any(min_element_distance(corners, geometry) > geometry.sa_rayleigh_distance))


def place_ues(count: int, cell_side: float, geometry: ArrayGeometry,
              rng: np.random.Generator, standoff: Optional[float] = None) -> np.ndarray:
    """Uniform UE positions in the cell, rejection-sampled to the far field.

    Returns a (count, 3) array. When no point of the cell is beyond the
    subarray Rayleigh distance the constraint is dropped and placement is
    plainly uniform; callers check :func:`far_field_feasible` to flag it.
    """
    x_lo, x_hi, y_lo, y_hi = cell_bounds(cell_side, geometry, standoff)
    out = np.zeros((count, 3))
    if count == 0:
        return out
    constrained = far_field_feasible(cell_side, geometry, standoff)
    limit = geometry.sa_rayleigh_distance
    filled = 0
    while filled < count:
        need = count - filled
        batch = max(2 * need, 64)
        cand = np.zeros((batch, 3))
        cand[:, 0] = rng.uniform(x_lo, x_hi, batch)
        cand[:, 1] = rng.uniform(y_lo, y_hi, batch)
        if constrained:
            cand = cand[min_element_distance(cand, geometry) > limit]
        take = cand[:need]
        out[filled:filled + len(take)] = take
        filled += len(take)
    return out


def sample_visibility(k_count: int, b_count: int, p_b: float,
                      rng: np.random.Generator) -> np.ndarray:
    """K x B Bernoulli(p_b) visibility, conditioned on each row having a visible SA."""
    if not 0 < p_b <= 1:
        raise ConfigurationError(f"visibility probability must be in (0, 1], got {p_b}")
    vis = rng.random((k_count, b_count)) < p_b
    empty = ~vis.any(axis=1)
    while empty.any():
        idx = np.flatnonzero(empty)
        vis[idx] = rng.random((len(idx), b_count)) < p_b
        empty[idx] = ~vis[idx].any(axis=1)
    return vis


def shadowing_db(shape, fading: FadingModel, rng: np.random.Generator):
    """Log-normal shadowing in dB, i.i.d. N(0, sigma_sf^2); scalar 0 when disabled."""
    if fading.sigma_sf_db <= 0:
        return 0.0
    return rng.normal(0.0, fading.sigma_sf_db, shape)


def subarray_betas(positions: np.ndarray, geometry: ArrayGeometry, fading: FadingModel,
                   rng: np.random.Generator, chunk: int = 2048) -> np.ndarray:
    """(K, B) per-subarray mean large-scale gain.

    Shadowing is drawn i.i.d. per (UE, element) and averaged with the path
    loss over the ``M_b`` elements of each subarray.
    """
    k = len(positions)
    elems = geometry.element_positions()
    nb, mb = geometry.subarrays, geometry.antennas_per_sa
    out = np.empty((k, nb))
    for start in range(0, k, chunk):
        q = positions[start:start + chunk]
        r = np.sqrt((q[:, None, 0] - elems[None, :, 0]) ** 2
                    + (q[:, None, 1] - elems[None, :, 1]) ** 2
                    + (q[:, None, 2] - elems[None, :, 2]) ** 2)
        shadow = shadowing_db(r.shape, fading, rng)
        gains = large_scale_gain(r, fading, shadow)
        out[start:start + chunk] = gains.reshape(len(q), nb, mb).mean(axis=2)
    return out


@dataclass
class ChannelRealization:
    """Large-scale state of one Monte Carlo realization."""

    beta: np.ndarray          # (K, B) linear gains, every entry > 0
    visibility: np.ndarray    # (K, B) bool, each row has a True
    antennas_per_sa: int
    positions: Optional[np.ndarray] = None
    far_field_ok: bool = True
    _small_scale: dict = field(default_factory=dict, repr=False)

    @property
    def n_ues(self) -> int:
        return self.beta.shape[0]

    @property
    def n_subarrays(self) -> int:
        return self.beta.shape[1]

    def visible_betas(self, k: int) -> np.ndarray:
        return self.beta[k, self.visibility[k]]

    def small_scale(self, k: int, b: int, rng: np.random.Generator) -> np.ndarray:
        """h_k^(b) ~ CN(0, beta_k^(b) I), drawn on first request and cached."""
        key = (k, b)
        if key not in self._small_scale:
            scale = math.sqrt(self.beta[k, b] / 2)
            self._small_scale[key] = scale * (rng.standard_normal(self.antennas_per_sa)
                                              + 1j * rng.standard_normal(self.antennas_per_sa))
        return self._small_scale[key]


def realize_channel(count: int, cell_side: float, p_b: float, geometry: ArrayGeometry,
                    fading: FadingModel, placement_rng: np.random.Generator,
                    shadow_rng: np.random.Generator, visibility_rng: np.random.Generator,
                    standoff: Optional[float] = None) -> ChannelRealization:
    positions = place_ues(count, cell_side, geometry, placement_rng, standoff)
    return ChannelRealization(
        beta=subarray_betas(positions, geometry, fading, shadow_rng),
        visibility=sample_visibility(count, geometry.subarrays, p_b, visibility_rng),
        antennas_per_sa=geometry.antennas_per_sa,
        positions=positions,
        far_field_ok=far_field_feasible(cell_side, geometry, standoff),
    )
