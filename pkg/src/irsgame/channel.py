r"""Geometry-driven Rician channel generator for the IRS-assisted downlink.

Every link m->n follows

    h_mn = sqrt(L0 * d_mn^(-beta_mn)) * h*_mn,
    h*_mn = sqrt(K'/(K'+1)) * a_tx a_rx^H + sqrt(1/(K'+1)) * W,

where W has i.i.d. zero-mean unit-variance circularly-symmetric complex
Gaussian entries and a_tx/a_rx are uniform-linear-array responses along the
straight line between the two endpoints. Channels are stored in their
row-form (Hermitian-transposed) convention: the realization holds the
1 x M rows and N x M_a matrices that the SINR expressions consume directly.

Link classes and their (beta, K') parameter keys:
    "ak"  LT -> IRS k          (N x M_a after transposition)
    "ai"  LT -> LR i           (1 x M_a row)
    "ae"  LT -> EV             (1 x M_a row)
    "ki"  IRS k -> LR i        (1 x N row)
    "ke"  IRS k -> EV          (1 x N row)
    "ei"  EV jam array -> LR i (1 x M_e row)

Signals reflected by more than one IRS are excluded by construction: the
composite channels below sum exactly one reflection per IRS plus the
direct row.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .numerics import TWO_PI, as_cvector

LINK_CLASSES = ("ak", "ai", "ae", "ki", "ke", "ei")

DEFAULT_BETA = {"ai": 4.0, "ae": 4.0, "ei": 4.0, "ak": 2.0, "ki": 2.0, "ke": 2.0}
DEFAULT_K_FACTOR = {"ai": 1.0, "ae": 1.0, "ei": 1.0, "ak": 10.0, "ki": 10.0, "ke": 10.0}


@dataclass(frozen=True)
class NodeGeometry:
    """Static node layout plus array dimensions.

    Positions are 3-D coordinates in meters. ``lrs`` has shape (L, 3) and
    ``irss`` shape (K, 3). Antenna spacing is expressed as a fraction of the
    carrier wavelength (lambda/2 by default).
    """

    lt: np.ndarray
    ev: np.ndarray
    lrs: np.ndarray
    irss: np.ndarray
    m_a: int
    m_e: int
    n_elements: int
    wavelength: float = 0.1
    spacing_over_lambda: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "lt", np.asarray(self.lt, dtype=np.float64))
        object.__setattr__(self, "ev", np.asarray(self.ev, dtype=np.float64))
        object.__setattr__(self, "lrs", np.atleast_2d(np.asarray(self.lrs, dtype=np.float64)))
        object.__setattr__(self, "irss", np.atleast_2d(np.asarray(self.irss, dtype=np.float64)))
        if self.m_a < 1 or self.m_e < 1 or self.n_elements < 1:
            raise ValueError("antenna/element counts must be >= 1")
        if self.wavelength <= 0.0:
            raise ValueError("wavelength must be positive")
        for name, pts in (("lr", self.lrs), ("irs", self.irss)):
            if pts.ndim != 2 or pts.shape[1] != 3:
                raise ValueError(f"{name} positions must have shape (n, 3)")
        nodes = [self.lt, self.ev, *self.lrs, *self.irss]
        for a in range(len(nodes)):
            for b in range(a + 1, len(nodes)):
                if np.linalg.norm(nodes[a] - nodes[b]) <= 0.0:
                    raise ValueError("all pairwise node distances must be positive")

    @property
    def num_lrs(self) -> int:
        return self.lrs.shape[0]

    @property
    def num_irss(self) -> int:
        return self.irss.shape[0]


@dataclass(frozen=True)
class FadingParams:
    """Reference path loss (linear), per-link-class exponents and Rician factors."""

    l0: float = 1e-3
    beta: dict = field(default_factory=lambda: dict(DEFAULT_BETA))
    k_factor: dict = field(default_factory=lambda: dict(DEFAULT_K_FACTOR))

    def __post_init__(self):
        if self.l0 <= 0.0:
            raise ValueError("reference path loss must be positive")
        for cls in LINK_CLASSES:
            if cls not in self.beta or cls not in self.k_factor:
                raise ValueError(f"missing fading parameters for link class '{cls}'")
            if self.beta[cls] < 0.0:
                raise ValueError("path-loss exponents must be >= 0")
            if self.k_factor[cls] < 0.0:
                raise ValueError("Rician factors must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    """All per-slot channel rows/matrices in the Hermitian-row convention.

    Shapes: g_ak_h (K, N, M_a), h_ai_h (L, M_a), h_ae_h (M_a,),
    g_ki_h (K, L, N), g_ke_h (K, N), h_ei_h (L, M_e).
    """

    g_ak_h: np.ndarray
    h_ai_h: np.ndarray
    h_ae_h: np.ndarray
    g_ki_h: np.ndarray
    g_ke_h: np.ndarray
    h_ei_h: np.ndarray
    slot: int = 0

    def arrays(self):
        """Fixed-order tuple of the channel arrays (hashing, flattening)."""
        return (self.g_ak_h, self.h_ai_h, self.h_ae_h, self.g_ki_h, self.g_ke_h, self.h_ei_h)

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for arr in self.arrays():
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()[:16]


def path_gain(distance: float, beta: float, l0: float) -> float:
    """Large-scale amplitude factor sqrt(L0 * d^(-beta))."""
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    return float(np.sqrt(l0 * distance ** (-beta)))


def array_response(num_elements: int, azimuth: float, elevation: float,
                   spacing_over_lambda: float = 0.5) -> np.ndarray:
    """ULA response: entry m = conj(exp(j*2*pi*s*m*sin(az)*cos(el))), m = 0..N-1."""
    if num_elements < 1:
        raise ValueError("num_elements must be >= 1")
    m = np.arange(num_elements)
    phase = TWO_PI * spacing_over_lambda * m * np.sin(azimuth) * np.cos(elevation)
    return np.conj(np.exp(1j * phase))


def link_angles(p_from, p_to):
    """Azimuth/elevation of the straight line from p_from to p_to."""
    d = np.asarray(p_to, dtype=np.float64) - np.asarray(p_from, dtype=np.float64)
    azimuth = float(np.arctan2(d[1], d[0]))
    elevation = float(np.arctan2(d[2], np.hypot(d[0], d[1])))
    return azimuth, elevation


def los_component(a_tx, a_rx) -> np.ndarray:
    """Deterministic LoS matrix a_tx * a_rx^H (shape len(a_tx) x len(a_rx))."""
    a_tx = as_cvector(a_tx)
    a_rx = as_cvector(a_rx)
    return np.outer(a_tx, a_rx.conj())


def complex_gaussian(rng, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries (unit total variance per entry)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def mix_small_scale(k_prime: float, los: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Blend LoS and scattered parts with the Rician weights."""
    if k_prime < 0.0:
        raise ValueError("Rician factor must be >= 0")
    return np.sqrt(k_prime / (k_prime + 1.0)) * los + np.sqrt(1.0 / (k_prime + 1.0)) * w


def rician_small_scale(rng, k_prime: float, a_tx, a_rx) -> np.ndarray:
    """Small-scale matrix sqrt(K'/(K'+1)) a_tx a_rx^H + sqrt(1/(K'+1)) W.

    W is drawn from ``rng`` unconditionally so the rng consumption order is
    identical for every K', which keeps seeded replays aligned.
    """
    los = los_component(a_tx, a_rx)
    w = complex_gaussian(rng, los.shape)
    return mix_small_scale(k_prime, los, w)


def _link_specs(geom: NodeGeometry):
    """Fixed-order list of every link: (name, class, tx pos, rx pos, tx n, rx n).

    The order defines the rng consumption order of a realization draw and is
    part of the determinism contract.
    """
    specs = []
    for k in range(geom.num_irss):
        specs.append((("ak", k), "ak", geom.lt, geom.irss[k], geom.m_a, geom.n_elements))
    for i in range(geom.num_lrs):
        specs.append((("ai", i), "ai", geom.lt, geom.lrs[i], geom.m_a, 1))
    specs.append((("ae",), "ae", geom.lt, geom.ev, geom.m_a, 1))
    for k in range(geom.num_irss):
        for i in range(geom.num_lrs):
            specs.append((("ki", k, i), "ki", geom.irss[k], geom.lrs[i], geom.n_elements, 1))
    for k in range(geom.num_irss):
        specs.append((("ke", k), "ke", geom.irss[k], geom.ev, geom.n_elements, 1))
    for i in range(geom.num_lrs):
        specs.append((("ei", i), "ei", geom.ev, geom.lrs[i], geom.m_e, 1))
    return specs


def _assemble(geom: NodeGeometry, links: dict, slot: int) -> ChannelRealization:
    """Hermitian-transpose forward link matrices into the stored row forms."""
    L, K = geom.num_lrs, geom.num_irss

    def row(key):
        return links[key].conj().ravel()

    g_ak_h = np.stack([links[("ak", k)].conj().T for k in range(K)])
    h_ai_h = np.stack([row(("ai", i)) for i in range(L)])
    h_ae_h = row(("ae",))
    g_ki_h = np.stack([np.stack([row(("ki", k, i)) for i in range(L)]) for k in range(K)])
    g_ke_h = np.stack([row(("ke", k)) for k in range(K)])
    h_ei_h = np.stack([row(("ei", i)) for i in range(L)])
    return ChannelRealization(g_ak_h, h_ai_h, h_ae_h, g_ki_h, g_ke_h, h_ei_h, slot=slot)


def draw_realization(geom: NodeGeometry, fp: FadingParams, rng,
                     slot: int = 0) -> ChannelRealization:
    """One independent block-fading draw; deterministic given the rng state."""
    links = {}
    for key, cls, p_tx, p_rx, n_tx, n_rx in _link_specs(geom):
        az, el = link_angles(p_tx, p_rx)
        a_tx = array_response(n_tx, az, el, geom.spacing_over_lambda)
        a_rx = array_response(n_rx, az, el, geom.spacing_over_lambda)
        amp = path_gain(float(np.linalg.norm(p_rx - p_tx)), fp.beta[cls], fp.l0)
        links[key] = amp * rician_small_scale(rng, fp.k_factor[cls], a_tx, a_rx)
    return _assemble(geom, links, slot)


class ChannelProcess:
    """Slot-by-slot channel source with optional Gauss-Markov NLoS memory.

    With ``corr`` = 0 (default) scattered components are redrawn i.i.d. each
    slot, matching :func:`draw_realization` draw-for-draw. With 0 < corr < 1
    the scattered part evolves as W(t+1) = corr*W(t) + sqrt(1-corr^2)*fresh,
    keeping unit variance. LoS components and path gains are fixed by the
    geometry for the whole process.
    """

    def __init__(self, geom: NodeGeometry, fp: FadingParams, corr: float = 0.0):
        if not 0.0 <= corr < 1.0:
            raise ValueError("corr must lie in [0, 1)")
        self.geom = geom
        self.fp = fp
        self.corr = corr
        self.slot = 0
        self._w = {}
        self._static = []
        for key, cls, p_tx, p_rx, n_tx, n_rx in _link_specs(geom):
            az, el = link_angles(p_tx, p_rx)
            a_tx = array_response(n_tx, az, el, geom.spacing_over_lambda)
            a_rx = array_response(n_rx, az, el, geom.spacing_over_lambda)
            amp = path_gain(float(np.linalg.norm(p_rx - p_tx)), fp.beta[cls], fp.l0)
            self._static.append((key, cls, amp, los_component(a_tx, a_rx)))

    def draw(self, rng) -> ChannelRealization:
        links = {}
        for key, cls, amp, los in self._static:
            fresh = complex_gaussian(rng, los.shape)
            if self.corr > 0.0 and key in self._w:
                w = self.corr * self._w[key] + np.sqrt(1.0 - self.corr**2) * fresh
            else:
                w = fresh
            self._w[key] = w
            links[key] = amp * mix_small_scale(self.fp.k_factor[cls], los, w)
        realization = _assemble(self.geom, links, self.slot)
        self.slot += 1
        return realization


def composite_channels(re: ChannelRealization, phases):
    """Compose the reflected and direct rows of every receiver.

    ``phases`` is a (K, N) array of phase shifts in [0, 2*pi]. Returns
    (H_ai, H_ae, H_ei): shapes (L, M_a), (M_a,), (L, M_e). H_ei is the EV->LR
    jamming row, passed through unchanged (the EV-LR link has no reflection
    path in the model).
    """
    phases = np.asarray(phases, dtype=np.float64)
    K, L = re.g_ki_h.shape[0], re.h_ai_h.shape[0]
    if phases.shape != (K, re.g_ak_h.shape[1]):
        raise ValueError(f"phases must have shape {(K, re.g_ak_h.shape[1])}, got {phases.shape}")
    if np.any(phases < 0.0) or np.any(phases > TWO_PI):
        raise ValueError("phase out of range [0, 2*pi]")

    phase_vec = np.exp(1j * phases)  # (K, N)
    h_ai = re.h_ai_h.copy()
    h_ae = re.h_ae_h.copy()
    for k in range(K):
        reflected = phase_vec[k][:, None] * re.g_ak_h[k]  # Phi_k G^H_ak, (N, M_a)
        h_ai += re.g_ki_h[k] @ reflected
        h_ae += re.g_ke_h[k] @ reflected
    return h_ai, h_ae, re.h_ei_h.copy()
