r"""SINRs, achievable/secrecy rates and power consumption.

Rate convention: log base 2, i.e. bits/s/Hz (Wyner secrecy-rate convention).
All functions are pure; feasibility of the supplied action profile is the
caller's job (see :mod:`irsgame.env`), but :meth:`ActionProfile.validate`
is available for debug/test checks.

    SINR_i^L = |H_ai w_i|^2 / (sum_{j!=i} |H_ai w_j|^2 + sum_j |H_ei f_j|^2 + N0)
    SINR_i^E = |H_ae w_i|^2 / (sum_{j!=i} |H_ae w_j|^2 + N1 + N0)
    R^sec_i  = [R^L_i - R^E_i]^+

The EV's own jamming never enters its eavesdropping denominator: its
self-interference is cancelled down to the residual noise floor N1.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import TWO_PI, norm_sq


@dataclass(frozen=True)
class PowerParams:
    """All power/noise/economic constants in linear units (watts)."""

    rho: float = 1e-3          # utility per watt
    xi_l: float = 0.01         # LT amplifier coefficient
    xi_e: float = 0.1          # EV amplifier coefficient
    p_b: float = 0.2           # LT circuit power
    p_i: float = 0.01          # per-LR circuit power
    p_r: float = 1e-3          # per-reflecting-element power
    p_e: float = 0.1           # EV circuit power
    n0: float = 10 ** (-20.4)  # AWGN power (-174 dBm)
    n1: float = 10 ** (-20.4)  # residual self-interference power
    p_lmax: float = 10.0       # per-LR transmit power cap (40 dBm)
    p_emax: float = 10 ** 1.5 / 1000.0  # total jamming power cap (15 dBm)
    r_sec_min: float = 0.1     # per-LR secrecy-rate floor (bits/s/Hz)

    def __post_init__(self):
        for name in ("rho", "xi_l", "xi_e", "p_b", "p_i", "p_r", "p_e",
                     "n0", "n1", "p_lmax", "p_emax", "r_sec_min"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.n0 <= 0.0:
            raise ValueError("n0 must be positive")


@dataclass(frozen=True)
class ActionProfile:
    """Joint action of all three parties for one slot.

    w: (L, M_a) transmit beamformers (sqrt-watt entries), one row per LR.
    f: (L, M_e) jamming beamformers, one row per LR stream.
    phases: (K, N) phase shifts in [0, 2*pi].
    """

    w: np.ndarray
    f: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.atleast_2d(np.asarray(self.w, dtype=np.complex128)))
        object.__setattr__(self, "f", np.atleast_2d(np.asarray(self.f, dtype=np.complex128)))
        object.__setattr__(self, "phases", np.atleast_2d(np.asarray(self.phases, dtype=np.float64)))

    def validate(self, pp: PowerParams, atol: float = 1e-9):
        """Raise if any feasibility constraint is violated (beyond atol)."""
        for i in range(self.w.shape[0]):
            if norm_sq(self.w[i]) > pp.p_lmax + atol:
                raise ValueError(f"beamformer {i} exceeds per-LR power cap")
        if float(np.sum(np.abs(self.f) ** 2)) > pp.p_emax + atol:
            raise ValueError("total jamming power exceeds cap")
        if np.any(self.phases < -atol) or np.any(self.phases > TWO_PI + atol):
            raise ValueError("phase out of range [0, 2*pi]")


@dataclass(frozen=True)
class RateReport:
    """Per-LR SINRs and rates for one slot; secrecy = [R^L - R^E]^+ always."""

    sinr_lr: np.ndarray
    sinr_ev: np.ndarray
    rate_lr: np.ndarray
    rate_ev: np.ndarray
    secrecy: np.ndarray

    def __post_init__(self):
        clamp = np.maximum(self.rate_lr - self.rate_ev, 0.0)
        if not np.allclose(self.secrecy, clamp, rtol=0.0, atol=1e-12):
            raise ValueError("secrecy rates must equal [R^L - R^E]^+")

    @property
    def sum_secrecy(self) -> float:
        return float(np.sum(self.secrecy))


def sinr_lr(h_ai_row, h_ei_row, actions: ActionProfile, i: int, n0: float) -> float:
    """SINR of LR i's own stream at LR i."""
    h_ai_row = np.asarray(h_ai_row)
    h_ei_row = np.asarray(h_ei_row)
    if h_ai_row.shape[0] != actions.w.shape[1] or h_ei_row.shape[0] != actions.f.shape[1]:
        raise ValueError("channel/action dimension mismatch")
    if n0 <= 0.0:
        raise ValueError("n0 must be positive")
    gains = np.abs(h_ai_row @ actions.w.T) ** 2          # |H_ai w_j|^2 for all j
    jam = float(np.sum(np.abs(h_ei_row @ actions.f.T) ** 2))
    signal = float(gains[i])
    others = gains.copy()
    others[i] = 0.0  # sum the cross terms directly; sum-minus-signal cancels badly
    return signal / (float(np.sum(others)) + jam + n0)


def sinr_ev(h_ae_row, actions: ActionProfile, i: int, n0: float, n1: float) -> float:
    """SINR of LR i's stream as overheard by the EV (jamming-free denominator)."""
    h_ae_row = np.asarray(h_ae_row)
    if h_ae_row.shape[0] != actions.w.shape[1]:
        raise ValueError("channel/action dimension mismatch")
    gains = np.abs(h_ae_row @ actions.w.T) ** 2
    signal = float(gains[i])
    others = gains.copy()
    others[i] = 0.0
    return signal / (float(np.sum(others)) + n1 + n0)


def rate_from_sinr(sinr) -> np.ndarray:
    """Achievable rate log2(1 + SINR), elementwise."""
    sinr = np.asarray(sinr, dtype=np.float64)
    if np.any(sinr < 0.0):
        raise ValueError("SINR must be >= 0")
    return np.log2(1.0 + sinr)


def secrecy_rate(r_l, r_e):
    """Wyner secrecy rate [R^L - R^E]^+, elementwise."""
    return np.maximum(np.asarray(r_l) - np.asarray(r_e), 0.0)


def rate_report(h_ai, h_ae, h_ei, actions: ActionProfile, pp: PowerParams) -> RateReport:
    """All per-LR SINRs/rates for one slot from the composite channel rows."""
    L = actions.w.shape[0]
    s_lr = np.array([sinr_lr(h_ai[i], h_ei[i], actions, i, pp.n0) for i in range(L)])
    s_ev = np.array([sinr_ev(h_ae, actions, i, pp.n0, pp.n1) for i in range(L)])
    r_lr = rate_from_sinr(s_lr)
    r_ev = rate_from_sinr(s_ev)
    return RateReport(s_lr, s_ev, r_lr, r_ev, secrecy_rate(r_lr, r_ev))


def energy_lp(actions: ActionProfile, pp: PowerParams) -> float:
    """xi_L * sum_i ||w_i||^2 + P_B + L * P_i."""
    L = actions.w.shape[0]
    return pp.xi_l * float(np.sum(np.abs(actions.w) ** 2)) + pp.p_b + L * pp.p_i


def energy_ev(actions: ActionProfile, pp: PowerParams) -> float:
    """xi_E * sum_i ||f_i||^2 + P^E."""
    return pp.xi_e * float(np.sum(np.abs(actions.f) ** 2)) + pp.p_e


def energy_tirs(num_irss: int, n_elements: int, p_r: float) -> float:
    """K * N * P^R, independent of the applied phases."""
    return float(num_irss) * float(n_elements) * p_r
