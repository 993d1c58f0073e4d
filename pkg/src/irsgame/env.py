r"""Per-partition MDP environment: states, action projection, slot stepping.

One environment instance serves both coalitions of one partition (their MDPs
are coupled through the shared channel and the joint action profile). Raw
policy outputs are unconstrained real vectors; this module decodes them into
complex beamformers/phase vectors and projects into the feasible sets:

    * per-LR beamformers are radially rescaled so ||w_i||^2 <= P^L_max,
    * jamming beamformers are jointly rescaled so sum_i ||f_i||^2 <= P^E_max,
    * phases are wrapped periodically into [0, 2*pi].

Both projections are idempotent and never increase a norm.

Raw action layout per coalition (fixed, in this order):
    L-side block: for each LR i, M_a real parts then M_a imaginary parts;
    E-side block: same with M_e for the jammers;
    R block: K*N raw phase angles.

State layout (fixed): every channel array of the realization in its
fixed order, real parts then imaginary parts, scaled by 1/sqrt(L0); then the
previous slot's R^L (only if L is in the coalition), R^E (only if E is in
the coalition) and R^sec vectors, each scaled by ``rate_scale``. The first
slot uses all-zero rates.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelProcess, ChannelRealization, FadingParams, NodeGeometry
from .econ import EV, LP, TIRS, coalition_value
from .game import CoalitionPartition
from .numerics import TWO_PI
from .phy import ActionProfile, PowerParams, RateReport, energy_ev, energy_lp, energy_tirs, rate_report

RATE_SCALE = 0.1


class MissingFragmentError(ValueError):
    pass


def action_dim(s: frozenset, geom: NodeGeometry) -> int:
    dim = 0
    if LP in s:
        dim += 2 * geom.num_lrs * geom.m_a
    if EV in s:
        dim += 2 * geom.num_lrs * geom.m_e
    if TIRS in s:
        dim += geom.num_irss * geom.n_elements
    return dim


def state_dim(s: frozenset, geom: NodeGeometry) -> int:
    L, K = geom.num_lrs, geom.num_irss
    n_complex = (K * geom.n_elements * geom.m_a + L * geom.m_a + geom.m_a
                 + K * L * geom.n_elements + K * geom.n_elements + L * geom.m_e)
    dim = 2 * n_complex + L  # channels + R^sec
    if LP in s:
        dim += L
    if EV in s:
        dim += L
    return dim


def project_beamformers(w: np.ndarray, p_max: float) -> np.ndarray:
    """Per-row radial projection onto ||w_i||^2 <= p_max."""
    w = np.atleast_2d(np.asarray(w, dtype=np.complex128))
    out = w.copy()
    for i in range(out.shape[0]):
        power = float(np.sum(np.abs(out[i]) ** 2))
        if power > p_max:
            out[i] *= np.sqrt(p_max / power)
    return out


def project_jammers(f: np.ndarray, p_max: float) -> np.ndarray:
    """Joint radial projection onto sum_i ||f_i||^2 <= p_max."""
    f = np.atleast_2d(np.asarray(f, dtype=np.complex128))
    power = float(np.sum(np.abs(f) ** 2))
    if power > p_max:
        return f * np.sqrt(p_max / power)
    return f.copy()


def wrap_phases(theta: np.ndarray) -> np.ndarray:
    """Periodic wrap into [0, 2*pi] (fixed point for in-range values)."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.mod(theta, TWO_PI)
    # keep an exact 2*pi endpoint rather than folding it to 0
    out = np.where((theta == TWO_PI), TWO_PI, out)
    return out


def decode_and_project(raw, s: frozenset, geom: NodeGeometry, pp: PowerParams) -> dict:
    """Split a raw action vector into a feasible per-coalition fragment.

    Returns a dict with any of the keys "w", "f", "phases" depending on the
    coalition's membership.
    """
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.shape[0] != action_dim(s, geom):
        raise ValueError(f"raw action has length {raw.shape[0]}, "
                         f"expected {action_dim(s, geom)} for {set(s)}")
    fragment = {}
    offset = 0
    L = geom.num_lrs
    if LP in s:
        block = raw[offset:offset + 2 * L * geom.m_a].reshape(L, 2 * geom.m_a)
        w = block[:, :geom.m_a] + 1j * block[:, geom.m_a:]
        fragment["w"] = project_beamformers(w, pp.p_lmax)
        offset += 2 * L * geom.m_a
    if EV in s:
        block = raw[offset:offset + 2 * L * geom.m_e].reshape(L, 2 * geom.m_e)
        f = block[:, :geom.m_e] + 1j * block[:, geom.m_e:]
        fragment["f"] = project_jammers(f, pp.p_emax)
        offset += 2 * L * geom.m_e
    if TIRS in s:
        block = raw[offset:offset + geom.num_irss * geom.n_elements]
        fragment["phases"] = wrap_phases(block.reshape(geom.num_irss, geom.n_elements))
    return fragment


def merge_fragments(fragments: dict, geom: NodeGeometry) -> ActionProfile:
    """Combine per-coalition fragments into the global joint ActionProfile."""
    merged = {}
    for s, frag in fragments.items():
        for key, value in frag.items():
            if key in merged:
                raise MissingFragmentError(f"duplicate '{key}' block across coalitions")
            merged[key] = value
    for key in ("w", "f", "phases"):
        if key not in merged:
            raise MissingFragmentError(f"no coalition supplied the '{key}' block")
    return ActionProfile(w=merged["w"], f=merged["f"], phases=merged["phases"])


def assemble_state(re: ChannelRealization, rates, s: frozenset, geom: NodeGeometry,
                   l0: float, rate_scale: float = RATE_SCALE,
                   mask_cross_csi: bool = False, channel_gain: float = 1.0) -> np.ndarray:
    """Flatten channels and previous-slot rates into the coalition's state vector.

    Channel features are scaled by channel_gain/sqrt(l0); the extra fixed gain
    only conditions the network inputs and never touches any utility.
    """
    scale = channel_gain / np.sqrt(l0)
    blocks = []
    mask_legit = mask_cross_csi and EV in s
    for name, arr in zip(("g_ak_h", "h_ai_h", "h_ae_h", "g_ki_h", "g_ke_h", "h_ei_h"),
                         re.arrays()):
        flat = arr.ravel()
        if mask_legit and name in ("h_ai_h", "g_ki_h"):
            flat = np.zeros_like(flat)
        blocks.append(flat.real * scale)
        blocks.append(flat.imag * scale)
    L = geom.num_lrs
    if rates is None:
        rate_lr = rate_ev = secrecy = np.zeros(L)
    else:
        rate_lr, rate_ev, secrecy = rates.rate_lr, rates.rate_ev, rates.secrecy
    if LP in s:
        blocks.append(np.asarray(rate_lr, dtype=np.float64) * rate_scale)
    if EV in s:
        blocks.append(np.asarray(rate_ev, dtype=np.float64) * rate_scale)
    blocks.append(np.asarray(secrecy, dtype=np.float64) * rate_scale)
    return np.concatenate(blocks)


@dataclass
class StepOutcome:
    """Joint outcome of one slot for both coalitions of the partition."""

    states: dict            # coalition -> next state vector
    rewards: dict           # coalition -> float
    rates: RateReport
    values: dict            # coalition -> coalition value
    energies: dict          # player -> watts
    penalties: dict         # coalition -> eta * violation count (LP side only)
    profile: ActionProfile


class PartitionEnv:
    """Coupled two-coalition environment for one fixed partition."""

    def __init__(self, partition: CoalitionPartition, geom: NodeGeometry,
                 fading: FadingParams, pp: PowerParams, eta: float = 2.0,
                 doppler_corr: float = 0.0, rate_scale: float = RATE_SCALE,
                 mask_cross_csi: bool = False, channel_gain: float = 1.0):
        self.partition = partition
        self.coalitions = partition.coalitions()
        self.geom = geom
        self.fading = fading
        self.pp = pp
        self.eta = eta
        self.rate_scale = rate_scale
        self.mask_cross_csi = mask_cross_csi
        self.channel_gain = channel_gain
        self.process = ChannelProcess(geom, fading, corr=doppler_corr)
        self.realization = None
        self.prev_rates = None
        self.slot = 0
        self.steps_checked = 0
        self.constraint_violations = 0

    # ------------------------------------------------------------- lifecycle

    def reset(self, realization: ChannelRealization = None, rng=None) -> dict:
        """Start an episode on the given (or freshly drawn) realization."""
        if realization is None:
            if rng is None:
                raise ValueError("reset needs a realization or an rng")
            realization = self.process.draw(rng)
        self.realization = realization
        self.prev_rates = None
        self.slot = 0
        return self.states()

    def states(self) -> dict:
        return {s: assemble_state(self.realization, self.prev_rates, s, self.geom,
                                  self.fading.l0, self.rate_scale, self.mask_cross_csi,
                                  self.channel_gain)
                for s in self.coalitions}

    # ------------------------------------------------------------ evaluation

    def decode(self, raw_actions: dict) -> dict:
        return {s: decode_and_project(raw_actions[s], s, self.geom, self.pp)
                for s in self.coalitions}

    def profile_from_raw(self, raw_actions: dict) -> ActionProfile:
        fragments = self.decode(raw_actions)
        for s in self.coalitions:
            if s not in fragments:
                raise MissingFragmentError(f"missing action fragment for {set(s)}")
        return merge_fragments(fragments, self.geom)

    def evaluate(self, profile: ActionProfile):
        """Rates, energies and coalition values on the *current* realization."""
        from .channel import composite_channels

        h_ai, h_ae, h_ei = composite_channels(self.realization, profile.phases)
        rates = rate_report(h_ai, h_ae, h_ei, profile, self.pp)
        energies = {
            LP: energy_lp(profile, self.pp),
            EV: energy_ev(profile, self.pp),
            TIRS: energy_tirs(self.geom.num_irss, self.geom.n_elements, self.pp.p_r),
        }
        values = {s: coalition_value(s, rates, energies, self.pp.rho)
                  for s in self.coalitions}
        return rates, energies, values

    def _check_constraints(self, profile: ActionProfile):
        self.steps_checked += 1
        try:
            profile.validate(self.pp)
        except ValueError:
            self.constraint_violations += 1
            raise

    def _penalty(self, s: frozenset, rates: RateReport) -> float:
        if LP not in s:
            return 0.0
        violations = int(np.sum(rates.secrecy < self.pp.r_sec_min))
        return self.eta * violations

    # ---------------------------------------------------------------- step

    def step(self, raw_actions: dict, rng=None,
             next_realization: ChannelRealization = None) -> StepOutcome:
        """Advance one slot: act on the current channels, then draw the next."""
        if self.realization is None:
            raise RuntimeError("environment must be reset before stepping")
        profile = self.profile_from_raw(raw_actions)
        self._check_constraints(profile)
        rates, energies, values = self.evaluate(profile)
        penalties = {s: self._penalty(s, rates) for s in self.coalitions}
        rewards = {s: values[s] - penalties[s] for s in self.coalitions}

        if next_realization is None:
            if rng is None:
                raise ValueError("step needs either rng or a next_realization")
            next_realization = self.process.draw(rng)
        self.realization = next_realization
        self.prev_rates = rates
        self.slot += 1
        return StepOutcome(states=self.states(), rewards=rewards, rates=rates,
                           values=values, energies=energies, penalties=penalties,
                           profile=profile)
