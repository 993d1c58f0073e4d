"""Experiment configuration: YAML round-trip, defaults, unit conversion.

Every physical parameter is stored in the config in the units it is usually
quoted in (dB / dBm); conversion to linear watts happens in exactly one
place, the ``build_*`` helpers below, so the rest of the package never sees
a decibel. Derived objects (geometry with seed-placed receivers, fading and
power parameter bundles, PPO hyperparameters) are built from a config plus a
master seed.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .channel import FadingParams, NodeGeometry
from .phy import PowerParams
from .ppo import PpoHyperParams

SCHEMA_VERSION = 1


def db_to_linear(db: float) -> float:
    """Power ratio from dB."""
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass
class GeometryConfig:
    lt: list = field(default_factory=lambda: [0.0, 50.0, 20.0])
    ev: list = field(default_factory=lambda: [70.0, 60.0, 1.5])
    lr_center: list = field(default_factory=lambda: [80.0, 40.0, 1.5])
    lr_radius: float = 10.0
    lr_positions: list = None  # explicit override; otherwise seed-placed in the disc
    irs_positions: list = field(default_factory=lambda: [[40.0, 20.0, 10.0], [40.0, 80.0, 10.0]])
    num_lrs: int = 3
    m_a: int = 4
    m_e: int = 4
    n_elements: int = 16
    wavelength: float = 0.1
    spacing_over_lambda: float = 0.5


@dataclass
class FadingConfig:
    l0_db: float = -30.0
    beta_ai: float = 4.0
    beta_ae: float = 4.0
    beta_ei: float = 4.0
    beta_ak: float = 2.0
    beta_ki: float = 2.0
    beta_ke: float = 2.0
    k_ai: float = 1.0
    k_ae: float = 1.0
    k_ei: float = 1.0
    k_ak: float = 10.0
    k_ki: float = 10.0
    k_ke: float = 10.0
    doppler_corr: float = 0.0


@dataclass
class PowerConfig:
    p_lmax_dbm: float = 40.0
    p_emax_dbm: float = 15.0
    n0_dbm: float = -174.0
    n1_dbm: float = -174.0
    xi_l: float = 0.01
    xi_e: float = 0.1
    rho: float = 0.001
    p_b: float = 0.2
    p_i: float = 0.01
    p_r: float = 0.001
    p_e: float = 0.1


@dataclass
class GameConfig:
    eta: float = 2.0
    c_conf: float = 0.1
    r_sec_min: float = 0.1
    switch_order: list = field(default_factory=lambda: ["R", "L", "E"])
    max_switch_iters: int = 8
    inner_max_iters: int = 50
    inner_tol: float = 1e-3
    inner_patience: int = 5
    # online stage: the coalition structure persists across slots and only
    # switch operations change it; the random initial side is drawn at t=1.
    # Setting this redraws the starting side every slot instead.
    random_side_each_slot: bool = False


@dataclass
class PpoConfig:
    hidden: list = field(default_factory=lambda: [128, 128])
    lr_actor: float = 1e-3
    lr_critic: float = 3e-3
    gamma: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    buffer_episodes: int = 2
    adv_standardize: bool = True
    log_std_init: float = 0.0
    entropy_coef: float = 0.0
    optimizer: str = "adam"
    lr_decay: str = "linear"


@dataclass
class RunConfig:
    episodes: int = 600          # offline pretraining episodes per partition
    steps_per_episode: int = 64  # slots per training episode
    slots: int = 200             # online horizon T
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    rate_scale: float = 0.1
    channel_gain: float = 50.0   # fixed feature gain on top of the 1/sqrt(L0) scaling
    eval_slots: int = 64         # fixed-channel evaluation episode length
    mask_cross_csi: bool = False
    online_finetune: bool = False
    plot_points: int = 200


_SECTIONS = {
    "geometry": GeometryConfig,
    "fading": FadingConfig,
    "power": PowerConfig,
    "game": GameConfig,
    "ppo": PpoConfig,
    "run": RunConfig,
}


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    fading: FadingConfig = field(default_factory=FadingConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    game: GameConfig = field(default_factory=GameConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if not self.run.seeds:
            raise ValueError("seed list must be non-empty")

    # ------------------------------------------------------------- serialize

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            section = dict(data.get(name, {}))
            known = {f.name for f in fields(section_cls)}
            unknown = set(section) - known
            if unknown:
                raise ValueError(f"unknown keys in config section '{name}': {sorted(unknown)}")
            kwargs[name] = section_cls(**section)
        return cls(**kwargs)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def agent_contract_hash(self) -> str:
        """Hash of everything a checkpoint's I/O contract depends on.

        Game/economic knobs (eta, C_conf, horizon...) may be overridden at
        online time without invalidating trained agents; geometry, network
        architecture and state scaling may not.
        """
        payload = {
            "geometry": asdict(self.geometry),
            "ppo": asdict(self.ppo),
            "state": {
                "rate_scale": self.run.rate_scale,
                "channel_gain": self.run.channel_gain,
                "mask_cross_csi": self.run.mask_cross_csi,
                "l0_db": self.fading.l0_db,
            },
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    # ----------------------------------------------------------- derivations

    def build_geometry(self, seed: int) -> NodeGeometry:
        g = self.geometry
        if g.lr_positions is not None:
            lrs = np.asarray(g.lr_positions, dtype=np.float64)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
            center = np.asarray(g.lr_center, dtype=np.float64)
            radius = g.lr_radius * np.sqrt(rng.uniform(size=g.num_lrs))
            angle = rng.uniform(0.0, 2.0 * np.pi, size=g.num_lrs)
            lrs = np.stack([center[0] + radius * np.cos(angle),
                            center[1] + radius * np.sin(angle),
                            np.full(g.num_lrs, center[2])], axis=1)
        return NodeGeometry(
            lt=g.lt, ev=g.ev, lrs=lrs, irss=np.asarray(g.irs_positions, dtype=np.float64),
            m_a=g.m_a, m_e=g.m_e, n_elements=g.n_elements,
            wavelength=g.wavelength, spacing_over_lambda=g.spacing_over_lambda,
        )

    def build_fading(self) -> FadingParams:
        f = self.fading
        return FadingParams(
            l0=db_to_linear(f.l0_db),
            beta={"ai": f.beta_ai, "ae": f.beta_ae, "ei": f.beta_ei,
                  "ak": f.beta_ak, "ki": f.beta_ki, "ke": f.beta_ke},
            k_factor={"ai": f.k_ai, "ae": f.k_ae, "ei": f.k_ei,
                      "ak": f.k_ak, "ki": f.k_ki, "ke": f.k_ke},
        )

    def build_power_params(self) -> PowerParams:
        p = self.power
        return PowerParams(
            rho=p.rho, xi_l=p.xi_l, xi_e=p.xi_e, p_b=p.p_b, p_i=p.p_i, p_r=p.p_r,
            p_e=p.p_e, n0=dbm_to_watts(p.n0_dbm), n1=dbm_to_watts(p.n1_dbm),
            p_lmax=dbm_to_watts(p.p_lmax_dbm), p_emax=dbm_to_watts(p.p_emax_dbm),
            r_sec_min=self.game.r_sec_min,
        )

    def build_ppo_hyperparams(self) -> PpoHyperParams:
        p = self.ppo
        return PpoHyperParams(
            hidden=tuple(p.hidden), lr_actor=p.lr_actor, lr_critic=p.lr_critic,
            gamma=p.gamma, clip_eps=p.clip_eps, epochs=p.epochs, minibatch=p.minibatch,
            buffer_episodes=p.buffer_episodes, adv_standardize=p.adv_standardize,
            log_std_init=p.log_std_init, entropy_coef=p.entropy_coef, optimizer=p.optimizer,
            lr_decay=p.lr_decay,
        )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
