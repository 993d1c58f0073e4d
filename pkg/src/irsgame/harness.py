r"""End-to-end pipeline: offline pretraining, online switch-operation stage,
frozen-partition baselines, record emission.

Offline stage: for each of the two candidate partitions, the pair of
coalition agents is trained with PPO for the configured number of episodes.
Both partitions consume the *same* per-episode channel sequence, which makes
the exact cross-partition Shapley payments available for the recorded
utility curves without affecting training itself (coalition rewards contain
no payment terms).

Online stage, per slot: draw channels once, run both partitions' agents to
utility convergence on those channels, build the preference context from the
converged utilities, then apply switch operations until the partition is
stable. The coalition structure persists across slots: the dynamics start
from the previous slot's partition (a random side at t=1, or every slot with
``game.random_side_each_slot``), so coalition-change punishments attach to
genuine switches. The stable partition's outcome is recorded. Baselines run
the identical pipeline with the partition frozen to the LP side (LFI) or the
EV side (EFI) and share the channel stream of the proposed run under the
same seed.

RNG streams are spawned from the master seed with fixed spawn keys, so every
stage is reproducible and the channel stream is identical across modes.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .channel import ChannelProcess, composite_channels
from .config import ExperimentConfig
from .econ import (
    COALITION_EV_R,
    COALITION_L_ALONE,
    COALITION_LP,
    EV,
    LP,
    TIRS,
    EconState,
    UtilityReport,
    coalition_value,
    payment_mu,
    utility_ev,
    utility_lp,
    utility_tirs,
)
from .env import PartitionEnv, action_dim, assemble_state, decode_and_project, merge_fragments, state_dim
from .game import (
    PARTITION_EV_SIDE,
    PARTITION_LP_SIDE,
    CoalitionPartition,
    PreferenceContext,
    check_ne_trace,
    deviation_payoffs,
    is_stable,
    run_switch_dynamics,
)
from .phy import energy_ev, energy_lp, energy_tirs, rate_report
from .ppo import PpoAgent, RolloutBuffer, Transition, load_agent, save_agent

SCHEMA_VERSION = 1
PARTITIONS = (PARTITION_LP_SIDE, PARTITION_EV_SIDE)

# fixed spawn keys for the named rng streams
_STREAM_GEOMETRY = 0      # consumed inside ExperimentConfig.build_geometry
_STREAM_OFFLINE_CHANNEL = 1
_STREAM_AGENT_INIT = 2
_STREAM_AGENT_ACT = 3
_STREAM_AGENT_UPDATE = 4
_STREAM_ONLINE_CHANNEL = 5
_STREAM_ONLINE_SIDE = 6
_STREAM_FINETUNE = 7
_STREAM_EVAL_CHANNEL = 8


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def coalition_name(s: frozenset) -> str:
    return "".join(sorted(s))


AGENT_ORDER = (
    (PARTITION_LP_SIDE, COALITION_LP),
    (PARTITION_LP_SIDE, frozenset({EV})),
    (PARTITION_EV_SIDE, COALITION_L_ALONE),
    (PARTITION_EV_SIDE, COALITION_EV_R),
)


def checkpoint_path(checkpoint_dir, s: frozenset, seed: int) -> str:
    return os.path.join(checkpoint_dir, f"agent_{coalition_name(s)}_s{seed}.npz")


@dataclass
class Bundle:
    """Derived per-run objects shared by every stage."""

    cfg: ExperimentConfig
    seed: int
    geom: object
    fading: object
    pp: object
    hp: object

    @classmethod
    def build(cls, cfg: ExperimentConfig, seed: int) -> "Bundle":
        return cls(cfg=cfg, seed=seed, geom=cfg.build_geometry(seed),
                   fading=cfg.build_fading(), pp=cfg.build_power_params(),
                   hp=cfg.build_ppo_hyperparams())

    def energy_r(self) -> float:
        return energy_tirs(self.geom.num_irss, self.geom.n_elements, self.pp.p_r)

    def new_agents(self) -> dict:
        agents = {}
        for idx, (_, s) in enumerate(AGENT_ORDER):
            rng = _stream(self.seed, _STREAM_AGENT_INIT, idx)
            agents[s] = PpoAgent(state_dim(s, self.geom), action_dim(s, self.geom),
                                 self.hp, rng)
        return agents

    def load_agents(self, checkpoint_dir) -> dict:
        agents = {}
        for _, s in AGENT_ORDER:
            path = checkpoint_path(checkpoint_dir, s, self.seed)
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing checkpoint {path}; run pretrain first")
            agents[s] = load_agent(path, state_dim(s, self.geom), action_dim(s, self.geom),
                                   self.hp, expected_config_hash=self.cfg.agent_contract_hash())
        return agents


# ---------------------------------------------------------------- offline


@dataclass
class TrainResult:
    """Everything the offline stage produces besides the checkpoint files."""

    agents: dict
    curves: "TrainingCurves"
    steps_checked: int
    constraint_violations: int


@dataclass
class TrainingCurves:
    columns: list
    rows: list

    def to_csv_text(self, config_hash: str, seed: int) -> str:
        lines = [f"# irsgame-training v{SCHEMA_VERSION} config={config_hash} seed={seed}"]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def _episode_party_utilities(slotwise, e_r: float, rho: float, c_conf: float, eta: float):
    """Cross-partition payments and per-party utility sums for one episode.

    ``slotwise`` maps partition -> list of (rates, energies, values) per slot.
    No coalition changes happen during offline training, so F(t) = 0.
    """
    lp_rows = slotwise[PARTITION_LP_SIDE]
    ev_rows = slotwise[PARTITION_EV_SIDE]
    value_r_alone = -rho * e_r
    totals = {PARTITION_LP_SIDE: {LP: 0.0, EV: 0.0, TIRS: 0.0},
              PARTITION_EV_SIDE: {LP: 0.0, EV: 0.0, TIRS: 0.0}}
    for (rates_a, en_a, val_a), (rates_b, en_b, val_b) in zip(lp_rows, ev_rows):
        mu_l = payment_mu(LP, val_a[COALITION_LP], value_r_alone,
                          val_b[COALITION_L_ALONE], rates_a.sum_secrecy)
        mu_e = payment_mu(EV, val_b[COALITION_EV_R], value_r_alone,
                          val_a[frozenset({EV})], rates_b.sum_secrecy)
        econ_a = EconState(c1=1, c2=0, prev_c1=1, prev_u_r=0.0, c_conf=c_conf, eta=eta)
        econ_b = EconState(c1=0, c2=1, prev_c1=0, prev_u_r=0.0, c_conf=c_conf, eta=eta)
        totals[PARTITION_LP_SIDE][LP] += utility_lp(rates_a, en_a[LP], e_r, econ_a,
                                                    rho, mu_l.mu)
        totals[PARTITION_LP_SIDE][EV] += utility_ev(rates_a, en_a[EV], e_r, econ_a,
                                                    rho, mu_e.mu)
        totals[PARTITION_LP_SIDE][TIRS] += utility_tirs(econ_a, mu_l.mu, mu_e.mu)
        totals[PARTITION_EV_SIDE][LP] += utility_lp(rates_b, en_b[LP], e_r, econ_b,
                                                    rho, mu_l.mu)
        totals[PARTITION_EV_SIDE][EV] += utility_ev(rates_b, en_b[EV], e_r, econ_b,
                                                    rho, mu_e.mu)
        totals[PARTITION_EV_SIDE][TIRS] += utility_tirs(econ_b, mu_l.mu, mu_e.mu)
    return totals


def _deterministic_eval(envs, agents, sequence, bundle, game, run):
    """Mean-action rollout of both partitions on the fixed evaluation channels."""
    slotwise = {}
    for partition in PARTITIONS:
        env = envs[partition]
        states = env.reset(sequence[0])
        rows = []
        for tau in range(len(sequence) - 1):
            raw = {s: agents[s].act_deterministic(states[s]) for s in env.coalitions}
            outcome = env.step(raw, next_realization=sequence[tau + 1])
            rows.append((outcome.rates, outcome.energies, outcome.values))
            states = outcome.states
        slotwise[partition] = rows
    party = _episode_party_utilities(slotwise, bundle.energy_r(), bundle.pp.rho,
                                     game.c_conf, game.eta)
    mean_sec = {p: float(np.mean([r.sum_secrecy for r, _, _ in slotwise[p]]))
                for p in PARTITIONS}
    return party, mean_sec


def offline_pretrain(cfg: ExperimentConfig, seed: int, checkpoint_dir, out_dir=None):
    """Algorithm-1 offline stage: train both partitions' agent pairs.

    Writes one checkpoint per coalition agent plus the per-episode training
    curves; returns a TrainResult.
    """
    bundle = Bundle.build(cfg, seed)
    run = cfg.run
    game = cfg.game
    os.makedirs(checkpoint_dir, exist_ok=True)

    agents = bundle.new_agents()
    act_rngs = {s: _stream(seed, _STREAM_AGENT_ACT, idx)
                for idx, (_, s) in enumerate(AGENT_ORDER)}
    update_rngs = {s: _stream(seed, _STREAM_AGENT_UPDATE, idx)
                   for idx, (_, s) in enumerate(AGENT_ORDER)}
    buffers = {s: RolloutBuffer(capacity=bundle.hp.buffer_episodes * run.steps_per_episode)
               for _, s in AGENT_ORDER}

    envs = {p: PartitionEnv(p, bundle.geom, bundle.fading, bundle.pp, eta=game.eta,
                            doppler_corr=cfg.fading.doppler_corr,
                            rate_scale=run.rate_scale,
                            mask_cross_csi=run.mask_cross_csi,
                            channel_gain=run.channel_gain)
            for p in PARTITIONS}
    shared_channels = ChannelProcess(bundle.geom, bundle.fading, corr=cfg.fading.doppler_corr)
    channel_rng = _stream(seed, _STREAM_OFFLINE_CHANNEL)
    # fixed evaluation channels: the convergence curves are measured on the
    # same channel draws every episode so they track policy movement only
    eval_rng = _stream(seed, _STREAM_EVAL_CHANNEL)
    eval_proc = ChannelProcess(bundle.geom, bundle.fading, corr=cfg.fading.doppler_corr)
    eval_sequence = [eval_proc.draw(eval_rng) for _ in range(run.eval_slots + 1)]

    columns = (["episode"]
               + [f"reward_{coalition_name(s)}" for _, s in AGENT_ORDER]
               + ["u_l_lpside", "u_e_lpside", "u_r_lpside",
                  "u_l_evside", "u_e_evside", "u_r_evside",
                  "u_l", "u_e", "u_r",
                  "eval_u_l", "eval_u_e", "eval_u_r",
                  "eval_sum_sec_lpside", "eval_sum_sec_evside"]
               + [f"log_std_{coalition_name(s)}" for _, s in AGENT_ORDER])
    curve_rows = []
    total_updates = max(1, run.episodes // bundle.hp.buffer_episodes)
    update_round = 0

    for episode in range(run.episodes):
        sequence = [shared_channels.draw(channel_rng) for _ in range(run.steps_per_episode + 1)]
        episode_rewards = {s: 0.0 for _, s in AGENT_ORDER}
        slotwise = {}
        for partition in PARTITIONS:
            env = envs[partition]
            states = env.reset(sequence[0])
            rows = []
            for tau in range(run.steps_per_episode):
                raw, logps = {}, {}
                for s in env.coalitions:
                    raw[s], logps[s] = agents[s].act(states[s], act_rngs[s])
                outcome = env.step(raw, next_realization=sequence[tau + 1])
                done = tau == run.steps_per_episode - 1
                for s in env.coalitions:
                    buffers[s].add(Transition(states[s], raw[s], logps[s],
                                              outcome.rewards[s], outcome.states[s], done))
                    episode_rewards[s] += outcome.rewards[s]
                rows.append((outcome.rates, outcome.energies, outcome.values))
                states = outcome.states
            slotwise[partition] = rows

        party = _episode_party_utilities(slotwise, bundle.energy_r(), bundle.pp.rho,
                                         game.c_conf, game.eta)
        lp, evp = party[PARTITION_LP_SIDE], party[PARTITION_EV_SIDE]
        eval_party, eval_sec = _deterministic_eval(envs, agents, eval_sequence, bundle,
                                                   game, run)
        elp, eev = eval_party[PARTITION_LP_SIDE], eval_party[PARTITION_EV_SIDE]
        curve_rows.append(
            [episode] + [episode_rewards[s] for _, s in AGENT_ORDER]
            + [lp[LP], lp[EV], lp[TIRS], evp[LP], evp[EV], evp[TIRS]]
            + [(lp[LP] + evp[LP]) / 2.0, (lp[EV] + evp[EV]) / 2.0,
               (lp[TIRS] + evp[TIRS]) / 2.0]
            + [(elp[LP] + eev[LP]) / 2.0, (elp[EV] + eev[EV]) / 2.0,
               (elp[TIRS] + eev[TIRS]) / 2.0]
            + [eval_sec[PARTITION_LP_SIDE], eval_sec[PARTITION_EV_SIDE]]
            + [float(np.mean(agents[s].policy.log_std)) for _, s in AGENT_ORDER])

        if all(buffers[s].full for _, s in AGENT_ORDER):
            if bundle.hp.lr_decay == "linear":
                lr_scale = max(0.0, 1.0 - update_round / max(1, total_updates))
            else:
                lr_scale = 1.0
            for _, s in AGENT_ORDER:
                agents[s].update(buffers[s], update_rngs[s], lr_scale=lr_scale)
                buffers[s].clear()
            update_round += 1

    for _, s in AGENT_ORDER:
        save_agent(checkpoint_path(checkpoint_dir, s, seed), agents[s],
                   cfg.agent_contract_hash())

    curves = TrainingCurves(columns=columns, rows=curve_rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"training_s{seed}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(curves.to_csv_text(cfg.config_hash(), seed))
    return TrainResult(
        agents=agents, curves=curves,
        steps_checked=sum(envs[p].steps_checked for p in PARTITIONS),
        constraint_violations=sum(envs[p].constraint_violations for p in PARTITIONS))


# ------------------------------------------------------------------ online


@dataclass
class PartitionEval:
    """Converged within-slot evaluation of one candidate partition."""

    profile: object
    rates: object
    energies: dict
    values: dict
    iterations: int


def converge_partition(partition: CoalitionPartition, realization, agents: dict,
                       prev_rates, bundle: Bundle, game_cfg, run_cfg) -> PartitionEval:
    """Iterate state -> deterministic action -> rates on fixed channels
    until the coalition utilities stop moving (Algorithm-1 inner loop)."""
    geom, pp, fading = bundle.geom, bundle.pp, bundle.fading
    coalitions = partition.coalitions()
    rates = prev_rates
    tracked_prev = None
    patience = 0
    result = None
    for iteration in range(1, game_cfg.inner_max_iters + 1):
        fragments = {}
        for s in coalitions:
            state = assemble_state(realization, rates, s, geom, fading.l0,
                                   run_cfg.rate_scale, run_cfg.mask_cross_csi,
                                   run_cfg.channel_gain)
            fragments[s] = decode_and_project(agents[s].act_deterministic(state), s, geom, pp)
        profile = merge_fragments(fragments, geom)
        h_ai, h_ae, h_ei = composite_channels(realization, profile.phases)
        new_rates = rate_report(h_ai, h_ae, h_ei, profile, pp)
        energies = {LP: energy_lp(profile, pp), EV: energy_ev(profile, pp),
                    TIRS: bundle.energy_r()}
        values = {s: coalition_value(s, new_rates, energies, pp.rho) for s in coalitions}
        result = PartitionEval(profile, new_rates, energies, values, iteration)

        tracked = np.array([new_rates.sum_secrecy] + [values[s] for s in coalitions])
        if tracked_prev is not None:
            rel = np.max(np.abs(tracked - tracked_prev) / np.maximum(np.abs(tracked_prev), 1e-9))
            patience = patience + 1 if rel < game_cfg.inner_tol else 0
            if patience >= game_cfg.inner_patience:
                break
        tracked_prev = tracked
        rates = new_rates
    return result


def build_slot_context(evals: dict, prev_c1: int, prev_u_r: float, bundle: Bundle,
                       game_cfg):
    """Preference context plus per-side payments/utilities from converged evals."""
    rho = bundle.pp.rho
    e_r = bundle.energy_r()
    value_r_alone = -rho * e_r
    ev_a = evals[PARTITION_LP_SIDE]
    ev_b = evals[PARTITION_EV_SIDE]
    mu_l = payment_mu(LP, ev_a.values[COALITION_LP], value_r_alone,
                      ev_b.values[COALITION_L_ALONE], ev_a.rates.sum_secrecy)
    mu_e = payment_mu(EV, ev_b.values[COALITION_EV_R], value_r_alone,
                      ev_a.values[frozenset({EV})], ev_b.rates.sum_secrecy)
    econ_a = EconState(c1=1, c2=0, prev_c1=prev_c1, prev_u_r=prev_u_r,
                       c_conf=game_cfg.c_conf, eta=game_cfg.eta)
    econ_b = EconState(c1=0, c2=1, prev_c1=prev_c1, prev_u_r=prev_u_r,
                       c_conf=game_cfg.c_conf, eta=game_cfg.eta)
    reports = {
        PARTITION_LP_SIDE: UtilityReport(
            u_l=utility_lp(ev_a.rates, ev_a.energies[LP], e_r, econ_a, rho, mu_l.mu),
            u_e=utility_ev(ev_a.rates, ev_a.energies[EV], e_r, econ_a, rho, mu_e.mu),
            u_r=utility_tirs(econ_a, mu_l.mu, mu_e.mu),
            mu_l=mu_l, mu_e=None,
            value_lp_side=ev_a.values[COALITION_LP],
            value_ev_side=ev_a.values[frozenset({EV})],
            secrecy=tuple(float(x) for x in ev_a.rates.secrecy),
            sum_secrecy=ev_a.rates.sum_secrecy),
        PARTITION_EV_SIDE: UtilityReport(
            u_l=utility_lp(ev_b.rates, ev_b.energies[LP], e_r, econ_b, rho, mu_l.mu),
            u_e=utility_ev(ev_b.rates, ev_b.energies[EV], e_r, econ_b, rho, mu_e.mu),
            u_r=utility_tirs(econ_b, mu_l.mu, mu_e.mu),
            mu_l=None, mu_e=mu_e,
            value_lp_side=ev_b.values[COALITION_L_ALONE],
            value_ev_side=ev_b.values[COALITION_EV_R],
            secrecy=tuple(float(x) for x in ev_b.rates.secrecy),
            sum_secrecy=ev_b.rates.sum_secrecy),
    }
    side = {p: {LP: reports[p].u_l, EV: reports[p].u_e, TIRS: reports[p].u_r}
            for p in PARTITIONS}
    ctx = PreferenceContext.from_partition_utilities(
        side[PARTITION_LP_SIDE], side[PARTITION_EV_SIDE], u_r_alone=0.0)
    return ctx, side, mu_l, mu_e


@dataclass
class RunRecord:
    """Per-slot record of one online (or baseline) run."""

    mode: str
    seed: int
    config_hash: str
    columns: list
    rows: list

    def column(self, name):
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_csv_text(self) -> str:
        lines = [f"# irsgame-record v{SCHEMA_VERSION} mode={self.mode} "
                 f"config={self.config_hash} seed={self.seed}"]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv_text(cls, text: str) -> "RunRecord":
        lines = [ln for ln in text.strip().split("\n") if ln]
        header = lines[0]
        if not header.startswith("# irsgame-record"):
            raise ValueError("not a run-record CSV")
        meta = dict(part.split("=", 1) for part in header.split() if "=" in part)
        columns = lines[1].split(",")
        rows = []
        for line in lines[2:]:
            row = []
            for name, tok in zip(columns, line.split(",")):
                if name in ("t", "c1", "switches", "sweeps", "stable",
                            "inner_iters_lpside", "inner_iters_evside"):
                    row.append(int(tok))
                elif name == "channel_hash":
                    row.append(tok)
                else:
                    row.append(float(tok))
            rows.append(row)
        return cls(mode=meta["mode"], seed=int(meta["seed"]), config_hash=meta["config"],
                   columns=columns, rows=rows)

    def summary(self) -> dict:
        def col(name):
            return np.asarray(self.column(name), dtype=np.float64)

        slots = len(self.rows)
        out = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "slots": slots,
            "cumulative": {p: float(np.sum(col(c)))
                           for p, c in (("u_l", "u_l"), ("u_e", "u_e"), ("u_r", "u_r"))},
            "mean": {p: float(np.mean(col(c)))
                     for p, c in (("u_l", "u_l"), ("u_e", "u_e"), ("u_r", "u_r"))},
            "occupancy_c1": float(np.mean(col("c1"))),
            "total_switches": int(np.sum(col("switches"))),
            "stable_fraction": float(np.mean(col("stable"))),
            "mean_sum_secrecy": float(np.mean(col("sum_sec"))),
            "mean_mu_paid": float(np.mean(col("mu_paid"))),
            "ne_gains": {
                "L": float(np.mean(col("dev_u_l") - col("u_l"))),
                "E": float(np.mean(col("dev_u_e") - col("u_e"))),
                "R": float(np.mean(col("dev_u_r") - col("u_r"))),
            },
        }
        return out


def _record_columns(num_lrs: int) -> list:
    return (["t", "c1", "switches", "sweeps", "inner_iters_lpside", "inner_iters_evside",
             "stable", "u_l", "u_e", "u_r", "mu_paid", "mu_paid_raw",
             "mu_l", "mu_l_raw", "mu_e", "mu_e_raw",
             "sum_sec", "sum_sec_lpside", "sum_sec_evside"]
            + [f"sec_{i}" for i in range(num_lrs)]
            + ["value_lp_coalition", "value_ev_coalition",
               "reward_lp_side", "reward_ev_side",
               "u_l_lpside", "u_e_lpside", "u_r_lpside",
               "u_l_evside", "u_e_evside", "u_r_evside",
               "dev_u_l", "dev_u_e", "dev_u_r",
               "alt_u_l", "alt_u_e", "alt_u_r",
               "channel_hash"])


def online_run(cfg: ExperimentConfig, seed: int, checkpoint_dir,
               mode: str = "proposed") -> RunRecord:
    """Algorithm-1 online stage (or a frozen-partition baseline run).

    mode: "proposed" plays switch dynamics each slot; "lfi"/"efi" freeze the
    partition to the LP/EV side. All modes consume the identical channel
    stream for a given seed (paired comparisons).
    """
    if mode not in ("proposed", "lfi", "efi"):
        raise ValueError("mode must be proposed, lfi or efi")
    bundle = Bundle.build(cfg, seed)
    game_cfg, run_cfg = cfg.game, cfg.run
    agents = bundle.load_agents(checkpoint_dir)

    channel_proc = ChannelProcess(bundle.geom, bundle.fading, corr=cfg.fading.doppler_corr)
    channel_rng = _stream(seed, _STREAM_ONLINE_CHANNEL)
    side_rng = _stream(seed, _STREAM_ONLINE_SIDE)

    finetune = run_cfg.online_finetune and mode == "proposed"
    if finetune:
        ft_rngs = {s: _stream(seed, _STREAM_FINETUNE, idx)
                   for idx, (_, s) in enumerate(AGENT_ORDER)}
        ft_buffers = {s: RolloutBuffer(capacity=bundle.hp.buffer_episodes
                                       * run_cfg.steps_per_episode)
                      for _, s in AGENT_ORDER}

    columns = _record_columns(bundle.geom.num_lrs)
    rows = []
    prev_rates = {p: None for p in PARTITIONS}
    prev_c1 = None
    prev_u_r = 0.0

    for t in range(1, run_cfg.slots + 1):
        realization = channel_proc.draw(channel_rng)
        evals = {p: converge_partition(p, realization, agents, prev_rates[p],
                                       bundle, game_cfg, run_cfg)
                 for p in PARTITIONS}

        if mode == "proposed":
            if prev_c1 is None or game_cfg.random_side_each_slot:
                start = CoalitionPartition(int(side_rng.integers(0, 2)))
            else:
                start = CoalitionPartition(prev_c1)
        else:
            start = PARTITION_LP_SIDE if mode == "lfi" else PARTITION_EV_SIDE
        effective_prev_c1 = prev_c1 if prev_c1 is not None else start.c1

        ctx, side, mu_l, mu_e = build_slot_context(evals, effective_prev_c1, prev_u_r,
                                                   bundle, game_cfg)
        if mode == "proposed":
            result = run_switch_dynamics(ctx, start, order=tuple(game_cfg.switch_order),
                                         max_iters=game_cfg.max_switch_iters)
            played, switches, sweeps = result.partition, result.switches, result.sweeps
        else:
            played, switches, sweeps = start, 0, 0
        stable = is_stable(played, ctx)
        payoffs = deviation_payoffs(played, ctx)

        ev_played = evals[played]
        ev_a, ev_b = evals[PARTITION_LP_SIDE], evals[PARTITION_EV_SIDE]
        mu_paid = mu_l if played.c1 == 1 else mu_e
        lp_coalition = COALITION_LP if played.c1 == 1 else COALITION_L_ALONE
        ev_coalition = frozenset({EV}) if played.c1 == 1 else COALITION_EV_R
        # reward bookkeeping mirrors the training reward (penalty on LP side)
        violations = int(np.sum(ev_played.rates.secrecy < bundle.pp.r_sec_min))
        reward_lp = ev_played.values[lp_coalition] - game_cfg.eta * violations
        reward_ev = ev_played.values[ev_coalition]
        alt = evals[played.flipped()]
        alt_side = side[played.flipped()]

        rows.append(
            [t, played.c1, switches, sweeps,
             ev_a.iterations, ev_b.iterations, int(stable),
             side[played][LP], side[played][EV], side[played][TIRS],
             mu_paid.mu, mu_paid.raw,
             mu_l.mu, mu_l.raw, mu_e.mu, mu_e.raw,
             ev_played.rates.sum_secrecy, ev_a.rates.sum_secrecy, ev_b.rates.sum_secrecy]
            + [float(x) for x in ev_played.rates.secrecy]
            + [ev_played.values[lp_coalition], ev_played.values[ev_coalition],
               reward_lp, reward_ev,
               side[PARTITION_LP_SIDE][LP], side[PARTITION_LP_SIDE][EV],
               side[PARTITION_LP_SIDE][TIRS],
               side[PARTITION_EV_SIDE][LP], side[PARTITION_EV_SIDE][EV],
               side[PARTITION_EV_SIDE][TIRS],
               payoffs[LP], payoffs[EV], payoffs[TIRS],
               alt_side[LP], alt_side[EV], alt_side[TIRS],
               realization.content_hash()])

        if finetune:
            # store the played partition's converged step as a transition batch
            for s in played.coalitions():
                state = assemble_state(realization, prev_rates[played], s, bundle.geom,
                                       bundle.fading.l0, run_cfg.rate_scale,
                                       run_cfg.mask_cross_csi, run_cfg.channel_gain)
                action, logp = agents[s].act(state, ft_rngs[s])
                reward = reward_lp if LP in s else reward_ev
                nxt = assemble_state(realization, ev_played.rates, s, bundle.geom,
                                     bundle.fading.l0, run_cfg.rate_scale,
                                     run_cfg.mask_cross_csi, run_cfg.channel_gain)
                ft_buffers[s].add(Transition(state, action, logp, reward, nxt, True))
                if ft_buffers[s].full:
                    agents[s].update(ft_buffers[s], ft_rngs[s])
                    ft_buffers[s].clear()

        prev_rates[PARTITION_LP_SIDE] = ev_a.rates
        prev_rates[PARTITION_EV_SIDE] = ev_b.rates
        prev_c1 = played.c1
        prev_u_r = side[played][TIRS]

    return RunRecord(mode=mode, seed=seed, config_hash=cfg.config_hash(),
                     columns=columns, rows=rows)


def run_baseline(cfg: ExperimentConfig, seed: int, checkpoint_dir, which: str) -> RunRecord:
    """LFI/EFI baseline: the identical pipeline with the partition frozen."""
    if which not in ("lfi", "efi"):
        raise ValueError("baseline must be 'lfi' or 'efi'")
    return online_run(cfg, seed, checkpoint_dir, mode=which)


# ----------------------------------------------------------------- outputs


def emit_outputs(record: RunRecord, out_dir, plot_points: int = 200) -> dict:
    """Write the per-slot CSV, the summary JSON and plot-ready series."""
    os.makedirs(out_dir, exist_ok=True)
    tag = f"{record.mode}_s{record.seed}"
    paths = {
        "record": os.path.join(out_dir, f"record_{tag}.csv"),
        "summary": os.path.join(out_dir, f"summary_{tag}.json"),
        "plots": os.path.join(out_dir, f"plots_{tag}.json"),
    }
    with open(paths["record"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(record.to_csv_text())
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record.summary(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    stride = max(1, len(record.rows) // max(1, plot_points))
    series = {"stride": stride, "mode": record.mode, "seed": record.seed}
    for name in ("t", "c1", "u_l", "u_e", "u_r", "sum_sec", "mu_paid"):
        series[name] = record.column(name)[::stride]
    cumulative = {f"cum_{name}": np.cumsum(record.column(name)).tolist()[::stride]
                  for name in ("u_l", "u_e", "u_r")}
    series.update(cumulative)
    with open(paths["plots"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(series, fh, sort_keys=True)
        fh.write("\n")
    return paths


def eval_stability(record: RunRecord, tolerance: float = 1e-9) -> dict:
    """Recompute per-slot stability and NE gains from a recorded run."""
    stable_flags = []
    trace = []
    for row in record.rows:
        data = dict(zip(record.columns, row))
        ctx = PreferenceContext.from_partition_utilities(
            {LP: data["u_l_lpside"], EV: data["u_e_lpside"], TIRS: data["u_r_lpside"]},
            {LP: data["u_l_evside"], EV: data["u_e_evside"], TIRS: data["u_r_evside"]},
            u_r_alone=0.0)
        played = CoalitionPartition(int(data["c1"]))
        stable_flags.append(is_stable(played, ctx))
        trace.append({LP: (data["u_l"], data["dev_u_l"]),
                      EV: (data["u_e"], data["dev_u_e"]),
                      TIRS: (data["u_r"], data["dev_u_r"])})
    report = check_ne_trace(trace, tolerance=tolerance)
    return {
        "slots": len(record.rows),
        "stable_fraction": float(np.mean(stable_flags)),
        "all_stable": bool(np.all(stable_flags)),
        "ne_gains": {p: report.gains[p] for p in report.gains},
        "ne_consistent": report.consistent,
        "tolerance": tolerance,
    }
