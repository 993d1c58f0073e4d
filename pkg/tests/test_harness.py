import json
import os

import numpy as np
import pytest

from irsgame.config import default_config
from irsgame.econ import EV, LP, TIRS
from irsgame.game import PARTITION_EV_SIDE, PARTITION_LP_SIDE
from irsgame.harness import (
    AGENT_ORDER,
    Bundle,
    PARTITIONS,
    RunRecord,
    build_slot_context,
    checkpoint_path,
    converge_partition,
    emit_outputs,
    eval_stability,
    offline_pretrain,
    online_run,
    run_baseline,
)


def tiny_config(episodes=2, steps=4, slots=6):
    cfg = default_config()
    cfg.geometry.num_lrs = 2
    cfg.geometry.m_a = 2
    cfg.geometry.m_e = 2
    cfg.geometry.n_elements = 4
    cfg.geometry.irs_positions = [[40.0, 20.0, 10.0]]
    cfg.ppo.hidden = [16]
    cfg.ppo.buffer_episodes = 1
    cfg.ppo.minibatch = 8
    cfg.run.episodes = episodes
    cfg.run.steps_per_episode = steps
    cfg.run.eval_slots = steps
    cfg.run.slots = slots
    return cfg


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny pretraining shared by the online-stage tests."""
    cfg = tiny_config()
    ck = str(tmp_path_factory.mktemp("ck"))
    result = offline_pretrain(cfg, 0, ck)
    return cfg, ck, result


# ----------------------------------------------------------------- offline

def test_pretrain_writes_four_checkpoints(trained):
    cfg, ck, result = trained
    files = sorted(os.listdir(ck))
    assert files == ["agent_ER_s0.npz", "agent_E_s0.npz", "agent_LR_s0.npz", "agent_L_s0.npz"]
    assert len(result.curves.rows) == cfg.run.episodes
    assert result.constraint_violations == 0
    # training plus evaluation rollouts, both partitions
    expected = cfg.run.episodes * (cfg.run.steps_per_episode + cfg.run.eval_slots) * 2
    assert result.steps_checked == expected


def test_pretrain_seed_rerun_identical_curves(tmp_path):
    cfg = tiny_config()
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    offline_pretrain(cfg, 3, tmp_path / "ck_a", out_dir=out_a)
    offline_pretrain(cfg, 3, tmp_path / "ck_b", out_dir=out_b)
    text_a = (out_a / "training_s3.csv").read_bytes()
    text_b = (out_b / "training_s3.csv").read_bytes()
    assert text_a == text_b


def test_checkpoint_paths_carry_seed(tmp_path):
    cfg = tiny_config(episodes=1)
    offline_pretrain(cfg, 11, tmp_path)
    bundle = Bundle.build(cfg, 11)
    agents = bundle.load_agents(tmp_path)
    assert set(agents) == {s for _, s in AGENT_ORDER}
    with pytest.raises(FileNotFoundError):
        Bundle.build(cfg, 12).load_agents(tmp_path)


# ------------------------------------------------------------------ online

def test_online_slots_all_stable(trained):
    cfg, ck, _ = trained
    record = online_run(cfg, 0, ck, mode="proposed")
    assert len(record.rows) == cfg.run.slots
    assert all(v == 1 for v in record.column("stable"))
    report = eval_stability(record)
    assert report["all_stable"] and report["ne_consistent"]


def test_online_rerun_byte_identical(trained):
    cfg, ck, _ = trained
    r1 = online_run(cfg, 0, ck, mode="proposed")
    r2 = online_run(cfg, 0, ck, mode="proposed")
    assert r1.to_csv_text() == r2.to_csv_text()


def test_infinite_switch_cost_freezes_after_first_slot(trained):
    cfg, ck, _ = trained
    frozen = tiny_config()
    frozen.game.c_conf = 1e9
    record = online_run(frozen, 0, ck, mode="proposed")
    switches = record.column("switches")
    c1 = record.column("c1")
    u_r = record.column("u_r")
    # as soon as the previous slot paid the TIRS anything, switching away
    # would cost C_conf * U^R(t-1) -> the side is locked
    for t in range(1, len(c1)):
        if u_r[t - 1] > 0.0:
            assert c1[t] == c1[t - 1] and switches[t] == 0


def test_baselines_freeze_partitions(trained):
    cfg, ck, _ = trained
    lfi = run_baseline(cfg, 0, ck, "lfi")
    efi = run_baseline(cfg, 0, ck, "efi")
    assert all(v == 1 for v in lfi.column("c1"))
    assert all(v == 0 for v in efi.column("c1"))
    assert all(v == 0 for v in lfi.column("switches"))
    # frozen partition means F(t) = 0 always: U^R equals the paid mu exactly
    for record in (lfi, efi):
        mu = record.column("mu_paid")
        u_r = record.column("u_r")
        assert np.allclose(u_r, mu, atol=0.0)


def test_paired_channel_streams(trained):
    cfg, ck, _ = trained
    proposed = online_run(cfg, 0, ck, mode="proposed")
    lfi = run_baseline(cfg, 0, ck, "lfi")
    efi = run_baseline(cfg, 0, ck, "efi")
    assert proposed.column("channel_hash") == lfi.column("channel_hash")
    assert proposed.column("channel_hash") == efi.column("channel_hash")
    other_seed = online_run(cfg, 1, ck, mode="lfi") if False else None
    with pytest.raises(ValueError):
        run_baseline(cfg, 0, ck, "nope")


def test_zero_action_stub_reduces_to_circuit_constants(trained):
    cfg, ck, _ = trained
    bundle = Bundle.build(cfg, 0)

    class ZeroAgent:
        def act_deterministic(self, state):
            from irsgame.env import action_dim
            return np.zeros(self._dim)

    agents = {}
    for _, s in AGENT_ORDER:
        from irsgame.env import action_dim
        stub = ZeroAgent()
        stub._dim = action_dim(s, bundle.geom)
        agents[s] = stub

    from irsgame.channel import draw_realization
    realization = draw_realization(bundle.geom, bundle.fading, np.random.default_rng(0))
    evals = {p: converge_partition(p, realization, agents, None, bundle, cfg.game, cfg.run)
             for p in PARTITIONS}
    ctx, side, mu_l, mu_e = build_slot_context(evals, 1, 0.0, bundle, cfg.game)
    pp = bundle.pp
    L = bundle.geom.num_lrs
    e_l = pp.p_b + L * pp.p_i
    e_e = pp.p_e
    e_r = bundle.energy_r()
    assert mu_l.mu == 0.0 and mu_e.mu == 0.0
    assert np.isclose(side[PARTITION_LP_SIDE][LP], -pp.rho * (e_l + e_r), atol=1e-15)
    assert np.isclose(side[PARTITION_LP_SIDE][EV], -pp.rho * e_e, atol=1e-15)
    assert side[PARTITION_LP_SIDE][TIRS] == 0.0
    assert np.isclose(side[PARTITION_EV_SIDE][EV], -pp.rho * (e_e + e_r), atol=1e-15)
    assert np.isclose(side[PARTITION_EV_SIDE][LP], -pp.rho * e_l, atol=1e-15)


# ----------------------------------------------------------------- outputs

def test_emit_outputs_row_count_and_rehash(trained, tmp_path):
    cfg, ck, _ = trained
    record = online_run(cfg, 0, ck, mode="proposed")
    paths = emit_outputs(record, tmp_path)
    csv_lines = open(paths["record"]).read().strip().split("\n")
    assert len(csv_lines) == 2 + cfg.run.slots  # header comment + columns + rows
    summary = json.load(open(paths["summary"]))
    # aggregates equal recomputation from the rows
    for party, col in (("u_l", "u_l"), ("u_e", "u_e"), ("u_r", "u_r")):
        assert abs(summary["cumulative"][party] - sum(record.column(col))) < 1e-9
    assert summary["config_hash"] == cfg.config_hash()
    # re-emission is byte-identical
    before = {k: open(p, "rb").read() for k, p in paths.items()}
    paths2 = emit_outputs(record, tmp_path)
    after = {k: open(p, "rb").read() for k, p in paths2.items()}
    assert before == after


def test_record_csv_roundtrip(trained):
    cfg, ck, _ = trained
    record = online_run(cfg, 0, ck, mode="proposed")
    parsed = RunRecord.from_csv_text(record.to_csv_text())
    assert parsed.columns == record.columns
    assert parsed.mode == record.mode and parsed.seed == record.seed
    assert parsed.config_hash == record.config_hash
    for a, b in zip(parsed.rows, record.rows):
        assert a == b
    assert parsed.summary() == record.summary()


def test_mu_within_bounds_every_slot(trained):
    cfg, ck, _ = trained
    for mode in ("proposed", "lfi", "efi"):
        record = online_run(cfg, 0, ck, mode=mode)
        mu = np.asarray(record.column("mu_paid"))
        sum_sec = np.asarray(record.column("sum_sec"))
        assert np.all(mu >= 0.0)
        assert np.all(mu <= sum_sec + 1e-12)
        mu_l = np.asarray(record.column("mu_l"))
        sec_lp = np.asarray(record.column("sum_sec_lpside"))
        assert np.all(mu_l >= 0.0) and np.all(mu_l <= sec_lp + 1e-12)
        mu_e = np.asarray(record.column("mu_e"))
        sec_ev = np.asarray(record.column("sum_sec_evside"))
        assert np.all(mu_e >= 0.0) and np.all(mu_e <= sec_ev + 1e-12)


def test_checkpoint_contract_enforcement(trained, tmp_path):
    cfg, ck, _ = trained
    # economic overrides keep checkpoints loadable...
    tweaked = tiny_config()
    tweaked.game.eta = 5.0
    record = online_run(tweaked, 0, ck, mode="proposed")
    assert len(record.rows) == tweaked.run.slots
    # ...but contract changes (architecture, state scaling) are rejected
    from irsgame.ppo import ShapeMismatchError
    other = tiny_config()
    other.run.channel_gain = 1.0
    with pytest.raises(ShapeMismatchError):
        online_run(other, 0, ck, mode="proposed")


def test_online_finetune_flag_runs(trained, tmp_path):
    cfg, ck, _ = trained
    tuned = tiny_config()
    tuned.run.online_finetune = True
    tuned.run.slots = 10
    record = online_run(tuned, 0, ck, mode="proposed")
    assert len(record.rows) == 10


# --------------------------------------------------------------------- cli

def test_cli_end_to_end(tmp_path):
    from irsgame.cli import main
    from irsgame.config import save_config

    cfg = tiny_config()
    cfg_path = tmp_path / "cfg.yaml"
    save_config(cfg, cfg_path)
    ck = str(tmp_path / "ck")
    out = str(tmp_path / "out")
    base = ["--config", str(cfg_path), "--seed", "0", "--out", out, "--checkpoint-dir", ck]
    assert main(["pretrain"] + base) == 0
    assert main(["run"] + base) == 0
    assert main(["baseline"] + base + ["--policy", "lfi"]) == 0
    assert main(["baseline"] + base + ["--policy", "efi"]) == 0
    assert main(["eval-stability"] + base + ["--mode", "proposed"]) == 0
    assert main(["emit-plots"] + base + ["--mode", "proposed"]) == 0
    names = sorted(os.listdir(out))
    assert "record_proposed_s0.csv" in names
    assert "record_lfi_s0.csv" in names and "record_efi_s0.csv" in names
    assert "stability_proposed_s0.json" in names
    assert "training_s0.csv" in names


def test_cli_write_config(tmp_path):
    from irsgame.cli import main
    path = tmp_path / "written.yaml"
    assert main(["write-config", "--out", str(path)]) == 0
    from irsgame.config import load_config
    cfg = load_config(path)
    assert cfg.to_dict() == default_config().to_dict()
