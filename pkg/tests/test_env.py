import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irsgame.channel import FadingParams, NodeGeometry, draw_realization
from irsgame.econ import COALITION_E_ALONE, COALITION_EV_R, COALITION_L_ALONE, COALITION_LP
from irsgame.env import (
    MissingFragmentError,
    PartitionEnv,
    action_dim,
    assemble_state,
    decode_and_project,
    merge_fragments,
    project_beamformers,
    project_jammers,
    state_dim,
    wrap_phases,
)
from irsgame.game import PARTITION_EV_SIDE, PARTITION_LP_SIDE
from irsgame.phy import PowerParams


def geometry(num_lrs=3, num_irss=2, m_a=4, m_e=4, n_elements=16):
    return NodeGeometry(
        lt=[0.0, 50.0, 20.0],
        ev=[70.0, 60.0, 1.5],
        lrs=[[80.0, 35.0 + 5.0 * i, 1.5] for i in range(num_lrs)],
        irss=[[40.0, 20.0 + 60.0 * k, 10.0] for k in range(num_irss)],
        m_a=m_a,
        m_e=m_e,
        n_elements=n_elements,
    )


def make_env(partition=PARTITION_LP_SIDE, **kwargs):
    geom = geometry()
    return PartitionEnv(partition, geom, FadingParams(), PowerParams(), **kwargs), geom


# ----------------------------------------------------------- action decoding

def test_action_dims_paper_scale():
    geom = geometry()
    assert action_dim(COALITION_LP, geom) == 2 * 3 * 4 + 2 * 16
    assert action_dim(COALITION_E_ALONE, geom) == 2 * 3 * 4
    assert action_dim(COALITION_L_ALONE, geom) == 2 * 3 * 4
    assert action_dim(COALITION_EV_R, geom) == 2 * 3 * 4 + 2 * 16


def test_decode_feasible_action_unchanged():
    geom = geometry()
    pp = PowerParams()
    rng = np.random.default_rng(0)
    raw = 0.3 * rng.standard_normal(action_dim(COALITION_LP, geom))
    raw[-2 * 16:] = rng.uniform(0.0, 2 * np.pi, 2 * 16)
    frag = decode_and_project(raw, COALITION_LP, geom, pp)
    w_expected = (raw[:24].reshape(3, 8)[:, :4] + 1j * raw[:24].reshape(3, 8)[:, 4:])
    assert np.allclose(frag["w"], w_expected, atol=1e-12)
    assert np.allclose(frag["phases"].ravel(), raw[24:], atol=1e-12)


def test_decode_projects_overpowered_beamformer():
    geom = geometry(num_lrs=1, num_irss=1, m_a=2, n_elements=1)
    pp = PowerParams(p_lmax=1.0)
    # ||w||^2 = 4 * P_max -> amplitude halves
    raw = np.array([2.0, 0.0, 0.0, 0.0, 1.0])
    frag = decode_and_project(raw, COALITION_LP, geom, pp)
    assert np.allclose(frag["w"], [[1.0, 0.0]], atol=1e-15)


def test_phase_wrap():
    assert np.isclose(wrap_phases(np.array(2 * np.pi + 0.5)), 0.5, atol=1e-12)
    assert wrap_phases(np.array(2 * np.pi)) == 2 * np.pi
    assert np.isclose(wrap_phases(np.array(-0.5)), 2 * np.pi - 0.5, atol=1e-12)


def test_projection_idempotent_and_contractive():
    rng = np.random.default_rng(1)
    pp = PowerParams(p_lmax=2.0, p_emax=0.5)
    for _ in range(100):
        w = 3.0 * (rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)))
        f = 2.0 * (rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)))
        pw = project_beamformers(w, pp.p_lmax)
        pf = project_jammers(f, pp.p_emax)
        for i in range(3):
            assert np.sum(np.abs(pw[i]) ** 2) <= pp.p_lmax + 1e-12
            assert np.sum(np.abs(pw[i]) ** 2) <= np.sum(np.abs(w[i]) ** 2) + 1e-12
        assert np.sum(np.abs(pf) ** 2) <= pp.p_emax + 1e-12
        assert np.allclose(project_beamformers(pw, pp.p_lmax), pw, atol=1e-12)
        assert np.allclose(project_jammers(pf, pp.p_emax), pf, atol=1e-12)


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_decode_project_idempotent_property(seed):
    geom = geometry(num_lrs=2, num_irss=1, m_a=2, m_e=2, n_elements=3)
    pp = PowerParams(p_lmax=1.0, p_emax=0.25)
    rng = np.random.default_rng(seed)
    raw = 4.0 * rng.standard_normal(action_dim(COALITION_EV_R, geom))
    frag = decode_and_project(raw, COALITION_EV_R, geom, pp)
    again = {
        "f": project_jammers(frag["f"], pp.p_emax),
        "phases": wrap_phases(frag["phases"]),
    }
    assert np.allclose(again["f"], frag["f"], atol=1e-12)
    assert np.array_equal(again["phases"], frag["phases"])
    assert np.all(frag["phases"] >= 0.0) and np.all(frag["phases"] <= 2 * np.pi)


def test_decode_rejects_wrong_length():
    geom = geometry()
    with pytest.raises(ValueError):
        decode_and_project(np.zeros(5), COALITION_LP, geom, PowerParams())


def test_merge_fragments_requires_all_blocks():
    geom = geometry()
    pp = PowerParams()
    rng = np.random.default_rng(2)
    frag_lr = decode_and_project(rng.standard_normal(action_dim(COALITION_LP, geom)),
                                 COALITION_LP, geom, pp)
    frag_e = decode_and_project(rng.standard_normal(action_dim(COALITION_E_ALONE, geom)),
                                COALITION_E_ALONE, geom, pp)
    profile = merge_fragments({COALITION_LP: frag_lr, COALITION_E_ALONE: frag_e}, geom)
    assert profile.w.shape == (3, 4) and profile.f.shape == (3, 4)
    with pytest.raises(MissingFragmentError):
        merge_fragments({COALITION_LP: frag_lr}, geom)
    with pytest.raises(MissingFragmentError):
        merge_fragments({COALITION_LP: frag_lr, COALITION_EV_R: {**frag_e, "phases": frag_lr["phases"]}}, geom)


# ------------------------------------------------------------------- states

def test_state_dims_paper_scale():
    geom = geometry()
    n_complex = 2 * 16 * 4 + 3 * 4 + 4 + 2 * 3 * 16 + 2 * 16 + 3 * 4
    assert state_dim(COALITION_LP, geom) == 2 * n_complex + 3 + 3
    assert state_dim(COALITION_E_ALONE, geom) == 2 * n_complex + 3 + 3
    assert state_dim(COALITION_L_ALONE, geom) == 2 * n_complex + 3 + 3
    re = draw_realization(geom, FadingParams(), np.random.default_rng(0))
    for s in (COALITION_LP, COALITION_E_ALONE, COALITION_L_ALONE, COALITION_EV_R):
        state = assemble_state(re, None, s, geom, 1e-3)
        assert state.shape == (state_dim(s, geom),)


def test_state_masking_blocks():
    geom = geometry(num_lrs=1, num_irss=1, m_a=1, m_e=1, n_elements=1)
    re = draw_realization(geom, FadingParams(), np.random.default_rng(1))
    from irsgame.phy import RateReport
    rates = RateReport(np.array([3.0]), np.array([1.0]), np.array([2.0]),
                       np.array([1.0]), np.array([1.0]))
    s_lp = assemble_state(re, rates, COALITION_L_ALONE, geom, 1e-3, rate_scale=1.0)
    s_ev = assemble_state(re, rates, COALITION_E_ALONE, geom, 1e-3, rate_scale=1.0)
    # LP-side carries R^L and R^sec, EV-side carries R^E and R^sec
    assert s_lp[-2] == 2.0 and s_lp[-1] == 1.0
    assert s_ev[-2] == 1.0 and s_ev[-1] == 1.0


def test_state_deterministic_and_first_slot_zeros():
    geom = geometry()
    re = draw_realization(geom, FadingParams(), np.random.default_rng(3))
    a = assemble_state(re, None, COALITION_LP, geom, 1e-3)
    b = assemble_state(re, None, COALITION_LP, geom, 1e-3)
    assert np.array_equal(a, b)
    assert np.all(a[-6:] == 0.0)


def test_state_cross_csi_mask():
    geom = geometry(num_lrs=1, num_irss=1, m_a=2, m_e=2, n_elements=2)
    re = draw_realization(geom, FadingParams(), np.random.default_rng(4))
    masked = assemble_state(re, None, COALITION_EV_R, geom, 1e-3, mask_cross_csi=True)
    plain = assemble_state(re, None, COALITION_EV_R, geom, 1e-3, mask_cross_csi=False)
    assert masked.shape == plain.shape
    assert not np.array_equal(masked, plain)
    # LP-side states are never masked
    lp_masked = assemble_state(re, None, COALITION_L_ALONE, geom, 1e-3, mask_cross_csi=True)
    lp_plain = assemble_state(re, None, COALITION_L_ALONE, geom, 1e-3, mask_cross_csi=False)
    assert np.array_equal(lp_masked, lp_plain)


# --------------------------------------------------------------------- step

def full_raw_actions(env, geom, rng, scale=0.5):
    return {s: scale * rng.standard_normal(action_dim(s, geom)) for s in env.coalitions}


def test_step_reward_decomposition_and_constraints():
    env, geom = make_env()
    rng = np.random.default_rng(5)
    env.reset(rng=rng)
    for _ in range(10):
        outcome = env.step(full_raw_actions(env, geom, rng, scale=2.0), rng=rng)
        for s in env.coalitions:
            assert abs(outcome.rewards[s] + outcome.penalties[s] - outcome.values[s]) < 1e-12
        outcome.profile.validate(env.pp)
    assert env.steps_checked == 10 and env.constraint_violations == 0


def test_step_penalty_semantics():
    env, geom = make_env(PARTITION_LP_SIDE)
    rng = np.random.default_rng(6)
    env.reset(rng=rng)
    outcome = env.step(full_raw_actions(env, geom, rng), rng=rng)
    violations = int(np.sum(outcome.rates.secrecy < env.pp.r_sec_min))
    lp_side, ev_side = env.coalitions
    assert outcome.penalties[lp_side] == env.eta * violations
    assert outcome.penalties[ev_side] == 0.0
    assert outcome.rewards[lp_side] == outcome.values[lp_side] - env.eta * violations


def test_ev_side_coalition_never_penalized():
    env, geom = make_env(PARTITION_EV_SIDE)
    rng = np.random.default_rng(7)
    env.reset(rng=rng)
    for _ in range(5):
        outcome = env.step(full_raw_actions(env, geom, rng), rng=rng)
        assert outcome.penalties[COALITION_EV_R] == 0.0
        assert outcome.rewards[COALITION_EV_R] == outcome.values[COALITION_EV_R]


def test_step_seed_replay_equality():
    env1, geom = make_env()
    env2, _ = make_env()
    rng_a, rng_b = np.random.default_rng(8), np.random.default_rng(8)
    act_rng_a, act_rng_b = np.random.default_rng(9), np.random.default_rng(9)
    env1.reset(rng=rng_a)
    env2.reset(rng=rng_b)
    for _ in range(4):
        o1 = env1.step(full_raw_actions(env1, geom, act_rng_a), rng=rng_a)
        o2 = env2.step(full_raw_actions(env2, geom, act_rng_b), rng=rng_b)
        for s in env1.coalitions:
            assert np.array_equal(o1.states[s], o2.states[s])
            assert o1.rewards[s] == o2.rewards[s]


def test_step_requires_reset_and_fragments():
    env, geom = make_env()
    rng = np.random.default_rng(10)
    with pytest.raises(RuntimeError):
        env.step(full_raw_actions(env, geom, rng), rng=rng)
    env.reset(rng=rng)
    bad = {list(env.coalitions)[0]: np.zeros(action_dim(list(env.coalitions)[0], geom))}
    with pytest.raises(KeyError):
        env.step(bad, rng=rng)
