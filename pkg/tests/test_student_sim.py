import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlelp.errors import ConfigError, InvalidInputError
from dlelp.kc_graph import ConceptGraph, GoalSet
from dlelp.student_sim import (
    Exercise,
    HistoryRecord,
    PopulationSpec,
    SimConfig,
    answer_exercise,
    apply_learning,
    compute_ep,
    evaluate_goals,
    init_session,
    kt_estimate,
    learning_gain,
    prerequisite_depths,
    sample_session,
    success_probability,
)


def _session(graph, goals, seed=0, **cfg):
    return init_session(graph, GoalSet.of(goals, graph.n), SimConfig(**cfg), seed)


# -- initialisation ----------------------------------------------------------


def test_same_seed_same_state(chain3):
    a, b = _session(chain3, [2], seed=4), _session(chain3, [2], seed=4)
    assert np.array_equal(a.true_mastery, b.true_mastery)
    assert np.array_equal(a.est_mastery, np.full(3, 0.5))
    assert a.step == 0 and a.history == []


def test_initial_ranges_many_sessions():
    # goal 5 with ancestors {1, 3}; everything else is far from the goal
    g = ConceptGraph.build([str(i) for i in range(8)], [(1, 3), (3, 5), (0, 2), (6, 7)])
    near = [1, 3, 5]
    far = [0, 2, 4, 6, 7]
    lo_near, hi_near, hi_far = 1.0, 0.0, 0.0
    for seed in range(10_000):
        s = _session(g, [5], seed=seed)
        m = s.true_mastery
        assert m.min() >= 0.0
        hi_near = max(hi_near, m[near].max())
        lo_near = min(lo_near, m[near].min())
        hi_far = max(hi_far, m[far].max())
    assert hi_near <= 0.4 < hi_far <= 0.7
    assert lo_near < 0.01 and hi_far > 0.69


def test_initial_goals_unmastered(chain3):
    s = _session(chain3, [1, 2])
    assert evaluate_goals(s, 0.5) == 0


def test_goal_size_mismatch(chain3):
    with pytest.raises(InvalidInputError):
        init_session(chain3, GoalSet.of([0], 5), SimConfig(), 0)


# -- answering ---------------------------------------------------------------


def test_success_at_difficulty():
    assert success_probability(0.4, 0.4, SimConfig()) == pytest.approx(0.55, abs=1e-12)


def test_success_closed_form():
    sigma3 = 1 / (1 + math.exp(-3))
    assert success_probability(0.9, 0.3, SimConfig()) == pytest.approx(0.2 + 0.7 * sigma3, abs=1e-12)
    assert success_probability(0.9, 0.3, SimConfig()) == pytest.approx(0.8667, abs=5e-4)  # quoted to four places


def test_success_limit_without_noise():
    cfg = SimConfig(slip=0.0, guess=0.0, answer_sharpness=200.0)
    assert success_probability(1.0, 0.0, cfg) == pytest.approx(1.0, abs=1e-12)
    assert success_probability(0.0, 1.0, cfg) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_success_probability_bounds(m, d):
    cfg = SimConfig()
    p = success_probability(m, d, cfg)
    assert cfg.guess <= p <= 1 - cfg.slip


def test_answer_appends_history(chain3):
    s = _session(chain3, [2])
    score = answer_exercise(s, Exercise(7, 1, 0.5))
    assert s.history == [HistoryRecord(7, 1, score, 0)]


def test_answer_frequency_matches_probability():
    g = ConceptGraph.build(["a"])
    s = _session(g, [0], seed=3)
    s.true_mastery[:] = 0.6
    p = success_probability(0.6, 0.4, s.config)
    hits = sum(answer_exercise(s, Exercise(0, 0, 0.4)) for _ in range(20_000))
    assert hits / 20_000 == pytest.approx(p, abs=0.01)


# -- learning ----------------------------------------------------------------


def test_isolated_gain():
    g = ConceptGraph.build(["a"])
    s = _session(g, [0])
    s.true_mastery[:] = 0.0
    apply_learning(s, Exercise(0, 0, 0.5))
    assert s.true_mastery[0] == pytest.approx(0.15)


def _blocked_setup():
    # 0 is a prerequisite of 1; 1 and 2 are similar
    g = ConceptGraph.build(["p", "t", "n"], [(0, 1)], [(1, 2, 0.9)])
    s = _session(g, [1])
    s.true_mastery[:] = 0.0
    return s


def test_gate_and_confusion_multiply():
    s = _blocked_setup()
    assert learning_gain(s, 1) == pytest.approx(0.15 * 0.3 * 0.2)


def test_recent_neighbor_lifts_confusion():
    s = _blocked_setup()
    s.practice(Exercise(2, 2, 0.5))  # neighbour practised at step 0
    assert learning_gain(s, 1) == pytest.approx(0.15 * 0.3)


def test_window_expires():
    s = _blocked_setup()
    s.true_mastery[0] = 0.9  # prerequisite mastered, isolate the confusion term
    s.practice(Exercise(2, 2, 0.5))
    for k in range(4):
        s.practice(Exercise(0, 0, 0.5))
        lifted = learning_gain(s, 1) == pytest.approx(0.15)
        # at step k + 2 the neighbour was practised k + 2 steps ago; window is 3
        assert lifted == (k + 2 <= 3)


def test_mastered_neighbor_no_confusion():
    s = _blocked_setup()
    s.true_mastery[2] = 0.8
    s.true_mastery[0] = 0.8
    assert learning_gain(s, 1) == pytest.approx(0.15)


def test_mastery_clamped():
    g = ConceptGraph.build(["a"])
    s = _session(g, [0], base_gain=1.0)
    s.true_mastery[:] = 0.99
    for _ in range(5):
        apply_learning(s, Exercise(0, 0, 0.5))
    assert s.true_mastery[0] <= 1.0


def test_true_mastery_monotone_random_episodes():
    g = ConceptGraph.build([str(i) for i in range(6)], [(0, 1), (1, 2), (3, 4)], [(2, 4, 0.8), (1, 5, 0.5)])
    rng = np.random.default_rng(0)
    for seed in range(10_000):
        s = _session(g, [2], seed=seed)
        prev = s.true_mastery.copy()
        for _ in range(3):
            kc = int(rng.integers(6))
            s.practice(Exercise(kc, kc, float(rng.uniform())))
            assert np.all(s.true_mastery >= prev)
            prev = s.true_mastery.copy()


# -- tracking ----------------------------------------------------------------


def test_tracker_no_attempts():
    assert kt_estimate([], 4, 0.5).tolist() == [0.5] * 4


def test_tracker_single_correct():
    assert kt_estimate([HistoryRecord(0, 2, 1, 0)], 3, 0.7)[2] == 1.0


def test_tracker_decay_weights():
    hist = [HistoryRecord(0, 0, s, i) for i, s in enumerate([1, 0, 1])]
    assert kt_estimate(hist, 1, 0.5)[0] == pytest.approx((0.25 + 1.0) / 1.75)


def test_tracker_replay_matches_session(chain3):
    s = _session(chain3, [2], seed=9)
    rng = np.random.default_rng(1)
    for _ in range(25):
        kc = int(rng.integers(3))
        s.practice(Exercise(kc, kc, 0.5))
    assert np.array_equal(kt_estimate(s.history, 3, s.config.tracker_decay), s.est_mastery)


# -- goals and E_p -----------------------------------------------------------


def test_evaluate_goals_strict(chain3):
    s = _session(chain3, [0, 2])
    s.true_mastery[:] = [0.5, 0.0, 0.9]
    assert evaluate_goals(s, 0.5) == 1
    s.true_mastery[:] = 0.9
    assert evaluate_goals(s, 0.5) == 2


def test_ep_cases():
    assert compute_ep(1, 3, 5) == (0.5, False)
    assert compute_ep(2, 2, 5).value == 0.0
    assert compute_ep(1, 5, 5).value == 1.0


def test_ep_sentinel_and_error():
    assert compute_ep(3, 3, 3) == (1.0, True)
    with pytest.raises(InvalidInputError):
        compute_ep(4, 4, 3)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_ep_in_unit_interval(start, gain, room):
    e_sup = start + room
    e_end = start + min(gain, room)
    value, flag = compute_ep(start, e_end, e_sup)
    assert 0.0 <= value <= 1.0
    assert flag == (room == 0)


# -- configs and populations ------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [{"gate_factor": 1.5}, {"slip": 1.0}, {"slip": 0.6, "guess": 0.6}, {"answer_sharpness": 0}, {"tracker_decay": 1.0}],
)
def test_bad_sim_config(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_population_depths(diamond):
    assert prerequisite_depths(diamond) == [0, 1, 2, 0]
    assert PopulationSpec(goal_depths=(2,)).pool(diamond) == [2]


def test_sample_session_deterministic(diamond):
    pop = PopulationSpec(goals_per_learner=2, goal_depths=(0, 1, 2))
    a = sample_session(diamond, SimConfig(), pop, 11)
    b = sample_session(diamond, SimConfig(), pop, 11)
    assert a.goals == b.goals and np.array_equal(a.true_mastery, b.true_mastery)
    assert len(a.goals.ids) == 2
