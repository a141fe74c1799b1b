import numpy as np
import pytest

from ncfair.datagen import (
    BiasConfig,
    SystemMatrices,
    TrajectorySet,
    apply_bias,
    as_trajectory_set,
    generate_benchmark_dataset,
    simulate_lds,
)


def scalar_system(g=1.0, f=1.0, v=0.0, w=0.0, m0=5.0):
    return SystemMatrices(
        G=np.array([[g]]),
        F=np.array([f]),
        V=v,
        W=np.array([[w]]),
        m0=np.array([m0]),
    )


def test_system_matrices_validation():
    good = scalar_system()
    assert good.hidden_dim == 1
    with pytest.raises(ValueError):
        SystemMatrices(np.zeros((2, 3)), np.zeros(2), 0.0, np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        SystemMatrices(np.eye(2), np.zeros(3), 0.0, np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        SystemMatrices(np.eye(2), np.zeros(2), 0.0, np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        SystemMatrices(np.eye(2), np.zeros(2), -0.5, np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        SystemMatrices(np.eye(2), np.zeros(2), 0.0, np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        SystemMatrices(np.eye(2), np.zeros(2), 0.0, -np.eye(2), np.zeros(2))


def test_noiseless_identity_system_is_constant():
    assert simulate_lds(scalar_system(), 4, seed=0) == [5.0, 5.0, 5.0, 5.0]


def test_noiseless_first_step_two_dimensional():
    system = SystemMatrices(
        G=np.array([[0.99, 0.0], [1.0, 0.2]]),
        F=np.array([1.1, 0.8]),
        V=0.0,
        W=np.zeros((2, 2)),
        m0=np.array([1.0, 0.0]),
    )
    values = simulate_lds(system, 2, seed=0)
    # F G m0 and F G^2 m0 by hand
    assert values[0] == pytest.approx(1.889, abs=1e-12)
    assert values[1] == pytest.approx(2.03011, abs=1e-12)


def test_noiseless_simulation_matches_manual_recursion():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        G = rng.normal(size=(n, n)) * 0.5
        F = rng.normal(size=n)
        m0 = rng.normal(size=n)
        system = SystemMatrices(G=G, F=F, V=0.0, W=np.zeros((n, n)), m0=m0)
        values = simulate_lds(system, 6, seed=1)
        state = m0.copy()
        for t in range(6):
            state = G @ state
            assert values[t] == pytest.approx(float(F @ state), abs=1e-12)


def test_simulation_seed_determinism_and_chaining():
    system = scalar_system(g=0.9, v=0.3, w=0.05)
    assert simulate_lds(system, 8, seed=42) == simulate_lds(system, 8, seed=42)
    assert simulate_lds(system, 8, seed=42) != simulate_lds(system, 8, seed=43)
    shared = np.random.default_rng(42)
    first = simulate_lds(system, 8, shared)
    second = simulate_lds(system, 8, shared)
    assert first == simulate_lds(system, 8, seed=42)
    assert first != second


def test_simulate_rejects_bad_horizon():
    with pytest.raises(ValueError):
        simulate_lds(scalar_system(), 0, seed=0)
    with pytest.raises(ValueError):
        simulate_lds(scalar_system(), 2.5, seed=0)


def test_trajectory_set_coercion_and_listings():
    data = TrajectorySet({("a", 1, np.int64(2)): 1.0, ("a", "1", 1): 2.0, ("b", "x", 1): 3})
    assert len(data) == 3
    assert data.get("a", "1", 2) == 1.0
    assert data.subgroups == ["a", "b"]
    assert data.trajectories("a") == ["1"]
    assert data.periods("a") == [1, 2]
    assert data.observed_periods == (1, 2)
    assert data.series("a", "1") == {1: 2.0, 2: 1.0}
    assert data.max_abs() == 3.0
    assert ("b", "x", 1) in data


def test_trajectory_set_rejects_bad_keys_and_values():
    with pytest.raises(ValueError):
        TrajectorySet({("a", "1"): 1.0})
    with pytest.raises(ValueError):
        TrajectorySet({("a", "1", 0): 1.0})
    with pytest.raises(ValueError):
        TrajectorySet({("a", "1", True): 1.0})
    with pytest.raises(ValueError):
        TrajectorySet({("a", "1", 1.5): 1.0})
    with pytest.raises(ValueError):
        TrajectorySet({("", "1", 1): 1.0})
    with pytest.raises(ValueError):
        TrajectorySet({("a", "1", 1): float("nan")})
    with pytest.raises(ValueError):
        TrajectorySet([(("a", "1", 1), 1.0), (("a", 1, 1), 2.0)])


def test_trajectory_set_equality_subset_and_empty():
    data = as_trajectory_set({("a", "1", 1): 1.0, ("a", "1", 2): -4.0})
    assert data == TrajectorySet({("a", "1", 2): -4.0, ("a", "1", 1): 1.0})
    trimmed = data.subset(lambda s, i, t: t == 1)
    assert len(trimmed) == 1
    empty = data.subset(lambda s, i, t: False)
    assert not empty
    assert len(empty) == 0
    assert empty.max_abs() == 0.0
    assert "empty" in repr(empty)
    with pytest.raises(ValueError):
        data.trajectories("zzz")
    with pytest.raises(ValueError):
        data.series("a", "9")


def sample_set():
    obs = {}
    for s, count in (("adv", 3), ("dis", 2)):
        for i in range(count):
            for t in range(1, 6):
                obs[(s, str(i), t)] = float(10 * (i + 1) + t)
    return TrajectorySet(obs)


def test_bias_config_validation():
    with pytest.raises(ValueError):
        BiasConfig({"a": 1.5})
    with pytest.raises(ValueError):
        BiasConfig({"a": -0.1})
    cfg = BiasConfig({"a": 0.5})
    assert cfg.guard is True


def test_bias_full_retention_is_identity():
    data = sample_set()
    assert apply_bias(data, BiasConfig({"adv": 1.0, "dis": 1.0}, seed=3)) == data
    # subgroups missing from the map default to full retention
    assert apply_bias(data, BiasConfig({}, seed=3)) == data


def test_bias_rejects_unknown_subgroup():
    with pytest.raises(ValueError, match="unknown"):
        apply_bias(sample_set(), BiasConfig({"nope": 0.5}))


def test_bias_guard_leaves_one_observation_per_period():
    data = sample_set()
    thinned = apply_bias(data, BiasConfig({"dis": 0.0}, seed=9))
    for t in range(1, 6):
        kept = [k for k, _ in thinned.items() if k[0] == "dis" and k[2] == t]
        assert len(kept) == 1
    # the advantaged subgroup is untouched
    assert [k for k, _ in thinned.items() if k[0] == "adv"] == [
        k for k, _ in data.items() if k[0] == "adv"
    ]


def test_bias_without_guard_can_empty_a_subgroup():
    data = sample_set()
    thinned = apply_bias(data, BiasConfig({"dis": 0.0}, seed=9, guard=False))
    assert "dis" not in thinned.subgroups
    assert len(thinned) == 15


def test_bias_never_invents_observations():
    data = sample_set()
    rng = np.random.default_rng(101)
    for _ in range(25):
        cfg = BiasConfig(
            {"adv": float(rng.uniform()), "dis": float(rng.uniform())},
            seed=int(rng.integers(2**31)),
            guard=bool(rng.integers(0, 2)),
        )
        thinned = apply_bias(data, cfg)
        for key, value in thinned.items():
            assert data.get(*key) == value


def test_bias_is_deterministic_in_the_seed():
    data = sample_set()
    cfg = BiasConfig({"dis": 0.4}, seed=77)
    assert apply_bias(data, cfg) == apply_bias(data, BiasConfig({"dis": 0.4}, seed=77))
    assert apply_bias(data, cfg) != apply_bias(data, BiasConfig({"dis": 0.4}, seed=78))


def test_bias_retention_rate_matches_probability():
    """Empirical keep rate over 10,000 draws stays within 0.02 of beta."""
    big = TrajectorySet({("s", str(i), t): 1.0 for i in range(2000) for t in range(1, 6)})
    for beta in (0.3, 0.7):
        thinned = apply_bias(big, BiasConfig({"s": beta}, seed=5, guard=False))
        assert abs(len(thinned) / len(big) - beta) < 0.02


def test_benchmark_dataset_shape():
    data = generate_benchmark_dataset(seed=0)
    assert data.subgroups == ["advantaged", "disadvantaged"]
    assert data.trajectories("advantaged") == ["0", "1", "2"]
    assert data.trajectories("disadvantaged") == ["0", "1"]
    assert data.periods() == list(range(1, 21))
    assert len(data) == 100


def test_benchmark_dataset_seed_and_horizon():
    assert generate_benchmark_dataset(seed=4) == generate_benchmark_dataset(seed=4)
    assert generate_benchmark_dataset(seed=4) != generate_benchmark_dataset(seed=5)
    short = generate_benchmark_dataset(seed=0, horizon=3, advantaged=1, disadvantaged=1)
    assert len(short) == 6
    with pytest.raises(ValueError):
        generate_benchmark_dataset(horizon=0)
    with pytest.raises(ValueError):
        generate_benchmark_dataset(advantaged=0)
