from __future__ import annotations

import hashlib
from dataclasses import replace

import numpy as np
import pytest

from grdesign.agents import OPTIMAL, Hyperbolic, Planner
from grdesign.datagen import (
    BLOCKED,
    EncodingSpec,
    NotModifiable,
    ParamRangeSampler,
    decode,
    encode,
    generate_dataset,
    load_dataset,
    save_dataset,
    tensor_flip_to_modification,
)
from grdesign.env import GenerationConfig, Modification
from grdesign.nn import ShapeError
from grdesign.wcd import brute_force_wcd, wcd_deterministic

from helpers import sample_envs


def test_encode_decode_round_trip():
    scaled = [replace(e, goal_reward=2.0) for e in sample_envs(20, seed=61, subgoal_count=2)]
    for env in sample_envs(50, seed=60) + scaled:
        x = encode(env, Planner(Hyperbolic(8.0)))
        assert x.shape == (6, 6, 6)
        back = decode(x, env.goal_reward)
        assert back == env


def test_parameter_plane_and_channels():
    env = sample_envs(1, seed=62)[0]
    x = encode(env, Planner(Hyperbolic(8.0)))
    assert (x[4] == 8.0).all()
    assert x[1].sum() == 1 and x[2].sum() == 1 and x[3].sum() == 1
    assert x[0].sum() == len(env.blocked)
    assert (encode(env, OPTIMAL)[4] == 1.0).all()


def test_layout_is_fixed():
    spec = EncodingSpec(6)
    assert spec.layout() == ["blocked", "start", "goal_0", "goal_1", "agent_param", "subgoal_reward"]
    expected = hashlib.sha256(b"blocked,start,goal_0,goal_1,agent_param,subgoal_reward").hexdigest()[:16]
    assert spec.layout_hash() == expected


def test_encode_rejects_wrong_size():
    env = sample_envs(1, size=5, seed=63)[0]
    with pytest.raises(ShapeError):
        encode(env, OPTIMAL, EncodingSpec(6))


def test_tensor_flip_mapping():
    assert tensor_flip_to_modification(BLOCKED, (2, 3), +1) == Modification.block((2, 3))
    assert tensor_flip_to_modification(BLOCKED, (2, 3), -1) == Modification.unblock((2, 3))
    for channel in range(1, 6):
        with pytest.raises(NotModifiable):
            tensor_flip_to_modification(channel, (0, 0), +1)


def test_labels_match_brute_force():
    ds = generate_dataset(GenerationConfig(5, 5, seed=0), OPTIMAL, 60, seed=64)
    for env, y in zip(ds.envs, ds.y):
        assert y == brute_force_wcd(env).value


def test_labels_for_discounted_agents():
    gen = GenerationConfig(5, 5, subgoal_count=2, seed=0)
    ds = generate_dataset(gen, ParamRangeSampler("hyperbolic", 0.0, 10.0), 30, seed=65)
    ks = [a["param"] for a in ds.agents]
    assert all(0 <= k <= 10 for k in ks) and len(set(ks)) == 30
    for env, x, agent, y in zip(ds.envs, ds.x, ds.agents, ds.y):
        assert x[4, 0, 0] == pytest.approx(agent["param"])
        assert y == wcd_deterministic(env, Planner(Hyperbolic(agent["param"]))).value


def test_count_must_be_positive():
    with pytest.raises(ValueError):
        generate_dataset(GenerationConfig(5, 5), OPTIMAL, 0, seed=0)


def test_same_seed_identical_files(tmp_path):
    gen = GenerationConfig(5, 5)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(generate_dataset(gen, OPTIMAL, 25, seed=3), a)
    save_dataset(generate_dataset(gen, OPTIMAL, 25, seed=3), b)
    assert a.read_bytes() == b.read_bytes()
    save_dataset(generate_dataset(gen, OPTIMAL, 25, seed=4), b)
    assert a.read_bytes() != b.read_bytes()


@pytest.mark.parametrize("name", ["d.jsonl", "d.npz"])
def test_dataset_round_trip(tmp_path, name):
    ds = generate_dataset(GenerationConfig(5, 5, subgoal_count=1), ParamRangeSampler("hyperbolic", 0, 10), 12, seed=5)
    save_dataset(ds, tmp_path / name)
    back = load_dataset(tmp_path / name)
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)
    assert back.agents == ds.agents and back.envs == ds.envs


def test_summary_histogram():
    ds = generate_dataset(GenerationConfig(5, 5), OPTIMAL, 40, seed=6)
    summary = ds.summary()
    assert summary["count"] == 40
    assert sum(summary["histogram"].values()) == 40
    assert summary["mean"] == pytest.approx(ds.y.mean())
