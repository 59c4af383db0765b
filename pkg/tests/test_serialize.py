"""Artifact round-trips and run-directory manifests."""

import random

import numpy as np
import pytest

from conftest import mk_traj, random_highway_graph
from highway_rl.encoder import RandomProjector, project_sequence
from highway_rl.errors import MissingArtifact
from highway_rl.reparam import ApproxConfig, QDataset, fit
from highway_rl.serialize import (load_approximator, load_empirical_graph,
                                  load_highway_graph, load_projector,
                                  load_value_tables, read_manifest,
                                  save_approximator, save_empirical_graph,
                                  save_highway_graph, save_projector,
                                  save_value_tables, verify_manifest, write_manifest)
from highway_rl.transition_model import EmpiricalGraph, record_trajectory
from highway_rl.value_iteration import value_update_loop


def test_highway_graph_round_trip(tmp_path):
    g = random_highway_graph(random.Random(3), max_intersections=15)
    g.assemble([mk_traj((900, 0, 901, 0.25), (901, 1, 902, -0.5))])
    path = tmp_path / "graph.npz"
    save_highway_graph(path, g)
    loaded = load_highway_graph(path)
    assert loaded.gamma == g.gamma
    assert loaded.intersections == g.intersections
    assert loaded.membership.keys() == g.membership.keys()
    assert loaded.edge_index == g.edge_index
    assert loaded.observed == g.observed
    spans = lambda gr: sorted((h.from_state, h.first_action, h.to_state, h.actions,
                               h.step_rewards, h.step_states)
                              for h in gr.highways.values())
    assert spans(loaded) == spans(g)


def test_empirical_graph_round_trip(tmp_path):
    g = EmpiricalGraph(gamma=0.95)
    record_trajectory(g, mk_traj((0, 0, 1, 0.125), (1, 3, 2, -4.0)))
    record_trajectory(g, mk_traj((0, 0, 1, 0.125)))
    path = tmp_path / "emp.npz"
    save_empirical_graph(path, g)
    loaded = load_empirical_graph(path)
    assert loaded.gamma == g.gamma
    assert loaded.nodes == g.nodes
    assert loaded.edges == g.edges


def test_value_tables_round_trip(tmp_path):
    g = random_highway_graph(random.Random(8), max_intersections=10)
    tables = value_update_loop(g, max_iter=3000, delta=1e-12)
    path = tmp_path / "tables.npz"
    save_value_tables(path, tables)
    loaded = load_value_tables(path)
    assert loaded.v == tables.v
    assert loaded.q == tables.q
    assert loaded.iterations_run == tables.iterations_run
    assert loaded.final_delta == tables.final_delta


def test_projector_round_trip(tmp_path):
    p = RandomProjector.create(obs_dim=3, output_dim=6, hidden_dim=4, init_seed=5)
    path = tmp_path / "proj.npz"
    save_projector(path, p)
    loaded = load_projector(path)
    seq = [np.array([0.1, 0.2, 0.3]), np.array([-1.0, 0.0, 1.0])]
    assert np.array_equal(project_sequence(p, seq), project_sequence(loaded, seq))


def test_approximator_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = QDataset(features=rng.uniform(size=(6, 2)), actions=rng.integers(0, 3, 6),
                  targets=rng.normal(size=6))
    approx = fit(ds, ApproxConfig(hidden_units=8, epochs=5), action_count=3)
    path = tmp_path / "approx.npz"
    save_approximator(path, approx)
    loaded = load_approximator(path)
    x = rng.uniform(size=2)
    assert np.array_equal(approx.predict(x), loaded.predict(x))
    assert loaded.config == approx.config


def test_missing_artifact_raises(tmp_path):
    with pytest.raises(MissingArtifact):
        load_highway_graph(tmp_path / "nope.npz")


def test_kind_mismatch_raises(tmp_path):
    g = EmpiricalGraph()
    record_trajectory(g, mk_traj((0, 0, 1, 0.0)))
    path = tmp_path / "emp.npz"
    save_empirical_graph(path, g)
    with pytest.raises(MissingArtifact):
        load_highway_graph(path)


def test_manifest_digests(tmp_path):
    (tmp_path / "a.txt").write_text("hello")
    (tmp_path / "b.txt").write_text("world")
    write_manifest(tmp_path, {"k": 1})
    manifest = read_manifest(tmp_path)
    assert set(manifest["files"]) == {"a.txt", "b.txt"}
    assert verify_manifest(tmp_path)
    (tmp_path / "a.txt").write_text("tampered")
    assert not verify_manifest(tmp_path)
