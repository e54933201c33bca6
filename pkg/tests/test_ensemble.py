import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attitude_ensemble.ensemble import (
    ModelEntry,
    ModelRegistry,
    ensemble_predict,
    load_registry,
    read_votes_csv,
    vote,
    write_registry,
    write_votes_csv,
)
from attitude_ensemble.errors import CoverageError, InvalidConfigError, InvalidInputError
from attitude_ensemble.flightsim import VIEW_IDS
from attitude_ensemble.nn import checkpoint
from attitude_ensemble.nn.network import Network, NetworkSpec
from cases import random_votes
from oracles import tally_vote

ARCH = "input(3,8,8) flatten dense(9) softmax(9)"

pred = st.tuples(st.integers(0, 8), st.sampled_from([0.25, 0.5, 0.75, 1.0]))


def tiny_registry(views=VIEW_IDS, per_view=4, seed=0):
    items = []
    for v_i, view in enumerate(views):
        for j in range(per_view):
            net = Network(NetworkSpec.from_text(ARCH), seed=seed + 10 * v_i + j)
            items.append((f"{view}-m{j}", view, net, ARCH))
    return ModelRegistry.from_models(items)


def frame_set(views=VIEW_IDS, n=12, seed=0):
    rng = np.random.default_rng(seed)
    return {(100 * t, v): rng.integers(0, 256, (8, 8, 3), dtype=np.uint8) for t in range(n) for v in views}


class TestVote:
    @pytest.mark.parametrize(
        "ballot, expected",
        [
            ([0, 0, 2, 8, 0], (0, "majority")),
            ([(1, 0.9), (1, 0.8), (2, 0.95), (2, 0.6)], (1, "confidence-tiebreak")),
            ([(4, 0.5)], (4, "majority")),
            ([(3, 0.5), (5, 0.5)], (3, "index-tiebreak")),
            ([(5, 0.5), (3, 0.5)], (3, "index-tiebreak")),
            ([(7, 0.1), (2, 0.3)], (2, "confidence-tiebreak")),
        ],
    )
    def test_examples(self, ballot, expected):
        assert vote(ballot) == expected

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            vote([])

    def test_oracle_10k(self):
        cases = random_votes(np.random.default_rng(0), 10_000)
        rules = set()
        for c in cases:
            got = vote(c)
            assert got == tally_vote(c), c
            rules.add(got[1])
        assert rules == {"majority", "confidence-tiebreak", "index-tiebreak"}

    @given(st.lists(pred, min_size=1, max_size=7), st.randoms())
    def test_permutation_invariant(self, ballot, rnd):
        shuffled = list(ballot)
        rnd.shuffle(shuffled)
        assert vote(shuffled) == vote(ballot)

    @given(st.lists(pred, min_size=1, max_size=7))
    def test_duplicate_winner_keeps_winner(self, ballot):
        winner, _ = vote(ballot)
        conf = max(p for c, p in ballot if c == winner)
        assert vote(ballot + [(winner, conf)])[0] == winner

    @given(st.integers(0, 8), st.integers(1, 30), st.floats(0, 1))
    def test_k_copies(self, c, k, p):
        assert vote([(c, p)] * k) == (c, "majority")

    @given(st.lists(pred, min_size=1, max_size=5))
    def test_winner_among_votes(self, ballot):
        assert vote(ballot)[0] in {c for c, _ in ballot}


class TestEnsemble:
    def test_exclude_gauge_gives_16(self):
        reg = tiny_registry()
        assert len(reg.entries) == 20
        records = ensemble_predict(reg, frame_set(), exclude_views=["gauge"])
        assert len(records) == 12
        assert all(len(r.votes) == 16 for r in records)
        assert all(not mid.startswith("gauge") for r in records for mid, _, _ in r.votes)
        assert all(len(r.votes) == 20 for r in ensemble_predict(reg, frame_set()))

    def test_unanimous(self):
        items = []
        for i, view in enumerate(VIEW_IDS):
            net = Network(NetworkSpec.from_text(ARCH), seed=i)
            net.layers[-1].params["bias"][8] = 50.0
            items.append((f"m{i}", view, net, ARCH))
        records = ensemble_predict(ModelRegistry.from_models(items), frame_set())
        assert {(r.final_class, r.decision_rule) for r in records} == {(8, "majority")}

    def test_recount_oracle(self):
        records = ensemble_predict(tiny_registry(per_view=1, seed=5), frame_set(n=200, seed=2))
        for r in records:
            assert (r.final_class, r.decision_rule) == tally_vote([(c, p) for _, c, p in r.votes])
            assert r.final_class in {c for _, c, _ in r.votes}

    def test_coverage_error_lists_missing(self):
        frames = frame_set()
        del frames[(300, "gauge")]
        with pytest.raises(CoverageError) as exc:
            ensemble_predict(tiny_registry(), frames)
        assert exc.value.missing == [(300, "gauge")]
        # Excluding the view removes the requirement.
        ensemble_predict(tiny_registry(), frames, exclude_views=["gauge"])

    def test_include_models(self):
        reg = tiny_registry()
        records = ensemble_predict(reg, frame_set(), include=["gauge-m0", "pilot_ws-m1"])
        assert [m for m, _, _ in records[0].votes] == ["pilot_ws-m1", "gauge-m0"]
        with pytest.raises(InvalidConfigError):
            reg.select(include=["nope"])
        with pytest.raises(InvalidConfigError):
            reg.select(exclude_views=list(VIEW_IDS))

    def test_duplicate_ids(self):
        net = Network(NetworkSpec.from_text(ARCH))
        with pytest.raises(InvalidConfigError):
            ModelRegistry.from_models([("a", "gauge", net, ARCH), ("a", "pilot_ws", net, ARCH)])


class TestRegistryFiles:
    def test_round_trip(self, tmp_path):
        entries = []
        nets = {}
        for i, view in enumerate(["pilot_ws", "gauge"]):
            net = Network(NetworkSpec.from_text(ARCH), seed=i)
            path = tmp_path / "models" / f"m{i}.ckpt"
            path.parent.mkdir(exist_ok=True)
            checkpoint.save(net, path)
            entries.append(ModelEntry(f"m{i}", view, path, ARCH))
            nets[f"m{i}"] = net
        write_registry(tmp_path / "registry.csv", entries)
        assert (tmp_path / "registry.csv").read_text().splitlines()[1] == f"m0,pilot_ws,models/m0.ckpt,\"{ARCH}\""
        reg = load_registry(tmp_path / "registry.csv")
        assert reg.model_ids == ["m0", "m1"] and reg.views == ["pilot_ws", "gauge"]
        x = np.random.default_rng(0).random((3, 3, 8, 8)).astype(np.float32)
        for mid, net in nets.items():
            assert np.array_equal(reg.models[mid].forward(x), net.forward(x))

    def test_arch_mismatch(self, tmp_path):
        path = tmp_path / "m.ckpt"
        checkpoint.save(Network(NetworkSpec.from_text(ARCH)), path)
        write_registry(tmp_path / "registry.csv", [ModelEntry("m", "gauge", path, "tiny-cnn-a")])
        with pytest.raises(InvalidConfigError, match="architecture"):
            load_registry(tmp_path / "registry.csv")

    def test_missing_checkpoint(self, tmp_path):
        write_registry(tmp_path / "registry.csv", [ModelEntry("m", "gauge", tmp_path / "nope.ckpt", ARCH)])
        with pytest.raises(InvalidConfigError, match="nope.ckpt"):
            load_registry(tmp_path / "registry.csv")

    def test_votes_csv(self, tmp_path):
        records = ensemble_predict(tiny_registry(per_view=1), frame_set(n=5))
        write_votes_csv(tmp_path / "votes.csv", records)
        header = (tmp_path / "votes.csv").read_text().splitlines()[0]
        assert header == "timestamp_ms,final_class,decision_rule," + ",".join(f"pred_{v}-m0" for v in VIEW_IDS)
        ids, rows = read_votes_csv(tmp_path / "votes.csv")
        assert ids == [f"{v}-m0" for v in VIEW_IDS]
        for r, rec in zip(rows, records):
            assert r["final_class"] == rec.final_class and r["preds"] == [c for _, c, _ in rec.votes]
