import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attitude_ensemble.align import (
    AlignmentConfig,
    FdrLog,
    align,
    parse_fdr_csv,
    parse_frame_manifest,
    write_alignment,
    write_fdr_csv,
    write_frame_manifest,
)
from attitude_ensemble.attitude import BinningConfig
from attitude_ensemble.errors import InvalidConfigError, InvalidInputError, ParseError
from cases import fdr_from, frames_at, random_alignment_case
from oracles import brute_force_class, nearest_oracle


class TestAlignExamples:
    def test_nearest(self):
        r = align(frames_at([1000]), fdr_from([990, 1040]))
        assert r.labeled[0].matched_fdr_ts == 990

    def test_tie_goes_earlier(self):
        r = align(frames_at([1000]), fdr_from([990, 1010]))
        assert r.labeled[0].matched_fdr_ts == 990

    def test_tolerance_skip(self):
        r = align(frames_at([5000]), fdr_from([4800]), AlignmentConfig(100))
        assert r.labeled == [] and r.skipped[0].nearest_delta_ms == 200

    def test_boundary_is_inside(self):
        r = align(frames_at([1100]), fdr_from([1000]), AlignmentConfig(100))
        assert len(r.labeled) == 1

    def test_label_from_matched_sample(self):
        r = align(frames_at([0, 210]), fdr_from([0, 200], [5.0, -4.0], [0.0, 7.0]))
        assert [x.class_id for x in r.labeled] == [0, 6]

    def test_empty_fdr(self):
        with pytest.raises(InvalidInputError):
            align(frames_at([0]), FdrLog(()))

    @pytest.mark.parametrize("tol", [0, -5])
    def test_bad_tolerance(self, tol):
        with pytest.raises(InvalidConfigError):
            AlignmentConfig(tol)

    def test_frames_before_and_after_log(self):
        r = align(frames_at([-50, 10_000]), fdr_from([0, 100]), AlignmentConfig(math.inf))
        assert [x.matched_fdr_ts for x in r.labeled] == [0, 100]


class TestAlignOracle:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force(self, seed):
        fdr, frames = random_alignment_case(seed)
        tol = 40
        r = align(frames, fdr, AlignmentConfig(tol), BinningConfig(3.0))
        fdr_ts = [s.timestamp_ms for s in fdr.samples]
        expected = nearest_oracle([f.timestamp_ms for f in frames], fdr_ts, tol)
        labeled = {x.frame.frame_path: x for x in r.labeled}
        skipped = {x.frame.frame_path: x for x in r.skipped}
        assert len(labeled) + len(skipped) == len(frames)
        assert skipped and labeled
        for f, (i, d) in zip(frames, expected):
            if i is None:
                assert skipped[f.frame_path].nearest_delta_ms == d
            else:
                s = fdr.samples[i]
                got = labeled[f.frame_path]
                assert got.matched_fdr_ts == s.timestamp_ms
                assert got.class_id == brute_force_class(s.pitch_deg, s.roll_deg, 3.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.integers(0, 2000), min_size=1, max_size=30, unique=True),
        st.lists(st.integers(-100, 2100), min_size=0, max_size=30),
        st.integers(1, 300),
    )
    def test_random_small(self, fdr_ts, frame_ts, tol):
        fdr_ts = sorted(fdr_ts)
        r = align(frames_at(frame_ts), fdr_from(fdr_ts), AlignmentConfig(tol))
        expected = nearest_oracle(frame_ts, fdr_ts, tol)
        assert [x.matched_fdr_ts for x in r.labeled] == [fdr_ts[i] for i, _ in expected if i is not None]
        assert [x.nearest_delta_ms for x in r.skipped] == [d for i, d in expected if i is None]


class TestAlignProperties:
    def test_permutation_invariant(self):
        fdr, frames = random_alignment_case(5, 300)
        a = align(frames, fdr)
        perm = np.random.default_rng(0).permutation(len(frames))
        b = align([frames[i] for i in perm], fdr)
        assert set(a.labeled) == set(b.labeled)
        assert set(a.skipped) == set(b.skipped)

    def test_infinite_tolerance_never_skips(self):
        fdr, frames = random_alignment_case(6, 300)
        r = align(frames, fdr, AlignmentConfig(math.inf))
        assert r.skipped == [] and len(r.labeled) == 300

    def test_idempotent(self):
        fdr, frames = random_alignment_case(7, 300)
        first = align(frames, fdr)
        again = align([x.frame for x in first.labeled], fdr)
        assert again.labeled == first.labeled and again.skipped == []


class TestFdrCsv:
    def write(self, tmp_path, lines):
        p = tmp_path / "fdr.csv"
        p.write_text("\n".join(lines) + "\n")
        return p

    def test_three_rows(self, tmp_path):
        p = self.write(tmp_path, ["timestamp_ms,pitch_deg,roll_deg", "0,1.5,-2", "100,0,0", "200,-3.25,4"])
        fdr = parse_fdr_csv(p)
        assert len(fdr) == 3 and fdr.samples[2].pitch_deg == -3.25

    def test_duplicate_on_line_5(self, tmp_path):
        p = self.write(tmp_path, ["timestamp_ms,pitch_deg,roll_deg", "0,0,0", "100,0,0", "200,0,0", "200,0,0"])
        with pytest.raises(ParseError) as exc:
            parse_fdr_csv(p)
        assert exc.value.line == 5 and ":5:" in str(exc.value)

    def test_decreasing(self, tmp_path):
        p = self.write(tmp_path, ["timestamp_ms,pitch_deg,roll_deg", "100,0,0", "50,0,0"])
        with pytest.raises(ParseError, match="line 3|:3:"):
            parse_fdr_csv(p)

    @pytest.mark.parametrize(
        "lines, line",
        [
            (["ts,pitch,roll", "0,0,0"], 1),
            ([], 1),
            (["timestamp_ms,pitch_deg,roll_deg", "0,abc,0"], 2),
            (["timestamp_ms,pitch_deg,roll_deg", "0,0,0", "x,0,0"], 3),
            (["timestamp_ms,pitch_deg,roll_deg", "0,0"], 2),
            (["timestamp_ms,pitch_deg,roll_deg", "0,0,nan"], 2),
        ],
    )
    def test_errors_cite_line(self, tmp_path, lines, line):
        p = tmp_path / "fdr.csv"
        p.write_text("\n".join(lines) + ("\n" if lines else ""))
        with pytest.raises(ParseError) as exc:
            parse_fdr_csv(p)
        assert exc.value.line == line

    def test_round_trip_10k(self, tmp_path):
        rng = np.random.default_rng(3)
        ts = np.cumsum(rng.integers(1, 200, 10_000))
        fdr = fdr_from(ts, rng.uniform(-90, 90, ts.size), rng.uniform(-180, 180, ts.size))
        write_fdr_csv(tmp_path / "fdr.csv", fdr)
        assert parse_fdr_csv(tmp_path / "fdr.csv") == fdr


class TestManifestIO:
    def test_round_trip_and_outputs(self, tmp_path):
        frames = frames_at([300, 0, 5000])
        write_frame_manifest(tmp_path / "m.csv", frames)
        assert parse_frame_manifest(tmp_path / "m.csv") == frames
        r = align(frames, fdr_from([0, 300], [5.0, 0.0], [0.0, 0.0]))
        write_alignment(r, tmp_path / "lab.csv", tmp_path / "skip.csv")
        lab = (tmp_path / "lab.csv").read_text().splitlines()
        assert lab[0] == "frame_path,view,timestamp_ms,pitch_deg,roll_deg,class_id,matched_fdr_ts"
        assert lab[1:] == ["f0.ppm,pilot_ws,300,0,0,8,300", "f1.ppm,pilot_ws,0,5,0,0,0"]
        assert (tmp_path / "skip.csv").read_text().splitlines() == ["frame_path,nearest_delta_ms", "f2.ppm,4700"]

    def test_empty_frame_path(self, tmp_path):
        (tmp_path / "m.csv").write_text("frame_path,view,timestamp_ms\n,pilot_ws,0\n")
        with pytest.raises(ParseError):
            parse_frame_manifest(tmp_path / "m.csv")
