import json
import os

import numpy as np
import pytest

from ranking_opt import bundle
from ranking_opt.bundle import (
    LOCK_FILE,
    AtomicFile,
    BundleLock,
    ResultBundle,
    dumps,
    dumps_line,
)
from ranking_opt.common import OutputLockedError
from ranking_opt.testing import BaseTestClass


class TestAtomicFile(BaseTestClass):
    def test_temp_file_removed_on_error(self):
        filename = self.TEST_DIR / "summary.json"
        with pytest.raises(IOError, match="I made this up"):
            with AtomicFile(filename) as handle:
                raise IOError("I made this up")
        assert not os.path.exists(handle.name)
        assert not os.path.exists(filename)

    def test_replaces_existing(self):
        filename = self.TEST_DIR / "scores.txt"
        filename.write_text("old\n")
        with AtomicFile(filename) as handle:
            handle.write("new\n")
            assert filename.read_text() == "old\n"
        assert filename.read_text() == "new\n"
        assert os.listdir(self.TEST_DIR) == ["scores.txt"]


class TestBundleLock(BaseTestClass):
    def test_locking(self):
        with BundleLock(self.TEST_DIR):
            assert (self.TEST_DIR / LOCK_FILE).exists()
            with pytest.raises(OutputLockedError, match="locked by another job"):
                with BundleLock(self.TEST_DIR, timeout=0.1):
                    pass

    def test_bundle_waits_for_lock(self):
        out = self.TEST_DIR / "out"
        result = ResultBundle(out)
        result.lock.timeout = 0.1
        with BundleLock(out):
            with pytest.raises(OutputLockedError):
                with result:
                    pass


class TestDumps:
    def test_stable_rendering(self):
        document = {"b": np.float64(0.1), "a": (1, 2), "c": np.array([0.5, 1.0])}
        assert dumps(document) == dumps(dict(reversed(list(document.items()))))
        assert json.loads(dumps(document)) == {"a": [1, 2], "b": 0.1, "c": [0.5, 1.0]}
        assert dumps(document).endswith("}\n")

    def test_floats_round_trip(self):
        value = 1.0 / 3.0
        assert json.loads(dumps({"x": value}))["x"] == value

    def test_numpy_scalars(self):
        assert json.loads(dumps({"n": np.int64(3), "ok": np.bool_(True)})) == {"n": 3, "ok": True}
        assert json.loads(dumps({1: "one"})) == {"1": "one"}

    def test_dumps_line(self):
        line = dumps_line({"b": 1, "a": [1.5]})
        assert line == '{"a": [1.5], "b": 1}\n'


class TestResultBundle(BaseTestClass):
    def test_writes(self):
        out = self.TEST_DIR / "nested" / "out"
        with ResultBundle(out) as result:
            result.write_vector(bundle.SCORES_FILE, np.array([0.25, 0.75]))
            result.write_lines(bundle.TRAJECTORY_FILE, [{"iteration": 0}, {"iteration": 1}])
            result.write_summary({"value": 1.5})
            result.write_timings({"total": 0.1})
        assert (out / "scores.txt").read_text() == "0.25\n0.75\n"
        assert (out / "trajectory.jsonl").read_text().splitlines() == [
            '{"iteration": 0}',
            '{"iteration": 1}',
        ]
        assert json.loads((out / "summary.json").read_text()) == {"value": 1.5}
        assert set(result.written) == {
            "scores.txt",
            "trajectory.jsonl",
            "summary.json",
            "timings.json",
        }
        assert not result.lock.is_locked

    def test_releases_lock_on_error(self):
        result = ResultBundle(self.TEST_DIR)
        with pytest.raises(ValueError):
            with result:
                result.write_text("a.txt", "a\n")
                raise ValueError("boom")
        assert not result.lock.is_locked
        assert (self.TEST_DIR / "a.txt").read_text() == "a\n"
