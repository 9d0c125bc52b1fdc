import time

import numpy as np
import pytest

from disorder_lab.utils.parallel import map_streams, run_tasks, split_streams
from disorder_lab.utils.seeding import Seed, generator, task_master
from disorder_lab.utils.task_cache import TaskCache, stable_hash


def test_generator_is_keyed_by_master_and_stream():
    a = generator(Seed(1, 0)).standard_normal(8)
    assert np.array_equal(a, generator(Seed(1, 0)).standard_normal(8))
    assert not np.array_equal(a, generator(Seed(1, 1)).standard_normal(8))
    assert not np.array_equal(a, generator(Seed(2, 0)).standard_normal(8))


def test_blocks_are_addressable_directly():
    seed = Seed(7, 3)
    b0 = generator(seed, 0).standard_normal(4)
    b5 = generator(seed, 5).standard_normal(4)
    assert not np.array_equal(b0, b5)
    assert np.array_equal(b5, generator(seed, 5).standard_normal(4))


def test_child_keeps_master():
    assert Seed(9, 1).child(4) == Seed(9, 4)


def test_task_master_is_stable_and_label_sensitive():
    assert task_master(0, "N=64") == task_master(0, "N=64")
    assert task_master(0, "N=64") != task_master(0, "N=128")
    assert task_master(0, "N=64") != task_master(1, "N=64")
    assert 0 <= task_master(123, "x") < 2 ** 64


def test_run_tasks_orders_results_by_task():
    def slow_square(x):
        time.sleep(0.001 * (5 - x))
        return x * x

    assert run_tasks(slow_square, list(range(5)), threads=4, progress=False) == [0, 1, 4, 9, 16]
    assert run_tasks(slow_square, [], threads=4, progress=False) == []


def test_split_streams():
    pieces = split_streams(range(10, 20), 4)
    assert pieces == [range(10, 14), range(14, 18), range(18, 20)]
    assert split_streams(range(0), 4) == []


def test_map_streams_is_thread_independent():
    def draw(streams):
        return np.array([generator(Seed(3, s)).standard_normal() for s in streams])

    one = map_streams(draw, range(50), threads=1, chunk=8)
    many = map_streams(draw, range(50), threads=4, chunk=8)
    assert one.shape == (50,)
    assert np.array_equal(one, many)
    assert map_streams(draw, range(0)).size == 0


def test_stable_hash_ignores_key_order():
    assert stable_hash({"a": 1, "b": [2, 3]}) == stable_hash({"b": [2, 3], "a": 1})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})
    assert len(stable_hash("x")) == 16


def test_task_cache_round_trip(tmp_path):
    cache = TaskCache(tmp_path, "marginal-scan")
    rows = [{"N": 64, "log_Z_mean": -0.25, "kurtosis": None}]
    cache.save("N=64|beta_hat=0.5", "sig1", rows)
    assert cache.load("N=64|beta_hat=0.5", "sig1") == rows
    assert list((tmp_path / "marginal-scan").glob("*.json"))


def test_task_cache_rejects_other_signatures(tmp_path):
    cache = TaskCache(tmp_path, "exp")
    cache.save("task", "sig1", [{"x": 1}])
    assert cache.load("task", "sig2") is None
    assert cache.load("missing", "sig1") is None


def test_task_cache_ignores_corrupt_entries(tmp_path):
    cache = TaskCache(tmp_path, "exp")
    cache.save("task", "sig", [{"x": 1}])
    next((tmp_path / "exp").glob("*.json")).write_text("{not json")
    assert cache.load("task", "sig") is None


def test_disabled_cache_is_a_no_op():
    cache = TaskCache(None, "exp")
    assert not cache.enabled
    cache.save("task", "sig", [{"x": 1}])
    assert cache.load("task", "sig") is None


@pytest.mark.parametrize("label", ["a/b", "N=64|h=-0.1", "x y"])
def test_cache_labels_become_safe_file_names(tmp_path, label):
    cache = TaskCache(tmp_path, "exp")
    cache.save(label, "sig", [])
    assert cache.load(label, "sig") == []
    assert all(p.parent == tmp_path / "exp" for p in (tmp_path / "exp").iterdir())
