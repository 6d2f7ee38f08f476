import threading

import pytest

from hhsvd.parallel import StageCounter, chunk_bounds, get_num_threads, num_threads, parallel_chunks, set_num_threads


@pytest.mark.parametrize("n,k", [(1, 1), (7, 3), (10, 4), (3, 8), (100, 7)])
def test_chunks_cover_range(n, k):
    bounds = chunk_bounds(n, k)
    assert bounds[0][0] == 0 and bounds[-1][1] == n
    assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))
    assert all(hi > lo for lo, hi in bounds)
    sizes = [hi - lo for lo, hi in bounds]
    assert max(sizes) - min(sizes) <= 1


def test_single_thread_runs_inline():
    with num_threads(1):
        assert parallel_chunks(lambda lo, hi: (threading.current_thread().name, lo, hi), 5) == [
            (threading.current_thread().name, 0, 5)]


def test_multi_thread_results_in_order():
    with num_threads(4):
        assert parallel_chunks(lambda lo, hi: list(range(lo, hi)), 10) == [[0, 1, 2], [3, 4, 5], [6, 7], [8, 9]]
    assert parallel_chunks(lambda lo, hi: None, 0) == []


def test_thread_setting():
    before = get_num_threads()
    with num_threads(0):
        assert get_num_threads() >= 1
    assert get_num_threads() == before
    with pytest.raises(ValueError):
        set_num_threads(-1)


def test_counter_merges_parallel_max():
    c = StageCounter()
    c.tick()
    c.merge_parallel([3, 5, 2])
    c.merge_parallel([])
    assert c.stages == 6
