from algos.search import (binary_search, bucketsort, find_first_in_sorted, index_of_max, kth,
                          max_sublist_sum, merge, mergesort, quicksort)


def test_find_first_in_sorted():
    assert find_first_in_sorted([3, 4, 5, 5, 5, 5, 6], 5) == 2
    assert find_first_in_sorted([3, 4, 5, 5, 5, 5, 6], 7) == -1
    assert find_first_in_sorted([3, 4, 5, 5, 5, 5, 6], 2) == -1
    assert find_first_in_sorted([3, 6, 7, 9, 9, 10, 14, 27], 14) == 6
    assert find_first_in_sorted([0, 1, 6, 8, 13, 14, 67, 128], 80) == -1
    assert find_first_in_sorted([1, 1, 1], 1) == 0


def test_binary_search():
    arr = [1, 3, 5, 7, 9, 11]
    for i, x in enumerate(arr):
        assert binary_search(arr, x) == i
    assert binary_search(arr, 4) is None
    assert binary_search(arr, 12) is None
    assert binary_search([], 1) is None


def test_bucketsort():
    assert bucketsort([3, 1, 2, 1, 0], 4) == [0, 1, 1, 2, 3]
    assert bucketsort([], 3) == []
    assert bucketsort([2, 2, 2], 3) == [2, 2, 2]


def test_merge():
    assert merge([1, 4, 6], [2, 3, 7]) == [1, 2, 3, 4, 6, 7]
    assert merge([], [1]) == [1]
    assert merge([5], []) == [5]


def test_mergesort():
    assert mergesort([5, 2, 9, 1, 5, 6]) == [1, 2, 5, 5, 6, 9]
    assert mergesort([]) == []
    assert mergesort([1]) == [1]


def test_quicksort():
    assert quicksort([5, 2, 9, 1, 5, 6]) == [1, 2, 5, 5, 6, 9]
    assert quicksort([3, 3, 3]) == [3, 3, 3]
    assert quicksort([]) == []


def test_kth():
    assert kth([1, 2, 3, 4, 5, 6, 7], 4) == 5
    assert kth([3, 6, 7, 1, 6, 3, 8, 9], 5) == 7
    assert kth([3, 6, 7, 1, 6, 3, 8, 9], 2) == 3
    assert kth([2, 6, 8, 3, 5, 7], 0) == 2


def test_max_sublist_sum():
    assert max_sublist_sum([4, -5, 2, 1, -1, 3]) == 5
    assert max_sublist_sum([-1, -2]) == 0
    assert max_sublist_sum([1, 2, 3]) == 6


def test_index_of_max():
    assert index_of_max([3, 9, 2, 9]) == (1, 9)
    assert index_of_max([]) == (-1, None)
    assert index_of_max([-5, -2, -7]) == (1, -2)
