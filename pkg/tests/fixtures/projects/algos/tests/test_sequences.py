from algos.sequences import (chunk, first_duplicate, flatten, is_valid_parenthesization, lcs_length,
                             levenshtein, lis, powerset, rotate, rpn_eval)


def test_flatten():
    assert list(flatten([[1, [], [2, 3]], [[4]], 5])) == [1, 2, 3, 4, 5]
    assert list(flatten([])) == []


def test_powerset():
    assert powerset(["a", "b"]) == [[], ["b"], ["a"], ["a", "b"]]
    assert powerset([]) == [[]]
    assert len(powerset([1, 2, 3])) == 8


def test_is_valid_parenthesization():
    assert is_valid_parenthesization("((()()))()")
    assert not is_valid_parenthesization(")()(")
    assert not is_valid_parenthesization("((")
    assert is_valid_parenthesization("")


def test_lis():
    assert lis([4, 1, 5, 3, 7, 6, 2]) == 3
    assert lis([10, 22, 9, 33, 21, 50, 41, 60, 80]) == 6
    assert lis([]) == 0
    assert lis([7, 4, 3]) == 1


def test_lcs_length():
    assert lcs_length("witch", "sandwich") == 4
    assert lcs_length("meow", "homeowner") == 4
    assert lcs_length("", "abc") == 0
    assert lcs_length("abc", "xyz") == 0


def test_levenshtein():
    assert levenshtein("electron", "neutron") == 3
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3
    assert levenshtein("abc", "abc") == 0


def test_chunk():
    assert chunk([1, 2, 3, 4, 5], 2) == [[1, 2], [3, 4], [5]]
    assert chunk([], 3) == []


def test_rotate():
    assert rotate([1, 2, 3, 4, 5], 2) == [4, 5, 1, 2, 3]
    assert rotate([1, 2, 3], 3) == [1, 2, 3]
    assert rotate([], 4) == []


def test_first_duplicate():
    assert first_duplicate([1, 2, 3, 2, 1]) == 2
    assert first_duplicate([1, 2, 3]) is None


def test_rpn_eval():
    assert rpn_eval([3.0, 5.0, "+", 2.0, "/"]) == 4.0
    assert rpn_eval([2.0, 2.0, "+"]) == 4.0
    assert rpn_eval([7.0, 4.0, "+", 3.0, "-"]) == 8.0
    assert rpn_eval([6.0, 3.0, "/"]) == 2.0
