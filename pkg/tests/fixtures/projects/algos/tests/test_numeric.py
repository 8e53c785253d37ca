from algos.numeric import (bitcount, clamp, divmod_pair, gcd, get_factors, pascal, sieve,
                           sqrt_newton, to_base)


def test_gcd():
    assert gcd(35, 21) == 7
    assert gcd(17, 0) == 17
    assert gcd(13, 17) == 1
    assert gcd(48, 180) == 12


def test_bitcount():
    assert bitcount(127) == 7
    assert bitcount(128) == 1
    assert bitcount(0) == 0
    assert bitcount(255) == 8


def test_get_factors():
    assert get_factors(1) == []
    assert get_factors(100) == [2, 2, 5, 5]
    assert get_factors(101) == [101]
    assert get_factors(12) == [2, 2, 3]


def test_sieve():
    assert sieve(1) == []
    assert sieve(2) == [2]
    assert sieve(30) == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]


def test_to_base():
    assert to_base(31, 16) == "1F"
    assert to_base(8227, 18) == "1771"
    assert to_base(5, 2) == "101"


def test_sqrt_newton():
    assert abs(sqrt_newton(2, 0.01) - 1.4142) < 0.01
    assert abs(sqrt_newton(16, 0.001) - 4.0) < 0.001


def test_divmod_pair():
    assert divmod_pair(17, 5) == (3, 2)
    assert divmod_pair(20, 4) == (5, 0)
    assert divmod_pair(3, 7) == (0, 3)


def test_clamp():
    assert clamp(5, 0, 10) == 5
    assert clamp(-3, 0, 10) == 0
    assert clamp(12, 0, 10) == 10
    assert clamp(0, 0, 10) == 0
    assert clamp(10, 0, 10) == 10


def test_pascal():
    assert pascal(1) == [[1]]
    assert pascal(5) == [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1], [1, 4, 6, 4, 1]]
