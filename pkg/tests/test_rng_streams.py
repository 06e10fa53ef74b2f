"""
Test counter-based random streams
"""

import numpy as np
import pytest

from rng_streams import complex_normal, stream


def test_same_key_same_numbers():
    a = stream(42, 3, 17).standard_normal(8)
    b = stream(42, 3, 17).standard_normal(8)
    assert np.array_equal(a, b)


def test_keys_separate_streams():
    base = stream(42, 3, 17).standard_normal(8)
    for other in (stream(43, 3, 17), stream(42, 4, 17), stream(42, 3, 18)):
        assert not np.array_equal(base, other.standard_normal(8))


def test_negative_keys_rejected():
    with pytest.raises(ValueError):
        stream(-1)
    with pytest.raises(ValueError):
        stream(0, 0, -5)


def test_complex_normal_unit_variance():
    xi = complex_normal(stream(0), 200_000)
    assert xi.shape == (200_000,)
    assert abs(np.mean(np.abs(xi) ** 2) - 1.0) < 0.02
    assert abs(np.mean(xi.real * xi.imag)) < 0.01


if __name__ == "__main__":
    test_same_key_same_numbers()
    test_keys_separate_streams()
    test_complex_normal_unit_variance()
    print("rng stream tests passed")
