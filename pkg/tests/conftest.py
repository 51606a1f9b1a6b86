import numpy as np
import pytest

from adcsd.series import SeriesTensor


def tensor(values, mask=None, dtype=np.float64) -> SeriesTensor:
    """Shape anything array-like into a (N, T, C) SeriesTensor for tests."""
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[None, :, None]
    elif arr.ndim == 2:
        arr = arr[:, :, None]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(arr.shape)
    return SeriesTensor.of(arr, mask=mask)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
