import numpy as np
import pytest

from bisparc.config import RngStream, SystemConfig, validate
from bisparc.dictionary import Dictionary


def orthonormal_dictionary(T: int, N: int, rng: RngStream) -> Dictionary:
    """``T x N`` dictionary with orthonormal columns (needs ``N <= T``)."""
    q, _ = np.linalg.qr(rng.complex_normal((T, N)))
    return Dictionary.from_matrix(q)


def small_config(**kw) -> SystemConfig:
    base = dict(K_active=1, M=2, T=8, L=2, Q=2, B=1, n_out=2, sigma2=0.1)
    base.update(kw)
    return validate(SystemConfig(**base))


@pytest.fixture
def rng():
    return RngStream(1234, 0)
