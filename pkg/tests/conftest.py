import numpy as np
import pytest

from hegwas import CkksParams, HeEngine, keygen

# Small rings keep unit tests quick; the modulus still carries full-depth runs.
UNIT = CkksParams(log_n=8, log_l=350, log_p=45, log_p_small=30, h=16)
DEEP = CkksParams(log_n=8, log_l=1900, log_p=45, log_p_small=30, h=16)
GWAS_UNIT = CkksParams(log_n=9, log_l=1900, log_p=45, log_p_small=30, h=16)


class KeyedContext:
    def __init__(self, params, seed=7):
        self.params = params
        self.sk, self.pk, self.evk, self.rot = keygen(params, seed)
        self.engine = HeEngine(params, self.evk, self.rot)


@pytest.fixture(scope="session")
def unit_ctx():
    return KeyedContext(UNIT)


@pytest.fixture(scope="session")
def deep_ctx():
    return KeyedContext(DEEP)


@pytest.fixture(scope="session")
def gwas_ctx():
    return KeyedContext(GWAS_UNIT)


@pytest.fixture
def rng():
    import random

    return random.Random(12345)


def max_err(got, want) -> float:
    return float(np.max(np.abs(np.asarray(got) - np.asarray(want))))
