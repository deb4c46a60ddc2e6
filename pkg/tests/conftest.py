import numpy as np
import pytest

from proxanneal import cube, ball, chain_stream


@pytest.fixture
def box2():
    return cube(2, 2.0)


@pytest.fixture
def box1():
    return cube(1, 2.0)


@pytest.fixture
def ball3():
    return ball(3, 1.0)


@pytest.fixture
def rng():
    return chain_stream(20240901, 0)


def fresh_rng(chain_id: int = 0, seed: int = 20240901) -> np.random.Generator:
    return chain_stream(seed, chain_id)
