import numpy as np
import pytest

from qc_chain.services.lattice import build_mesh, uniform_config
from qc_chain.services.potential import LennardJones


@pytest.fixture
def lj3():
    return LennardJones(3.25)


@pytest.fixture
def lj2():
    return LennardJones(2.25)


@pytest.fixture
def lj1():
    return LennardJones(1.5)


@pytest.fixture
def single_mesh():
    """N = 60，非局部区域 [27, 34]，单个局部单元"""
    return build_mesh(60, 30, 2, 3, 0, neighbor_range=3)


@pytest.fixture
def multi_mesh():
    """N = 60，非局部区域 [27, 34]，局部节点 {14, 47, 60}"""
    return build_mesh(60, 30, 2, 3, 3, neighbor_range=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def perturb(rng):
    """均匀构型加上幅度 amplitude·ε 的随机节点位移"""

    def _perturb(mesh, amplitude=0.1, z=1.0):
        config = uniform_config(mesh, z)
        noise = rng.uniform(-amplitude, amplitude, mesh.n_nodes) * mesh.epsilon
        return config.with_displacement(noise)

    return _perturb
