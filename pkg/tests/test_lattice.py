import numpy as np
import pytest

from qc_chain.models.chain_model import NodalMesh, PeriodicChain, QCConfiguration
from qc_chain.models.errors import MeshError
from qc_chain.services.lattice import (build_mesh, reconstruct, representation_vector, restrict,
                                       uniform_config)


# ==================== build_mesh ====================

def test_mesh_without_local_nodes():
    mesh = build_mesh(100, 50, 2, 3)
    np.testing.assert_array_equal(mesh.nodes, np.arange(47, 55))
    assert mesh.n_nodes == 8
    assert mesh.dof == 7
    # 唯一的局部单元跨越周期
    local = ~mesh.element_is_nonlocal
    np.testing.assert_array_equal(mesh.element_lengths[local], [93])


def test_mesh_with_local_nodes():
    # 局部区域 54 → 147，目标 77.25, 100.5, 123.75
    mesh = build_mesh(100, 50, 2, 3, local_node_count=3)
    np.testing.assert_array_equal(mesh.nodes, [24] + list(range(47, 55)) + [77, 100])
    assert mesh.n_nodes == 11
    local = ~mesh.element_is_nonlocal
    np.testing.assert_array_equal(sorted(mesh.element_lengths[local]), [23, 23, 23, 24])
    assert mesh.element_lengths.sum() == 100


def test_midpoint_ties_round_down():
    # 局部区域 22 → 59，中点 40.5 取 40
    mesh = build_mesh(40, 20, 2, 1, local_node_count=1)
    np.testing.assert_array_equal(mesh.nodes, [19, 20, 21, 22, 40])


def test_nonlocal_region_consuming_period():
    with pytest.raises(MeshError):
        build_mesh(20, 10, 2, 8)


def test_interface_separation():
    # 局部单元长度 3 < n + 1
    with pytest.raises(MeshError, match="h ≥ n\\+1"):
        build_mesh(40, 20, 2, 3, local_node_count=10, neighbor_range=3)
    build_mesh(40, 20, 2, 3, local_node_count=10, neighbor_range=2)


def test_too_many_local_nodes():
    with pytest.raises(MeshError):
        build_mesh(40, 20, 2, 3, local_node_count=33)


def test_nodal_mesh_validation():
    with pytest.raises(MeshError):
        NodalMesh(10, [3, 2, 5], 2, 3)
    with pytest.raises(MeshError):
        NodalMesh(10, [2, 5, 8], 4, 5)


def test_full_mesh():
    mesh = NodalMesh.full(12)
    assert mesh.is_full
    assert not mesh.has_interface
    assert mesh.element_is_nonlocal.all()
    np.testing.assert_array_equal(mesh.element_lengths, np.ones(12))


# ==================== 重构 ====================

def _small_mesh():
    """N = 10，节点 {4, 5, 6, 7, 8, 10}，第 0 个单元为 (0, 4)"""
    return NodalMesh(10, [4, 5, 6, 7, 8, 10], 5, 7)


def test_reconstruct_linear_element():
    mesh = _small_mesh()
    positions = np.array([0.4, 0.5, 0.6, 0.7, 0.8, 1.0])
    chain = reconstruct(mesh, QCConfiguration.from_positions(mesh, positions))
    np.testing.assert_allclose(chain.positions[:3], [0.1, 0.2, 0.3], atol=1e-15)
    np.testing.assert_allclose(chain.positions, np.arange(1, 11) / 10, atol=1e-15)


def test_reconstruct_interpolates_displacements():
    mesh = _small_mesh()
    config = QCConfiguration(mesh, np.array([0.04, 0, 0, 0, 0.02, 0]))
    chain = reconstruct(mesh, config)
    np.testing.assert_allclose(chain.displacement[:3], [0.01, 0.02, 0.03], atol=1e-15)
    assert chain.displacement[8] == pytest.approx(0.01, abs=1e-15)


def test_reconstruct_uniform_strain():
    mesh = build_mesh(100, 50, 2, 3, local_node_count=3)
    chain = reconstruct(mesh, uniform_config(mesh, 1.02))
    np.testing.assert_allclose(chain.gaps(), 1.02 * mesh.epsilon, rtol=1e-14)
    assert chain.period == 1.02

    chain = reconstruct(mesh, uniform_config(mesh, 1.0))
    np.testing.assert_allclose(chain.positions, np.arange(1, 101) * mesh.epsilon, atol=1e-15)


def test_reconstruct_equal_gaps_inside_elements(multi_mesh, perturb):
    config = perturb(multi_mesh)
    gaps = reconstruct(multi_mesh, config).gaps()
    # 第 i 个键为 u_{i+1} - u_i，非节点原子两侧的键相等
    nodes = set(multi_mesh.nodes.tolist())
    for atom in range(2, 60):
        if atom not in nodes:
            assert abs(gaps[atom - 1] - gaps[atom - 2]) <= 1e-14


def test_uniform_config_gaps():
    mesh = build_mesh(100, 50, 2, 3, local_node_count=3)
    config = uniform_config(mesh, 1.0)
    np.testing.assert_allclose(config.element_gaps(), mesh.epsilon * mesh.element_lengths, rtol=1e-14)
    with pytest.raises(MeshError):
        uniform_config(mesh, 0.0)


def test_restrict_reconstruct_roundtrip(multi_mesh, perturb):
    config = perturb(multi_mesh)
    back = restrict(multi_mesh, reconstruct(multi_mesh, config))
    np.testing.assert_array_equal(back.displacement, config.displacement)
    with pytest.raises(MeshError):
        restrict(multi_mesh, PeriodicChain(np.zeros(40)))


def test_reconstruction_matrix_rows_sum_to_one(multi_mesh):
    matrix = multi_mesh.operator.matrix()
    assert matrix.shape == (60, multi_mesh.n_nodes)
    np.testing.assert_allclose(np.asarray(matrix.sum(axis=1)).ravel(), 1.0, atol=1e-15)


# ==================== 表示向量 ====================

def test_representation_of_nodal_atom():
    mesh = build_mesh(100, 50, 2, 3, local_node_count=3)
    rep = representation_vector(mesh, 47)
    assert rep.node_indices == (1,)
    assert rep.weights == (1.0,)
    assert rep.shifts == (0,)
    assert representation_vector(mesh, 147).shifts == (1,)


def test_representation_inside_first_element():
    mesh = _small_mesh()
    rep = representation_vector(mesh, 1)
    # 节点 (i_0 = 10 - N, 4)，权重 (0.75, 0.25)
    assert rep.node_indices == (5, 0)
    np.testing.assert_allclose(rep.weights, (0.75, 0.25), atol=1e-15)
    assert rep.shifts == (-1, 0)


def test_representation_beyond_last_node():
    mesh = build_mesh(100, 50, 2, 3)
    rep = representation_vector(mesh, 80)
    # 最后一个节点 54 与 47 + N 之间
    assert rep.node_indices == (7, 0)
    assert rep.shifts == (0, 1)
    np.testing.assert_allclose(rep.weights, (67 / 93, 26 / 93), rtol=1e-14)
    positions = uniform_config(mesh, 1.0).positions
    assert rep.evaluate(positions) == pytest.approx(0.80, abs=1e-14)
    assert representation_vector(mesh, -20).evaluate(positions) == pytest.approx(-0.20, abs=1e-14)


def test_representation_matches_reconstruction(multi_mesh, perturb):
    config = perturb(multi_mesh)
    chain = reconstruct(multi_mesh, config)
    positions = config.positions
    for atom in (-7, 1, 13, 20, 27, 55, 61, 75, 130):
        rep = representation_vector(multi_mesh, atom)
        assert rep.evaluate(positions) == pytest.approx(chain.position(atom), abs=1e-14)


# ==================== 构型 ====================

def test_inverted_configuration_detected():
    mesh = _small_mesh()
    config = QCConfiguration.from_positions(mesh, [0.4, 0.5, 0.45, 0.7, 0.8, 1.0])
    assert not config.is_monotone
    assert uniform_config(mesh, 1.0).is_monotone


def test_chain_from_positions_roundtrip():
    positions = np.sort(np.random.default_rng(1).uniform(0, 1, 16))
    chain = PeriodicChain.from_positions(positions)
    np.testing.assert_allclose(chain.positions, positions, atol=1e-15)
    assert chain.position(17) == pytest.approx(positions[0] + 1.0, abs=1e-15)
