import numpy as np
import pytest
from scipy.linalg import eigh

from qc_chain.models.chain_model import NodalMesh, PeriodicChain
from qc_chain.models.errors import SolverError
from qc_chain.models.solver_model import SolverConfig
from qc_chain.services.energy_models import CouplingModel, ModelKind, qcp_report
from qc_chain.services.lattice import reconstruct, restrict, uniform_config
from qc_chain.services.newton_solver import NewtonSolver, solve
from qc_chain.services.potential import TabulatedPotential
from qc_chain.services.study_runner import localized_force, w1inf_error

# 低于收敛阈值的舍入底
RESIDUAL_FLOOR = 1e-13


def _assert_quadratic_tail(history):
    """
    最后三个残差按 Newton 的二次收敛下降：r_{k+1} ≈ C·r_k² 时收缩因子 r_{k+1}/r_k = C·r_k
    随 r_k 一起缩小；落到舍入底的残差不再比较
    """
    assert len(history) >= 3
    r0, r1, r2 = history[-3:]
    assert r1 < r0
    if r2 > RESIDUAL_FLOOR:
        assert r2 < r1
        assert r2 / r1 < r1 / r0


def test_uniform_lattice_needs_no_iterations(multi_mesh, lj3):
    result = solve(ModelKind.QCP, multi_mesh, lj3, None, uniform_config(multi_mesh, 1.0))
    assert result.converged
    assert result.iterations == 0
    assert len(result.residual_history) == 1
    assert result.energy == pytest.approx(-1.03374746, abs=1e-8)


@pytest.mark.parametrize("kind", [ModelKind.QCP, ModelKind.QCPM, ModelKind.GCR_TABLE_I])
def test_returns_to_uniform_lattice(kind, multi_mesh, perturb, lj3):
    result = solve(kind, multi_mesh, lj3, None, perturb(multi_mesh))
    assert result.converged
    assert result.residual <= 1e-12
    # 无外力时平衡态为整体平移后的均匀晶格
    w = result.configuration.displacement
    assert np.max(w) - np.min(w) <= 1e-10
    _assert_quadratic_tail(result.residual_history)


def test_residual_history(multi_mesh, perturb, lj3):
    result = solve(ModelKind.QCP, multi_mesh, lj3, None, perturb(multi_mesh, amplitude=0.05))
    history = result.residual_history
    assert result.converged
    assert len(history) == result.iterations + 1
    assert history[-1] <= 1e-12 < history[0]
    assert result.iterations <= 10
    _assert_quadratic_tail(history)


def test_atomistic_with_localized_force(lj3):
    mesh = NodalMesh.full(200)
    result = solve(ModelKind.ATOMISTIC, mesh, lj3, localized_force(200),
                   uniform_config(mesh, 1.0))
    assert result.converged
    assert result.residual <= 1e-12
    assert result.iterations <= 20
    assert result.configuration.is_monotone


def test_gauge_node_does_not_change_solution(multi_mesh, lj3):
    force = localized_force(60)
    initial = uniform_config(multi_mesh, 1.0)
    model = CouplingModel(ModelKind.QCP, multi_mesh, lj3)
    first = NewtonSolver(SolverConfig(gauge_node=0)).solve(model, force, initial)
    other = NewtonSolver(SolverConfig(gauge_node=5)).solve(model, force, initial)
    assert first.converged and other.converged
    error = w1inf_error(reconstruct(multi_mesh, first.configuration), reconstruct(multi_mesh, other.configuration))
    assert error <= 1e-10


def test_equilibrium_hessian_positive_semidefinite(multi_mesh, lj3):
    result = solve(ModelKind.QCP, multi_mesh, lj3, localized_force(60), uniform_config(multi_mesh, 1.0))
    hessian = result.report.hessian.toarray()
    eigenvalues = eigh(hessian, eigvals_only=True)
    scale = np.max(np.abs(eigenvalues))
    assert eigenvalues[0] >= -1e-10 * scale
    # 平移零模之外严格正定
    assert eigenvalues[1] > 1e-6 * scale


def test_hessian_positive_semidefinite_at_restricted_atomistic_equilibrium(multi_mesh, lj3):
    full = NodalMesh.full(60)
    atomistic = solve(ModelKind.ATOMISTIC, full, lj3, localized_force(60), uniform_config(full, 1.0))
    assert atomistic.converged
    atom_eigenvalues = eigh(atomistic.report.hessian.toarray(), eigvals_only=True)
    assert atom_eigenvalues[1] > 0.0

    chain = PeriodicChain(atomistic.configuration.displacement, atomistic.configuration.period)
    restricted = restrict(multi_mesh, chain)
    # 固定节点 0 消去平移零模
    hessian = qcp_report(multi_mesh, restricted, lj3).hessian.toarray()[1:, 1:]
    eigenvalues = eigh(hessian, eigvals_only=True)
    scale = np.max(np.abs(eigenvalues))
    assert eigenvalues[0] >= -1e-10 * scale


def test_iteration_limit(multi_mesh, perturb, lj3):
    model = CouplingModel(ModelKind.QCP, multi_mesh, lj3)
    result = NewtonSolver(SolverConfig(max_iterations=1)).solve(model, None, perturb(multi_mesh))
    assert not result.converged
    assert result.iterations == 1
    assert len(result.residual_history) == 2
    assert result.residual > 1e-12


def test_gauge_node_out_of_range(multi_mesh, lj3):
    model = CouplingModel(ModelKind.QCP, multi_mesh, lj3)
    with pytest.raises(SolverError):
        NewtonSolver(SolverConfig(gauge_node=multi_mesh.n_nodes)).solve(
            model, None, uniform_config(multi_mesh, 1.0))


@pytest.mark.filterwarnings("ignore::scipy.sparse.linalg.MatrixRankWarning")
def test_singular_hessian_raises(multi_mesh):
    flat = TabulatedPotential(np.linspace(0.5, 4.0, 8), np.zeros(8), 3.25)
    model = CouplingModel(ModelKind.QCP, multi_mesh, flat)
    with pytest.raises(SolverError) as info:
        NewtonSolver().solve(model, localized_force(60), uniform_config(multi_mesh, 1.0))
    assert info.value.iteration == 0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(residual_tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    for damping in (0.0, 1.5):
        with pytest.raises(ValueError):
            SolverConfig(damping=damping)
    # damping = 1 表示不回溯
    assert SolverConfig(damping=1.0).damping == 1.0
