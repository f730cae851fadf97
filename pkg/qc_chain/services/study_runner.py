import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from ..models.chain_model import NodalMesh, PeriodicChain
from ..models.errors import MeshError, QCError, SolverError
from ..models.report_model import ExternalForce
from ..models.solver_model import SolverConfig
from ..models.study_model import ExperimentParams, StudyRow, StudyTable
from .energy_models import CouplingModel, ModelKind
from .lattice import build_mesh, reconstruct, uniform_config
from .newton_solver import NewtonSolver
from .potential import PairPotential, build_potential

logger = logging.getLogger(__name__)


# ==================== 外力与网格 ====================

def localized_force(n_atoms: int) -> ExternalForce:
    """测试 1：f_{N/2} = -1，f_{N/2+1} = +1"""
    f = np.zeros(n_atoms)
    f[n_atoms // 2 - 1] = -1.0
    f[n_atoms // 2] = 1.0
    return ExternalForce(f)


def bulk_force(n_atoms: int) -> ExternalForce:
    """测试 2：集中力 ±10 加上光滑项 (1/N) sin(1 + 2πi/N)，去均值"""
    i = np.arange(1, n_atoms + 1)
    f = np.sin(1.0 + 2.0 * np.pi * i / n_atoms) / n_atoms
    f[n_atoms // 2 - 1] += 10.0
    f[n_atoms // 2] -= 10.0
    return ExternalForce(f, project=True)


def _check_width(m: int, n: int):
    if m % 2:
        raise MeshError(f"m must be even，当前 m = {m}")
    if m < 2 * n + 2:
        raise MeshError(f"非局部宽度 m = {m} 小于 2n+2 = {2 * n + 2}")


def localized_mesh(n_atoms: int, m: int, n: int) -> NodalMesh:
    """非局部区域 [N/2 - m/2 + 1, N/2 + m/2]，局部区域为单个单元"""
    _check_width(m, n)
    return build_mesh(n_atoms, n_atoms // 2, 2, m // 2 - 1, 0, neighbor_range=n)


def bulk_mesh(n_atoms: int, m: int, dof: int, n: int) -> NodalMesh:
    """非局部区域同测试 1，其余 dof + 1 - m 个节点等距放在局部区域"""
    _check_width(m, n)
    local_nodes = dof + 1 - m
    if local_nodes < 1:
        raise MeshError(f"自由度 {dof} 不足以容纳宽度 {m} 的非局部区域")
    return build_mesh(n_atoms, n_atoms // 2, 2, m // 2 - 1, local_nodes, neighbor_range=n)


# ==================== 误差 ====================

def w1inf_error(u_num: PeriodicChain, u_ref: PeriodicChain) -> float:
    """max_i |(u_num - u_ref)_{i+1} - (u_num - u_ref)_i| / ε，对整体平移不变"""
    if u_num.n_atoms != u_ref.n_atoms:
        raise ValueError(f"原子数不一致: {u_num.n_atoms} vs {u_ref.n_atoms}")
    diff = u_num.displacement - u_ref.displacement
    gap_diff = (u_num.period - u_ref.period) * u_num.epsilon + (np.roll(diff, -1) - diff)
    return float(np.max(np.abs(gap_diff)) / u_num.epsilon)


def fit_convergence(table: StudyTable, model: str, mode: str = "exponential_in_m") -> Tuple[float, float]:
    """
    最小二乘拟合 log(error)

    :param mode: exponential_in_m 对 m 拟合；power_in_dof 对 log(dof) 拟合
    :return: (斜率, 残差均方根)
    """
    rows = [r for r in table.filter(model) if math.isfinite(r.error) and r.error > 0]
    if len(rows) < 3:
        raise ValueError(f"模型 {model} 的有效数据点不足 3 个")
    if mode == "exponential_in_m":
        x = np.array([r.m for r in rows], dtype=float)
    elif mode == "power_in_dof":
        x = np.log(np.array([r.dof for r in rows], dtype=float))
    else:
        raise ValueError(f"未知的拟合方式: {mode}")
    y = np.log(np.array([r.error for r in rows]))
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), residual


# ==================== 扫描 ====================

class StudyRunner:
    """
    收敛性实验

    每一行是一组独立的 Newton 求解，可用线程池并行，结果按参数顺序收集。
    """

    def __init__(self, params: ExperimentParams, potential: Optional[PairPotential] = None):
        self.params = params
        self.potential = potential or build_potential(params.potential, params.cutoff_radius,
                                                      params.potential_table)
        self.n = self.potential.neighbor_range
        self.solver = NewtonSolver(SolverConfig(residual_tolerance=params.residual_tolerance,
                                                max_iterations=params.max_iterations))
        self.kinds = [ModelKind.parse(name) for name in params.models]

    # ==================== 参考解 ====================

    def reference_solution(self, force: ExternalForce) -> PeriodicChain:
        """全原子平衡构型"""
        mesh = NodalMesh.full(self.params.n_atoms)
        model = CouplingModel(ModelKind.ATOMISTIC, mesh, self.potential)
        result = self.solver.solve(model, force, uniform_config(mesh, 1.0))
        if not result.converged:
            raise SolverError(f"全原子参考解未收敛，残差={result.residual:.3e}", result.iterations)
        logger.info(f"[Study] 参考解: {result.iterations} 步，残差={result.residual:.3e}")
        return PeriodicChain(result.configuration.displacement, result.configuration.period)

    def _solve_on_mesh(self, kind: ModelKind, mesh: NodalMesh, force: ExternalForce,
                       reference: PeriodicChain, param: int) -> StudyRow:
        m = mesh.nonlocal_width
        try:
            if kind is ModelKind.ATOMISTIC:
                mesh = NodalMesh.full(mesh.n_atoms)
            model = CouplingModel(kind, mesh, self.potential)
            result = self.solver.solve(model, force, uniform_config(mesh, 1.0))
        except QCError as e:
            logger.warning(f"[Study] {kind.value} param={param} 求解失败: {e}")
            return StudyRow(kind.value, param, mesh.dof, m, float("nan"), -1, False)

        if not result.converged:
            return StudyRow(kind.value, param, mesh.dof, m, float("nan"), result.iterations, False)
        error = w1inf_error(reconstruct(mesh, result.configuration), reference)
        logger.info(f"[Study] {kind.value} param={param} m={m} dof={mesh.dof} "
                    f"误差={error:.6e} 步数={result.iterations}")
        return StudyRow(kind.value, param, mesh.dof, m, error, result.iterations, True)

    def _localized_row(self, kind: ModelKind, m: int, force, reference) -> StudyRow:
        mesh = localized_mesh(self.params.n_atoms, m, self.n)
        return self._solve_on_mesh(kind, mesh, force, reference, m)

    def _bulk_row(self, kind: ModelKind, dof: int, force, reference) -> StudyRow:
        """对每个可行的偶数 m 求解，保留误差最小的一行"""
        best: Optional[StudyRow] = None
        upper = min(self.params.bulk_m_max, dof) if self.params.bulk_m_max else dof
        for m in range(2 * self.n + 2, upper + 1, 2):
            try:
                mesh = bulk_mesh(self.params.n_atoms, m, dof, self.n)
            except MeshError as e:
                logger.debug(f"[Study] 跳过 dof={dof} m={m}: {e}")
                continue
            row = self._solve_on_mesh(kind, mesh, force, reference, dof)
            if row.converged and (best is None or row.error < best.error):
                best = row
        if best is None:
            logger.warning(f"[Study] {kind.value} dof={dof} 没有可用的网格或全部求解失败")
            return StudyRow(kind.value, dof, dof, 0, float("nan"), -1, False)
        return best

    async def _gather(self, jobs) -> List[StudyRow]:
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=max(1, self.params.workers)) as pool:
            futures = [loop.run_in_executor(pool, job) for job in jobs]
            return list(await asyncio.gather(*futures))

    def _run(self, study: str, force: ExternalForce, row_fn, values: List[int]) -> StudyTable:
        reference = self.reference_solution(force)
        jobs = [
            (lambda k=kind, v=value: row_fn(k, v, force, reference))
            for kind in self.kinds for value in values
        ]
        rows = asyncio.run(self._gather(jobs))
        metadata = self.params.to_metadata()
        metadata.update({"study": study, "potential_repr": repr(self.potential)})
        return StudyTable(study, rows, metadata)

    def run_localized_force_study(self) -> StudyTable:
        """测试 1：局部外力，误差对 m 的指数收敛"""
        for m in self.params.m_list:
            _check_width(m, self.n)
        return self._run("localized", localized_force(self.params.n_atoms),
                         self._localized_row, list(self.params.m_list))

    def run_bulk_force_study(self) -> StudyTable:
        """测试 2：体外力，误差对自由度的代数收敛"""
        for dof in self.params.dof_list:
            if not 1 <= dof <= self.params.n_atoms - 1:
                raise MeshError(f"自由度 {dof} 超出 [1, N-1]")
        return self._run("bulk", bulk_force(self.params.n_atoms),
                         self._bulk_row, list(self.params.dof_list))


def run_localized_force_study(params: ExperimentParams) -> StudyTable:
    return StudyRunner(params).run_localized_force_study()


def run_bulk_force_study(params: ExperimentParams) -> StudyTable:
    return StudyRunner(params).run_bulk_force_study()
