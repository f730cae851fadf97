import logging
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import spsolve

from ..models.chain_model import NodalMesh, QCConfiguration
from ..models.errors import InvertedBondError, SolverError
from ..models.report_model import ExternalForce
from ..models.solver_model import SolveResult, SolverConfig
from .energy_models import CouplingModel, ModelKind
from .potential import PairPotential

logger = logging.getLogger(__name__)

# 能量比较的舍入容差（按 max(1, |Π|) 缩放）
ENERGY_SLACK = 1e-12


class NewtonSolver:
    """
    带回溯的 Newton 法

    固定一个节点消去平移零模，在其余节点上求解 H δ = -g；步长从 1 开始按 damping
    缩减，直到构型保持单调且能量不升。
    """

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()

    def solve(self, model: CouplingModel, force: Optional[ExternalForce],
              initial: QCConfiguration) -> SolveResult:
        cfg = self.config
        n_nodes = model.mesh.n_nodes
        if not 0 <= cfg.gauge_node < n_nodes:
            raise SolverError(f"规范节点 {cfg.gauge_node} 超出 [0, {n_nodes})")
        free = np.ones(n_nodes, dtype=bool)
        free[cfg.gauge_node] = False

        config = initial
        report = model.report(config, force)
        history = []
        iteration = 0
        while True:
            residual = float(np.max(np.abs(report.gradient[free]))) if free.any() else 0.0
            history.append(residual)
            logger.debug(f"[Solver] {model.kind.value} 第 {iteration} 步 残差={residual:.3e} "
                         f"能量={report.energy:.16e}")
            if residual <= cfg.residual_tolerance:
                return SolveResult(config, iteration, history, True, report.energy, report)
            if iteration >= cfg.max_iterations:
                logger.warning(f"[Solver] {model.kind.value} 在 {iteration} 步内未收敛，残差={residual:.3e}")
                return SolveResult(config, iteration, history, False, report.energy, report)

            hessian = report.hessian[free][:, free].tocsc()
            step = np.zeros(n_nodes)
            step[free] = spsolve(hessian, -report.gradient[free])
            if not np.all(np.isfinite(step)):
                raise SolverError(f"Newton 方程组奇异或不定（第 {iteration} 步）", iteration)

            config, report = self._line_search(model, force, config, report.energy, step, iteration)
            iteration += 1

    def _line_search(self, model, force, config, energy, step, iteration):
        """回溯：步长减半直到构型单调且能量不升"""
        cfg = self.config
        slack = ENERGY_SLACK * max(1.0, abs(energy))
        t = 1.0
        attempts = 1 if cfg.damping == 1.0 else cfg.max_halvings + 1
        for _ in range(attempts):
            trial = config.with_displacement(config.displacement + t * step)
            if trial.is_monotone:
                try:
                    report = model.report(trial, force)
                except InvertedBondError:
                    report = None
                if report is not None and report.energy <= energy + slack:
                    return trial, report
            t *= cfg.damping
        raise SolverError(f"Newton 方程组奇异或不定：回溯 {attempts - 1} 次仍未下降（第 {iteration} 步）",
                          iteration)


def solve(kind: ModelKind, mesh: NodalMesh, potential: PairPotential, force: Optional[ExternalForce],
          initial: QCConfiguration, config: Optional[SolverConfig] = None) -> SolveResult:
    """
    求解模型平衡构型

    :param kind: 模型
    :param mesh: 网格
    :param potential: 对势
    :param force: 外力
    :param initial: 初始构型
    :param config: 求解参数
    """
    model = CouplingModel(kind, mesh, potential)
    return NewtonSolver(config).solve(model, force, initial)


def fd_check(model: CouplingModel, config: QCConfiguration, force: Optional[ExternalForce] = None,
             step: Optional[float] = None) -> Tuple[float, float]:
    """
    中心差分检查解析梯度与 Hessian

    :param step: 差分步长，默认 1e-6·ε
    :return: (梯度相对偏差, Hessian 相对偏差)，分母取 max(1, 解析量的最大范数)
    """
    h = step if step is not None else 1e-6 * model.mesh.epsilon
    report = model.report(config, force)
    n_nodes = model.mesh.n_nodes
    w = config.displacement

    grad_fd = np.zeros(n_nodes)
    hess_fd = np.zeros((n_nodes, n_nodes))
    for k in range(n_nodes):
        plus = w.copy()
        plus[k] += h
        minus = w.copy()
        minus[k] -= h
        rep_p = model.report(config.with_displacement(plus), force, with_hessian=False)
        rep_m = model.report(config.with_displacement(minus), force, with_hessian=False)
        grad_fd[k] = (rep_p.energy - rep_m.energy) / (2 * h)
        hess_fd[:, k] = (rep_p.gradient - rep_m.gradient) / (2 * h)

    hess = report.hessian.toarray()
    grad_dev = np.max(np.abs(grad_fd - report.gradient)) / max(1.0, np.max(np.abs(report.gradient)))
    hess_dev = np.max(np.abs(hess_fd - hess)) / max(1.0, np.max(np.abs(hess)))
    logger.info(f"[FD] {model.kind.value}: 梯度偏差={grad_dev:.3e} Hessian 偏差={hess_dev:.3e}")
    return float(grad_dev), float(hess_dev)
