"""
qc_chain 命令行入口

一维周期链上的准连续介质耦合模型：鬼力检查、收敛性实验、单次求解与有限差分检查
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from .models.chain_model import NodalMesh
from .models.errors import ConfigError, QCError, SolverError
from .models.solver_model import SolverConfig
from .models.study_model import ExperimentParams, StudyTable
from .services.energy_models import CouplingModel, ModelKind, ghost_force
from .services.lattice import build_mesh, reconstruct, uniform_config
from .services.newton_solver import NewtonSolver, fd_check
from .services.potential import build_potential
from .services.study_runner import (StudyRunner, bulk_force, bulk_mesh, fit_convergence,
                                    localized_force, localized_mesh)
from .utils.config_loader import load_config
from .utils.report_writer import write_chain, write_json, write_report

logger = logging.getLogger("qc_chain")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2

FULL_SCALE_ATOMS = 10000


class _ArgumentParser(argparse.ArgumentParser):
    """用法错误改为抛出 ConfigError，由 run_cli 统一转换为退出码"""

    def error(self, message):
        raise ConfigError(f"命令行参数错误: {message}", "argv")


class QCCommandLine:
    """qc_chain 命令行"""

    def __init__(self, params: ExperimentParams, args: argparse.Namespace):
        self.params = params
        self.args = args
        self._debug_mode = bool(params.debug_mode)
        self.output_dir = params.output_dir
        os.makedirs(self.output_dir, exist_ok=True)
        self._log(f"生效配置: {params.to_metadata()}")

    # ==================== 工具方法 ====================

    def _log(self, msg: str):
        """Debug 日志输出"""
        if self._debug_mode:
            logger.info(f"[QCChain/DBG] {msg}")

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _kinds(self) -> List[ModelKind]:
        return [ModelKind.parse(name) for name in self.params.models]

    def _write_study(self, table: StudyTable, name: str):
        write_report(table, self._path(f"{name}.csv"), "csv")
        write_report(table, self._path(f"{name}.json"), "json")

    @staticmethod
    def _print_fit(table: StudyTable, mode: str):
        for model in table.models:
            try:
                slope, residual = fit_convergence(table, model, mode)
            except ValueError as e:
                print(f"{model:>12}  拟合失败: {e}")
                continue
            print(f"{model:>12}  斜率={slope: .4f}  拟合残差={residual:.3e}")

    # ==================== 命令处理 ====================

    def cmd_ghost_force(self) -> int:
        """均匀晶格上各模型的鬼力，n ∈ {2, 3}，单单元网格与含 3 个局部内节点的网格"""
        n_atoms = self.params.n_atoms
        rows = []
        print(f"{'model':>12} {'n':>2} {'mesh':>8} {'max|g|':>12} {'g(i_2)':>12}")
        for n in (2, 3):
            potential = build_potential(self.params.potential, n + 0.25, self.params.potential_table)
            meshes = {
                "single": localized_mesh(n_atoms, 8, n),
                "local3": build_mesh(n_atoms, n_atoms // 2, 2, 3, 3, neighbor_range=n),
            }
            for kind in self._kinds():
                if kind is ModelKind.ATOMISTIC:
                    continue
                for label, mesh in meshes.items():
                    residual, max_norm = ghost_force(kind, mesh, 1.0, potential)
                    at_i2 = float(residual[mesh.node_index(mesh.nonlocal_start + 1)])
                    rows.append({"model": kind.value, "n": n, "mesh": label,
                                 "max_residual": max_norm, "residual_i2": at_i2})
                    print(f"{kind.value:>12} {n:>2} {label:>8} {max_norm:12.4e} {at_i2:12.4e}")
        write_json({"metadata": self.params.to_metadata(), "rows": rows}, self._path("ghost_force.json"))
        return EXIT_OK

    def cmd_test1(self) -> int:
        """局部外力：误差随非局部宽度 m 的变化"""
        table = StudyRunner(self.params).run_localized_force_study()
        self._write_study(table, "test1")
        self._print_fit(table, "exponential_in_m")
        return EXIT_OK

    def cmd_test2(self) -> int:
        """体外力：各自由度下的最优误差"""
        table = StudyRunner(self.params).run_bulk_force_study()
        self._write_study(table, "test2")
        self._print_fit(table, "power_in_dof")
        return EXIT_OK

    def cmd_solve(self) -> int:
        """单次求解并写出原子位置"""
        params, cli = self.params, self.args
        kind = ModelKind.parse(cli.model)
        potential = build_potential(params.potential, params.cutoff_radius, params.potential_table)
        n = potential.neighbor_range
        n_atoms = params.n_atoms

        if kind is ModelKind.ATOMISTIC:
            mesh = NodalMesh.full(n_atoms)
        elif cli.local_nodes:
            mesh = bulk_mesh(n_atoms, cli.m, cli.m + cli.local_nodes - 1, n)
        else:
            mesh = localized_mesh(n_atoms, cli.m, n)
        force = localized_force(n_atoms) if cli.force == "localized" else bulk_force(n_atoms)

        solver = NewtonSolver(SolverConfig(residual_tolerance=params.residual_tolerance,
                                           max_iterations=params.max_iterations))
        result = solver.solve(CouplingModel(kind, mesh, potential), force, uniform_config(mesh, 1.0))
        if not result.converged:
            raise SolverError(f"{kind.value} 未收敛，残差={result.residual:.3e}", result.iterations)

        stem = f"solve_{kind.value}_m{cli.m}"
        write_chain(reconstruct(mesh, result.configuration), self._path(f"{stem}.csv"))
        write_json({
            "metadata": params.to_metadata(),
            "model": kind.value,
            "m": cli.m,
            "force": cli.force,
            "dof": mesh.dof,
            "iterations": result.iterations,
            "residual_history": result.residual_history,
            "energy": result.energy,
        }, self._path(f"{stem}.json"))
        print(f"{kind.value}: {result.iterations} 步收敛，残差={result.residual:.3e}，能量={result.energy:.16e}")
        return EXIT_OK

    def cmd_fd_check(self) -> int:
        """在随机扰动构型上比较解析导数与中心差分"""
        params = self.params
        potential = build_potential(params.potential, params.cutoff_radius, params.potential_table)
        n = potential.neighbor_range
        rng = np.random.default_rng(params.seed)
        mesh = build_mesh(params.n_atoms, params.n_atoms // 2, 2, n + 1, 2, neighbor_range=n)
        eps = mesh.epsilon
        rows = []
        for kind in self._kinds():
            model_mesh = NodalMesh.full(params.n_atoms) if kind is ModelKind.ATOMISTIC else mesh
            model = CouplingModel(kind, model_mesh, potential)
            config = uniform_config(model_mesh, 1.0)
            config = config.with_displacement(rng.uniform(-0.1 * eps, 0.1 * eps, model_mesh.n_nodes))
            grad_dev, hess_dev = fd_check(model, config)
            rows.append({"model": kind.value, "gradient_deviation": grad_dev, "hessian_deviation": hess_dev})
            print(f"{kind.value:>12}  梯度偏差={grad_dev:.3e}  Hessian 偏差={hess_dev:.3e}")
        write_json({"metadata": params.to_metadata(), "rows": rows}, self._path("fd_check.json"))
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON 配置文件")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--n-atoms", dest="n_atoms", type=int)
    common.add_argument("--cutoff", dest="cutoff_radius", type=float)
    common.add_argument("--models", help="逗号分隔的模型列表")
    common.add_argument("--seed", type=int)
    common.add_argument("--tolerance", dest="residual_tolerance", type=float)
    common.add_argument("--workers", type=int)
    common.add_argument("--full-scale", action="store_true", help=f"使用 N = {FULL_SCALE_ATOMS}")
    common.add_argument("--debug", action="store_true")

    parser = _ArgumentParser(prog="qc_chain", description="一维周期链准连续介质耦合模型")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    sub.add_parser("ghost-force", parents=[common], help="均匀晶格上的鬼力")
    sub.add_parser("test1", parents=[common], help="局部外力收敛性实验")
    sub.add_parser("test2", parents=[common], help="体外力收敛性实验")
    solve = sub.add_parser("solve", parents=[common], help="单次求解")
    solve.add_argument("--model", default="qcp")
    solve.add_argument("--m", type=int, default=8)
    solve.add_argument("--force", choices=["localized", "bulk"], default="localized")
    solve.add_argument("--local-nodes", dest="local_nodes", type=int, default=0)
    sub.add_parser("fd-check", parents=[common], help="有限差分检查")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "output_dir": args.output_dir,
        "n_atoms": FULL_SCALE_ATOMS if args.full_scale else args.n_atoms,
        "cutoff_radius": args.cutoff_radius,
        "seed": args.seed,
        "residual_tolerance": args.residual_tolerance,
        "workers": args.workers,
        "debug_mode": True if args.debug else None,
    }
    if args.models:
        overrides["models"] = [m.strip() for m in args.models.split(",") if m.strip()]
    return overrides


COMMANDS = {
    "ghost-force": QCCommandLine.cmd_ghost_force,
    "test1": QCCommandLine.cmd_test1,
    "test2": QCCommandLine.cmd_test2,
    "solve": QCCommandLine.cmd_solve,
    "fd-check": QCCommandLine.cmd_fd_check,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """
    解析参数并执行子命令

    :return: 退出码，0 成功，1 参数或配置错误，2 求解失败
    """
    try:
        args = build_parser().parse_args(argv)
        params = load_config(args.config, _overrides(args))
        logging.basicConfig(
            level=logging.DEBUG if params.debug_mode else logging.INFO,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        return COMMANDS[args.command](QCCommandLine(params, args))
    except SolverError as e:
        logger.error(f"[QCChain] 求解失败: {e}")
        return EXIT_SOLVER
    except QCError as e:
        logger.error(f"[QCChain] {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
