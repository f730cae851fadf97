from dataclasses import dataclass, field
from typing import List, Optional

from .chain_model import QCConfiguration
from .report_model import EnergyReport


@dataclass
class SolverConfig:
    residual_tolerance: float = 1e-12   # 梯度最大范数的收敛阈值
    max_iterations: int = 50            # Newton 步数上限
    damping: float = 0.5                # 回溯时的步长缩减因子，1 表示不回溯
    max_halvings: int = 30              # 每步最多回溯次数
    gauge_node: int = 0                 # 固定平移的节点下标

    def __post_init__(self):
        if self.residual_tolerance <= 0:
            raise ValueError(f"residual_tolerance 必须为正，当前为 {self.residual_tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations 必须 ≥ 1，当前为 {self.max_iterations}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping 必须在 (0, 1] 内，当前为 {self.damping}")


@dataclass
class SolveResult:
    configuration: QCConfiguration      # 最终构型
    iterations: int                     # 已执行的 Newton 步数
    residual_history: List[float]       # 每步开始时的残差
    converged: bool
    energy: float = 0.0
    report: Optional[EnergyReport] = field(default=None, repr=False)

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")
