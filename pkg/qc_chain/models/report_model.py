from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix

# 外力零和容差（按 max(1, |f|_∞) 缩放）
FORCE_SUM_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ExternalForce:
    """
    作用在原子 1..N 上的外力密度 f_i，外力势能为 -ε Σ f_i u_i
    """
    values: np.ndarray           # 长度 N
    project: bool = False        # 为 True 时减去均值以满足零和

    def __post_init__(self):
        f = np.asarray(self.values, dtype=float).copy()
        if f.ndim != 1:
            raise ValueError("外力必须是一维数组")
        if self.project:
            f -= f.mean()
        scale = max(1.0, float(np.max(np.abs(f)))) if f.size else 1.0
        if abs(float(np.sum(f))) > FORCE_SUM_TOLERANCE * scale:
            raise ValueError(f"外力合力不为零: Σf = {np.sum(f):.3e}")
        object.__setattr__(self, "values", f)

    @classmethod
    def zero(cls, n_atoms: int) -> "ExternalForce":
        return cls(np.zeros(n_atoms))

    @property
    def n_atoms(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class EnergyReport:
    energy: float                # 总能量（含外力势能）
    gradient: np.ndarray         # 对节点位置的梯度
    hessian: Optional[csr_matrix]  # 对称稀疏 Hessian

    @property
    def residual(self) -> float:
        """梯度的最大范数"""
        return float(np.max(np.abs(self.gradient))) if self.gradient.size else 0.0
