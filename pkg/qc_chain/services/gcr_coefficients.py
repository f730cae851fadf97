"""
GCR 重构系数表

系数 C_{i,j} 表示原子 i 的能量中与 j 的相互作用按真实位置计算的份额，
其余份额 1 - C_{i,j} 按 Cauchy-Born 外推 u_i + |j-i|(u_{i+sgn(j-i)} - u_i) 计算。
表中的键为相对左界面 i_1 的偏移 (i - i_1, j - i_1)，右界面 i_K 处取镜像
(i_K - i, i_K - j)。不在表中的 (i, j) 退回 QCE 的取法。
"""
from typing import Dict, Tuple

import numpy as np

from ..models.chain_model import NodalMesh
from ..models.errors import ModelError
from .assembly import StencilTerms

TABLE_ONE: Dict[Tuple[int, int], float] = {
    (-1, 0): 1.0,
    (-1, 1): 1.0,
    (-1, 2): 1.0,
    (-2, 1): 2.0 / 3.0,
    (1, -2): 1.0 / 3.0,
}

SHIFTED: Dict[Tuple[int, int], float] = {
    (-1, 0): 1.0,
    (-1, 1): 1.0,
    (-2, 1): 1.0,
    (-1, 2): 1.0,
    (-3, 0): 2.0 / 3.0,
    (0, -3): 1.0 / 3.0,
}

VARIANTS = {"table_one": TABLE_ONE, "shifted": SHIFTED}


class GCRCoefficients:
    """
    指定变体与邻居范围下的 GCR 系数

    只保留 |j - i| ≤ n 的表项；n = 2 时两个变体一致。
    """

    def __init__(self, variant: str = "table_one", neighbor_range: int = 2):
        if variant not in VARIANTS:
            raise ModelError(f"未知的 GCR 变体: {variant}")
        if neighbor_range not in (2, 3):
            raise ModelError(f"GCR 系数只对 n ∈ {{2, 3}} 给出，当前 n = {neighbor_range}")
        self.variant = variant
        self.neighbor_range = neighbor_range
        table = VARIANTS[variant] if neighbor_range == 3 else TABLE_ONE
        self.entries = {k: v for k, v in table.items() if 0 < abs(k[1] - k[0]) <= neighbor_range}

    @classmethod
    def table_one(cls, neighbor_range: int = 3) -> "GCRCoefficients":
        return cls("table_one", neighbor_range)

    @classmethod
    def shifted(cls, neighbor_range: int = 3) -> "GCRCoefficients":
        return cls("shifted", neighbor_range)

    @staticmethod
    def qce_coefficient(i: int, left: int, right: int) -> float:
        """QCE 的取法：非局部原子全部用真实位置，局部原子全部用 Cauchy-Born"""
        return 1.0 if left <= i <= right else 0.0

    def lookup(self, i: int, j: int, left: int, right: int) -> float:
        """
        查询 C_{i,j}

        :param i: 原子编号
        :param j: 邻居编号
        :param left: 非局部区域左端 i_1
        :param right: 非局部区域右端 i_K
        """
        key = (i - left, j - left)
        if key in self.entries:
            return self.entries[key]
        key = (right - i, right - j)
        if key in self.entries:
            return self.entries[key]
        return self.qce_coefficient(i, left, right)

    def brackets(self, mesh: NodalMesh) -> StencilTerms:
        """
        相对 QCE 的修正项 Σ (C - C^QCE)·(ε/2)[φ(真实) - φ(Cauchy-Born)]
        """
        left, right, eps = mesh.nonlocal_start, mesh.nonlocal_end, mesh.epsilon
        actual_l, actual_r, cb_l, cb_r, scales, weights = [], [], [], [], [], []
        for (di, dj), coefficient in self.entries.items():
            for i, j in ((left + di, left + dj), (right - di, right - dj)):
                delta = coefficient - self.qce_coefficient(i, left, right)
                if delta == 0.0:
                    continue
                sign = 1 if j > i else -1
                actual_l.append(i)
                actual_r.append(j)
                cb_l.append(i)
                cb_r.append(i + sign)
                scales.append(float(abs(j - i)))
                weights.append(0.5 * eps * delta)
        if not weights:
            return StencilTerms.empty()
        weights = np.asarray(weights)
        actual = StencilTerms.pairs(actual_l, actual_r, 1.0, weights)
        cauchy_born = StencilTerms.pairs(cb_l, cb_r, scales, -weights)
        return StencilTerms.concat([actual, cauchy_born])
