import csv
import logging
import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline

from ..models.errors import PotentialDomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class PairPotential(ABC):
    """
    一维对势 φ，按偶延拓定义在 z < 0 上：φ(-z) = φ(z)，φ' 为奇函数，φ'' 为偶函数。

    子类只需实现 z > 0 的分支。
    """

    def __init__(self, cutoff_radius: float):
        if not math.isfinite(cutoff_radius) or cutoff_radius < 1.0:
            raise PotentialDomainError(f"截断半径必须 ≥ 1，当前为 {cutoff_radius}")
        self.cutoff_radius = float(cutoff_radius)

    @property
    def neighbor_range(self) -> int:
        """相互作用的最远邻居序号 n = floor(cutoff_radius)"""
        return int(math.floor(self.cutoff_radius))

    @abstractmethod
    def _evaluate_positive(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        在 r > 0 上求值

        :param r: 正间距数组
        :return: (φ, φ', φ'')
        """
        pass

    def evaluate(self, z: ArrayLike) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
        """
        计算 φ(z)、φ'(z)、φ''(z)，支持标量和 numpy 数组

        :param z: 约化间距（以 ε 为单位）
        :return: (φ, φ', φ'')，与输入同形
        """
        scalar = np.ndim(z) == 0
        z_arr = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z_arr)):
            raise PotentialDomainError("间距中出现非有限值")
        if np.any(z_arr == 0.0):
            raise PotentialDomainError("零间距处势函数奇异")

        r = np.abs(z_arr)
        value, d1, d2 = self._evaluate_positive(r)
        d1 = np.sign(z_arr) * d1
        if scalar:
            return float(value), float(d1), float(d2)
        return value, d1, d2

    def __call__(self, z: ArrayLike) -> ArrayLike:
        return self.evaluate(z)[0]


class LennardJones(PairPotential):
    """φ(z) = z^-12 - 2 z^-6，平衡间距为 1，φ(1) = -1"""

    def __init__(self, cutoff_radius: float = 3.25):
        super().__init__(cutoff_radius)

    def _evaluate_positive(self, r):
        inv6 = r ** -6
        inv12 = inv6 * inv6
        value = inv12 - 2.0 * inv6
        d1 = (-12.0 * inv12 + 12.0 * inv6) / r
        d2 = (156.0 * inv12 - 84.0 * inv6) / (r * r)
        return value, d1, d2

    def __repr__(self):
        return f"LennardJones(cutoff_radius={self.cutoff_radius})"


class TabulatedPotential(PairPotential):
    """
    由用户给出的 (z, φ) 采样点构造的三次样条势

    - 超过最后一个采样点时 φ ≡ 0
    - 低于第一个采样点时抛出 PotentialDomainError
    """

    def __init__(self, z_samples, values, cutoff_radius: float):
        super().__init__(cutoff_radius)
        z_samples = np.asarray(z_samples, dtype=float)
        values = np.asarray(values, dtype=float)
        if z_samples.ndim != 1 or z_samples.shape != values.shape or z_samples.size < 4:
            raise PotentialDomainError("势函数表至少需要 4 个一一对应的采样点")
        if z_samples[0] <= 0 or np.any(np.diff(z_samples) <= 0):
            raise PotentialDomainError("势函数表的 z 必须为正且严格递增")
        self.z_min = float(z_samples[0])
        self.z_max = float(z_samples[-1])
        self._spline = CubicSpline(z_samples, values)

    @classmethod
    def from_csv(cls, path: Union[str, Path], cutoff_radius: float) -> "TabulatedPotential":
        """
        从两列 CSV（表头 z,phi）读取势函数表

        :param path: 文件路径
        :param cutoff_radius: 截断半径
        """
        z_samples, values = [], []
        with open(path, "r", encoding="utf-8-sig", newline="") as f:
            for row in csv.DictReader(f):
                z_samples.append(float(row["z"]))
                values.append(float(row["phi"]))
        logger.info(f"[Potential] 已读取势函数表 {path}，共 {len(z_samples)} 个采样点")
        return cls(z_samples, values, cutoff_radius)

    def _evaluate_positive(self, r):
        if np.any(r < self.z_min):
            raise PotentialDomainError(f"间距低于势函数表下界 {self.z_min}")
        inside = r <= self.z_max
        value = np.where(inside, self._spline(np.minimum(r, self.z_max)), 0.0)
        d1 = np.where(inside, self._spline(np.minimum(r, self.z_max), 1), 0.0)
        d2 = np.where(inside, self._spline(np.minimum(r, self.z_max), 2), 0.0)
        return value, d1, d2

    def __repr__(self):
        return f"TabulatedPotential(z=[{self.z_min}, {self.z_max}], cutoff_radius={self.cutoff_radius})"


def cb_density(potential: PairPotential, z: float, n: int = None) -> Tuple[float, float, float]:
    """
    Cauchy-Born 能量密度 Φ(z) = Σ_{m=1..n} φ(m z) 及其导数

    :param potential: 对势
    :param z: 均匀应变，必须为正
    :param n: 邻居范围，默认取势函数的 neighbor_range
    :return: (Φ, Φ', Φ'')
    """
    if z <= 0:
        raise PotentialDomainError(f"Cauchy-Born 密度要求 z > 0，当前为 {z}")
    n = potential.neighbor_range if n is None else n
    m = np.arange(1, n + 1, dtype=float)
    value, d1, d2 = potential.evaluate(m * z)
    return float(np.sum(value)), float(np.sum(m * d1)), float(np.sum(m * m * d2))


def build_potential(kind: str, cutoff_radius: float, table_path: str = "") -> PairPotential:
    """按配置名构造势函数"""
    if kind == "lennard_jones":
        return LennardJones(cutoff_radius)
    if kind == "table":
        if not table_path:
            raise PotentialDomainError("potential=table 时必须提供 potential_table")
        return TabulatedPotential.from_csv(table_path, cutoff_radius)
    raise PotentialDomainError(f"未知的势函数类型: {kind}")
