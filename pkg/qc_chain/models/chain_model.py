from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.sparse import coo_matrix

from .errors import MeshError


@dataclass(frozen=True, eq=False)
class PeriodicChain:
    """
    周期原子链 u_1..u_N，满足 u_{i+N} = u_i + period

    内部保存相对参考晶格 ε·period·i 的位移，键长由 period·ε + Δw 得到。
    """
    displacement: np.ndarray     # 相对参考晶格的位移 w_i，长度 N
    period: float = 1.0          # 周期长度，u_{i+N} - u_i

    def __post_init__(self):
        w = np.asarray(self.displacement, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise MeshError("原子链至少需要 2 个原子")
        object.__setattr__(self, "displacement", w)

    @classmethod
    def from_positions(cls, positions, period: float = 1.0) -> "PeriodicChain":
        positions = np.asarray(positions, dtype=float)
        n_atoms = positions.size
        reference = period * np.arange(1, n_atoms + 1) / n_atoms
        return cls(positions - reference, period)

    @property
    def n_atoms(self) -> int:
        return self.displacement.size

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n_atoms

    @property
    def positions(self) -> np.ndarray:
        return self.period * np.arange(1, self.n_atoms + 1) * self.epsilon + self.displacement

    def position(self, atom: int) -> float:
        """任意整数下标的周期取值"""
        _, base = divmod(atom - 1, self.n_atoms)
        return self.period * atom * self.epsilon + self.displacement[base]

    def gaps(self) -> np.ndarray:
        """第 i 个键 u_{i+1} - u_i，i = 1..N（最后一个键跨越周期）"""
        dw = np.roll(self.displacement, -1) - self.displacement
        return self.period * self.epsilon + dw

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(self.gaps() > 0))


@dataclass(frozen=True)
class SparseCoefficients:
    """
    表示向量：u_α = Σ weight·(x_node + period·shift)，至多两个非零项
    """
    node_indices: Tuple[int, ...]   # 节点在节点向量中的下标（0 起）
    weights: Tuple[float, ...]      # 插值权重，和为 1
    shifts: Tuple[int, ...]         # 每个系数的周期平移（单位：period）

    def evaluate(self, node_positions: np.ndarray, period: float = 1.0) -> float:
        return float(sum(w * (node_positions[k] + period * s)
                         for k, w, s in zip(self.node_indices, self.weights, self.shifts)))


@dataclass(frozen=True, eq=False)
class ReconstructionOperator:
    """原子 1..N 的表示向量，按数组存储"""
    left_index: np.ndarray      # 左节点下标
    right_index: np.ndarray     # 右节点下标
    left_weight: np.ndarray
    right_weight: np.ndarray
    left_shift: np.ndarray      # 左节点的周期平移
    right_shift: np.ndarray     # 右节点的周期平移
    n_nodes: int

    def matrix(self):
        """U^QC，形状 (N, K) 的 CSR 稀疏矩阵"""
        n_atoms = self.left_index.size
        rows = np.concatenate([np.arange(n_atoms), np.arange(n_atoms)])
        cols = np.concatenate([self.left_index, self.right_index])
        vals = np.concatenate([self.left_weight, self.right_weight])
        return coo_matrix((vals, (rows, cols)), shape=(n_atoms, self.n_nodes)).tocsr()

    def apply(self, nodal_values: np.ndarray) -> np.ndarray:
        """对周期量（位移）做线性插值"""
        return (self.left_weight * nodal_values[self.left_index]
                + self.right_weight * nodal_values[self.right_index])


@dataclass(frozen=True, eq=False)
class NodalMesh:
    """
    QC 节点网格

    节点为 1..N 中严格递增的原子编号；非局部区域 [nonlocal_start, nonlocal_end]
    内的原子全部为节点。第 k 个单元连接节点 k-1 与 k，第 0 个单元跨越周期。
    """
    n_atoms: int                 # 周期内原子数 N
    nodes: np.ndarray            # 节点原子编号 i_1 < ... < i_K
    nonlocal_start: int          # 非局部区域左端 i_1^n
    nonlocal_end: int            # 非局部区域右端 i_K^n
    neighbor_range: int = 1      # 构网时使用的邻居范围 n

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        n_atoms = self.n_atoms
        if n_atoms < 2:
            raise MeshError(f"原子数必须 ≥ 2，当前为 {n_atoms}")
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("网格至少需要 2 个节点")
        if nodes[0] < 1 or nodes[-1] > n_atoms or np.any(np.diff(nodes) <= 0):
            raise MeshError("节点编号必须在 [1, N] 内严格递增")
        if not 1 <= self.nonlocal_start <= self.nonlocal_end <= n_atoms:
            raise MeshError(f"非局部区域 [{self.nonlocal_start}, {self.nonlocal_end}] 超出 [1, {n_atoms}]")
        lo = np.searchsorted(nodes, self.nonlocal_start)
        hi = np.searchsorted(nodes, self.nonlocal_end, side="right")
        if hi - lo != self.nonlocal_end - self.nonlocal_start + 1:
            raise MeshError("非局部区域内的原子必须全部为节点")

    @classmethod
    def full(cls, n_atoms: int) -> "NodalMesh":
        """全原子网格：每个原子都是节点"""
        return cls(n_atoms, np.arange(1, n_atoms + 1), 1, n_atoms)

    # ==================== 基本量 ====================

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n_atoms

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def dof(self) -> int:
        """去掉平移规范后的自由度"""
        return self.n_nodes - 1

    @property
    def is_full(self) -> bool:
        return self.n_nodes == self.n_atoms

    @property
    def has_interface(self) -> bool:
        return self.nonlocal_end - self.nonlocal_start + 1 < self.n_atoms

    @property
    def nonlocal_width(self) -> int:
        return self.nonlocal_end - self.nonlocal_start + 1

    @property
    def nonlocal_atoms(self) -> np.ndarray:
        return np.arange(self.nonlocal_start, self.nonlocal_end + 1)

    @cached_property
    def element_left(self) -> np.ndarray:
        """单元左端原子编号（第 0 个单元为 i_K - N）"""
        return np.concatenate([[self.nodes[-1] - self.n_atoms], self.nodes[:-1]])

    @property
    def element_right(self) -> np.ndarray:
        return self.nodes

    @cached_property
    def element_lengths(self) -> np.ndarray:
        return self.element_right - self.element_left

    @cached_property
    def node_is_nonlocal(self) -> np.ndarray:
        return (self.nodes >= self.nonlocal_start) & (self.nodes <= self.nonlocal_end)

    @cached_property
    def element_nonlocal_ends(self) -> np.ndarray:
        """每个单元落在非局部区域内的端点个数 ν_k"""
        mask = self.node_is_nonlocal.astype(int)
        return np.roll(mask, 1) + mask

    @cached_property
    def element_is_nonlocal(self) -> np.ndarray:
        return (self.element_lengths == 1) & (self.element_nonlocal_ends == 2)

    def node_index(self, atom: int) -> int:
        """节点原子编号 -> 节点向量下标，不是节点时抛出 MeshError"""
        base = (atom - 1) % self.n_atoms + 1
        k = int(np.searchsorted(self.nodes, base))
        if k >= self.n_nodes or self.nodes[k] != base:
            raise MeshError(f"原子 {atom} 不是节点")
        return k

    # ==================== 重构 ====================

    @cached_property
    def operator(self) -> ReconstructionOperator:
        n_atoms, nodes, n_nodes = self.n_atoms, self.nodes, self.n_nodes
        atoms = np.arange(1, n_atoms + 1)
        count = np.searchsorted(nodes, atoms, side="right")

        left_index = (count - 1) % n_nodes
        right_index = count % n_nodes
        left_shift = np.where(count == 0, -1, 0)
        right_shift = np.where(count == n_nodes, 1, 0)
        left_label = nodes[left_index] + n_atoms * left_shift
        right_label = nodes[right_index] + n_atoms * right_shift

        right_weight = (atoms - left_label) / (right_label - left_label)
        left_weight = 1.0 - right_weight
        on_node = atoms == left_label
        right_index = np.where(on_node, left_index, right_index)
        right_shift = np.where(on_node, left_shift, right_shift)
        right_weight = np.where(on_node, 0.0, right_weight)
        left_weight = np.where(on_node, 1.0, left_weight)

        return ReconstructionOperator(left_index, right_index, left_weight, right_weight,
                                      left_shift, right_shift, n_nodes)


@dataclass(frozen=True, eq=False)
class QCConfiguration:
    """
    QC 节点构型

    节点位置 x_k = ε·period·i_k + displacement_k，跨越周期时加上 period。
    """
    mesh: NodalMesh
    displacement: np.ndarray     # 节点位移，长度 K
    period: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.displacement, dtype=float)
        if w.shape != (self.mesh.n_nodes,):
            raise MeshError(f"节点位移长度应为 {self.mesh.n_nodes}，当前为 {w.shape}")
        object.__setattr__(self, "displacement", w)

    @classmethod
    def from_positions(cls, mesh: NodalMesh, positions, period: float = 1.0) -> "QCConfiguration":
        positions = np.asarray(positions, dtype=float)
        return cls(mesh, positions - period * mesh.epsilon * mesh.nodes, period)

    @property
    def positions(self) -> np.ndarray:
        return self.period * self.mesh.epsilon * self.mesh.nodes + self.displacement

    def with_displacement(self, displacement: np.ndarray) -> "QCConfiguration":
        return QCConfiguration(self.mesh, displacement, self.period)

    def element_gaps(self) -> np.ndarray:
        """每个单元两端节点的位置差"""
        w = self.displacement
        return self.period * self.mesh.epsilon * self.mesh.element_lengths + (w - np.roll(w, 1))

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(self.element_gaps() > 0))
