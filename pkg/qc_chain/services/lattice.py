import logging
import math

import numpy as np

from ..models.chain_model import NodalMesh, PeriodicChain, QCConfiguration, SparseCoefficients
from ..models.errors import MeshError

logger = logging.getLogger(__name__)


def build_mesh(n_atoms: int, center: int, core_width: int, padding: int,
               local_node_count: int = 0, neighbor_range: int = 1) -> NodalMesh:
    """
    构造 QC 网格

    非局部区域为 [M - L, M + P - 1 + L]，局部区域内再等距放置若干节点（与两个相邻
    节点等距时向下取整）。

    :param n_atoms: 周期内原子数 N
    :param center: 缺陷中心 M
    :param core_width: 缺陷宽度 P
    :param padding: 缺陷两侧的原子层数 L
    :param local_node_count: 局部区域内额外节点数
    :param neighbor_range: 邻居范围 n，用于校验单元长度
    :return: NodalMesh
    """
    if n_atoms < 2 or core_width < 1 or padding < 0 or local_node_count < 0:
        raise MeshError(f"网格参数不合法: N={n_atoms}, P={core_width}, L={padding}, "
                        f"local_node_count={local_node_count}")
    if n_atoms < 2 * (core_width + 2 * padding):
        raise MeshError(f"非局部区域占满周期: 需要 N ≥ 2(P + 2L) = {2 * (core_width + 2 * padding)}，"
                        f"当前 N={n_atoms}")

    start = center - padding
    end = center + core_width - 1 + padding
    if start < 1 or end > n_atoms:
        raise MeshError(f"非局部区域 [{start}, {end}] 超出 [1, {n_atoms}]")

    # 局部区域从 end 延伸到 start + N
    span = start + n_atoms - end
    if local_node_count >= span:
        raise MeshError(f"局部节点数 {local_node_count} 超过局部区域容量 {span - 1}")
    targets = end + span * np.arange(1, local_node_count + 1) / (local_node_count + 1)
    local_labels = np.array([math.ceil(t - 0.5) for t in targets], dtype=np.int64)
    if local_labels.size and np.any(np.diff(local_labels) <= 0):
        raise MeshError("局部节点发生重合")

    wrapped = (local_labels - 1) % n_atoms + 1
    nodes = np.sort(np.concatenate([np.arange(start, end + 1), wrapped]))
    mesh = NodalMesh(n_atoms, nodes, start, end, neighbor_range)
    check_element_lengths(mesh, neighbor_range)

    logger.debug(f"[Mesh] N={n_atoms} 非局部区域=[{start}, {end}] 节点数={mesh.n_nodes}")
    return mesh


def check_element_lengths(mesh: NodalMesh, neighbor_range: int):
    """
    校验单元长度：与非局部区域相邻的局部单元需要 h ≥ n+1，其余局部单元需要 h ≥ n
    """
    if not mesh.has_interface:
        return
    local = ~mesh.element_is_nonlocal
    lengths = mesh.element_lengths
    touching = local & (mesh.element_nonlocal_ends > 0)
    if np.any(lengths[touching] < neighbor_range + 1):
        raise MeshError(f"网格违反界面间隔要求 h ≥ n+1 = {neighbor_range + 1}，"
                        f"界面单元长度为 {lengths[touching].tolist()}")
    interior = local & ~touching
    if np.any(lengths[interior] < neighbor_range):
        raise MeshError(f"局部单元长度必须 ≥ n = {neighbor_range}，"
                        f"最短为 {int(lengths[interior].min())}")


def representation_vector(mesh: NodalMesh, atom: int) -> SparseCoefficients:
    """
    任意整数原子编号的表示向量

    :param mesh: 网格
    :param atom: 原子编号，可以超出 [1, N]
    :return: SparseCoefficients，节点原子只含一项
    """
    wraps, base = divmod(atom - 1, mesh.n_atoms)
    op = mesh.operator
    i = base
    if op.right_weight[i] == 0.0:
        return SparseCoefficients((int(op.left_index[i]),), (1.0,), (int(op.left_shift[i]) + wraps,))
    return SparseCoefficients(
        (int(op.left_index[i]), int(op.right_index[i])),
        (float(op.left_weight[i]), float(op.right_weight[i])),
        (int(op.left_shift[i]) + wraps, int(op.right_shift[i]) + wraps),
    )


def uniform_config(mesh: NodalMesh, z: float) -> QCConfiguration:
    """均匀应变 z 下的节点构型 u_{i_k} = ε z i_k，周期长度为 z"""
    if z <= 0:
        raise MeshError(f"均匀应变必须为正，当前为 {z}")
    return QCConfiguration(mesh, np.zeros(mesh.n_nodes), float(z))


def reconstruct(mesh: NodalMesh, config: QCConfiguration) -> PeriodicChain:
    """由节点构型线性插值出全部原子位置"""
    if config.mesh is not mesh and config.mesh.n_nodes != mesh.n_nodes:
        raise MeshError("构型与网格不匹配")
    return PeriodicChain(mesh.operator.apply(config.displacement), config.period)


def restrict(mesh: NodalMesh, chain: PeriodicChain) -> QCConfiguration:
    """取全原子链在节点上的值"""
    if chain.n_atoms != mesh.n_atoms:
        raise MeshError(f"原子数不一致: 链为 {chain.n_atoms}，网格为 {mesh.n_atoms}")
    return QCConfiguration(mesh, chain.displacement[mesh.nodes - 1], chain.period)
