import logging
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix

from ..models.chain_model import NodalMesh, PeriodicChain, QCConfiguration
from ..models.errors import InvertedBondError, ModelError
from ..models.report_model import EnergyReport, ExternalForce
from .assembly import StencilTerms, assemble
from .gcr_coefficients import GCRCoefficients
from .lattice import check_element_lengths, reconstruct, uniform_config
from .potential import PairPotential

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    ATOMISTIC = "atomistic"
    QCE = "qce"
    QNL = "qnl"
    GCR_TABLE_I = "gcr"
    GCR_SHIFTED = "gcr_shifted"
    QCP = "qcp"
    QCPM = "qcpm"

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ModelError(f"未知的模型: {name}，可选 {[k.value for k in cls]}") from None


# ==================== 模板项 ====================

def _index_grid(*ranges):
    """笛卡尔积展平为若干一维整数数组"""
    grids = np.meshgrid(*[np.asarray(r, dtype=np.int64) for r in ranges], indexing="ij")
    return [g.ravel() for g in grids]


def ordered_pair_terms(atoms: np.ndarray, n: int, eps: float) -> StencilTerms:
    """原子集合的完整半对和 (ε/2) Σ_i Σ_{0<|i-j|≤n} φ((u_j - u_i)/ε)"""
    if atoms.size == 0:
        return StencilTerms.empty()
    offsets = np.concatenate([-np.arange(1, n + 1), np.arange(1, n + 1)])
    i, off = _index_grid(atoms, offsets)
    return StencilTerms.pairs(i, i + off, 1.0, 0.5 * eps)


def element_cb_terms(mesh: NodalMesh, n: int, elements: np.ndarray, factors: np.ndarray) -> StencilTerms:
    """单元上的 Cauchy-Born 项 ε·factor_k·Φ(z_k)，z_k 为单元平均键长"""
    if elements.size == 0:
        return StencilTerms.empty()
    k, m = _index_grid(elements, np.arange(1, n + 1))
    lengths = mesh.element_lengths[k]
    pos = np.searchsorted(elements, k)
    return StencilTerms.pairs(mesh.element_left[k], mesh.element_right[k], m / lengths,
                              mesh.epsilon * factors[pos])


def qcp_element_terms(mesh: NodalMesh, n: int) -> StencilTerms:
    """单元内的精确对：对每个 m ≤ min(n, h)，共 h+1-m 对，键长均为 m z_k"""
    k, m = _index_grid(np.arange(mesh.n_nodes), np.arange(1, n + 1))
    lengths = mesh.element_lengths[k]
    keep = m <= lengths
    k, m, lengths = k[keep], m[keep], lengths[keep]
    return StencilTerms.pairs(mesh.element_left[k], mesh.element_right[k], m / lengths,
                              mesh.epsilon * (lengths + 1 - m))


def crossing_pair_terms(mesh: NodalMesh, n: int, node_mask: Optional[np.ndarray] = None) -> StencilTerms:
    """
    严格跨越节点的原子对 (α, β)，β - α ≤ n

    每一对只归属于它跨越的第一个节点；node_mask 为 False 的节点上的对被跳过。
    """
    if n < 2:
        return StencilTerms.empty()
    st = [(s, t) for s in range(1, n) for t in range(1, n - s + 1)]
    s_arr = np.array([p[0] for p in st])
    t_arr = np.array([p[1] for p in st])
    k, idx = _index_grid(np.arange(mesh.n_nodes), np.arange(len(st)))
    node = mesh.nodes[k]
    alpha = node - s_arr[idx]
    beta = node + t_arr[idx]
    keep = alpha >= mesh.element_left[k]
    if node_mask is not None:
        keep &= node_mask[k]
    return StencilTerms.pairs(alpha[keep], beta[keep], 1.0, mesh.epsilon)


def qce_terms(mesh: NodalMesh, n: int, exclude: np.ndarray = None) -> StencilTerms:
    """
    QCE：局部原子取 ½(Φ(z_左) + Φ(z_右))，非局部原子取完整半对和

    按单元写作 Σ ε(h_k - ν_k/2)Φ(z_k)，ν_k 为单元落在非局部区域内的端点数。
    """
    local = np.flatnonzero(~mesh.element_is_nonlocal)
    factors = mesh.element_lengths[local] - 0.5 * mesh.element_nonlocal_ends[local]
    atoms = mesh.nonlocal_atoms
    if exclude is not None:
        atoms = np.setdiff1d(atoms, exclude)
    return StencilTerms.concat([
        element_cb_terms(mesh, n, local, factors),
        ordered_pair_terms(atoms, n, mesh.epsilon),
    ])


def qnl_terms(mesh: NodalMesh, n: int) -> StencilTerms:
    """
    QNL：界面内侧 n-1 个准非局部原子与局部区域的相互作用改用 Cauchy-Born

    左侧准非局部原子 q 对 j < i_1 使用 φ(m(u_q - u_{q-1})/ε)，右侧对 j > i_K 使用
    φ(m(u_{q+1} - u_q)/ε)，m = |q - j|。
    """
    if not mesh.has_interface:
        return qce_terms(mesh, n)
    if n < 2:
        raise ModelError("QNL 要求 n ≥ 2（n = 1 时无准非局部原子）")
    left, right, eps = mesh.nonlocal_start, mesh.nonlocal_end, mesh.epsilon
    if mesh.nonlocal_width < 2 * n:
        raise ModelError(f"QNL 要求非局部区域宽度 ≥ 2n = {2 * n}，当前为 {mesh.nonlocal_width}")

    quasi_left = np.arange(left + 1, left + n)
    quasi_right = np.arange(right - n + 1, right)
    offsets = np.concatenate([-np.arange(1, n + 1), np.arange(1, n + 1)])

    parts = [qce_terms(mesh, n, exclude=np.concatenate([quasi_left, quasi_right]))]
    for quasi, is_left in ((quasi_left, True), (quasi_right, False)):
        q, off = _index_grid(quasi, offsets)
        j = q + off
        outside = j < left if is_left else j > right
        parts.append(StencilTerms.pairs(q[~outside], j[~outside], 1.0, 0.5 * eps))
        qo, mo = q[outside], np.abs(off[outside])
        if is_left:
            parts.append(StencilTerms.pairs(qo - 1, qo, mo, 0.5 * eps))
        else:
            parts.append(StencilTerms.pairs(qo, qo + 1, mo, 0.5 * eps))
    return StencilTerms.concat(parts)


def interior_local_nodes(mesh: NodalMesh) -> np.ndarray:
    return np.flatnonzero(~mesh.node_is_nonlocal)


def qcpm_terms(mesh: NodalMesh, n: int) -> StencilTerms:
    """
    QCPm：QCP 去掉跨越局部内节点的原子对，改为该节点处两侧单元的 Cauchy-Born 份额

        ε Σ_{m=2..n} ((m-1)/2)(φ(m z_a) + φ(m z_b))
    """
    local_nodes = interior_local_nodes(mesh)
    if local_nodes.size and n >= 2:
        lengths = mesh.element_lengths
        left_len = lengths[local_nodes]
        right_len = lengths[(local_nodes + 1) % mesh.n_nodes]
        if np.any(left_len < n) or np.any(right_len < n):
            raise ModelError(f"QCPm 要求局部单元长度 ≥ n = {n}")

    parts = [qcp_element_terms(mesh, n),
             crossing_pair_terms(mesh, n, node_mask=mesh.node_is_nonlocal)]
    if local_nodes.size and n >= 2:
        k, m = _index_grid(local_nodes, np.arange(2, n + 1))
        kr = (k + 1) % mesh.n_nodes
        weight = mesh.epsilon * (m - 1) / 2.0
        parts.append(StencilTerms.pairs(mesh.element_left[k], mesh.nodes[k],
                                        m / mesh.element_lengths[k], weight))
        parts.append(StencilTerms.pairs(mesh.element_left[kr], mesh.element_right[kr],
                                        m / mesh.element_lengths[kr], weight))
    return StencilTerms.concat(parts)


def gcr_table_one_terms(mesh: NodalMesh, n: int) -> StencilTerms:
    """
    GCR（Table I 系数）

    n = 2 时为 QCE 加上系数表给出的修正项；n = 3 时在 QCPm 上叠加两个界面处的
    分数系数修正：以左界面 a 为例

        (ε/2)φ((7/3 u_{a-2} - 2u_{a-1} - 1/3 u_{a+1})/ε)
      + (ε/2)φ((5/3 u_{a+1} - u_a - 2/3 u_{a-2})/ε)
      - ε φ((u_{a+1} - u_{a-2})/ε)
    """
    coefficients = GCRCoefficients.table_one(n)
    if not mesh.has_interface:
        return qce_terms(mesh, n)
    if n == 2:
        return StencilTerms.concat([qce_terms(mesh, n), coefficients.brackets(mesh)])

    a, b, eps = mesh.nonlocal_start, mesh.nonlocal_end, mesh.epsilon
    entries = coefficients.entries
    corrections = []
    for sign, base in ((1, a), (-1, b)):
        far, near = base - 2 * sign, base + sign
        # 分数系数为 Cauchy-Born 份额，其余份额取真实位置
        corrections.append(_blended_difference(far, near, entries[(-2, 1)], 0.5 * eps))
        corrections.append(_blended_difference(near, far, entries[(1, -2)], 0.5 * eps))
        corrections.append(StencilTerms.pairs([far], [near], 1.0, -eps))
    return StencilTerms.concat([qcpm_terms(mesh, n)] + corrections)


def _blended_difference(i: int, j: int, cb_share: float, weight: float) -> StencilTerms:
    """weight·φ((u_i - [(1-C)u_j + C(u_i + d(u_{i+s} - u_i))])/ε)，d = |j-i|，s = sgn(j-i)"""
    d = abs(j - i)
    step = 1 if j > i else -1
    return StencilTerms.single(
        [i, i + step, j],
        [1.0 - cb_share + cb_share * d, -cb_share * d, -(1.0 - cb_share)],
        weight,
    )


def gcr_shifted_terms(mesh: NodalMesh, n: int) -> StencilTerms:
    """GCR（平移后的系数表）：QCE 加上 Σ (C̃ - C^QCE)(ε/2)[φ(真实) - φ(Cauchy-Born)]"""
    if not mesh.has_interface or n <= 2:
        return gcr_table_one_terms(mesh, n)
    coefficients = GCRCoefficients.shifted(n)
    return StencilTerms.concat([qce_terms(mesh, n), coefficients.brackets(mesh)])


TERM_BUILDERS = {
    ModelKind.QCE: qce_terms,
    ModelKind.QNL: qnl_terms,
    ModelKind.GCR_TABLE_I: gcr_table_one_terms,
    ModelKind.GCR_SHIFTED: gcr_shifted_terms,
    ModelKind.QCP: lambda mesh, n: StencilTerms.concat([qcp_element_terms(mesh, n),
                                                        crossing_pair_terms(mesh, n)]),
    ModelKind.QCPM: qcpm_terms,
}


# ==================== 能量报告 ====================

def atomistic_report(chain: PeriodicChain, potential: PairPotential,
                     force: Optional[ExternalForce] = None, with_hessian: bool = True) -> EnergyReport:
    """
    全原子周期对势和 ε Σ_i Σ_{m=1..n} φ((u_{i+m} - u_i)/ε) - ε Σ f_i u_i

    直接按键求和，与模板项组装相互独立，用作其它模型的参照。
    """
    n_atoms, n, eps = chain.n_atoms, potential.neighbor_range, chain.epsilon
    if not chain.is_monotone:
        raise InvertedBondError("原子链中出现翻转的键")

    i, m = _index_grid(np.arange(n_atoms), np.arange(1, n + 1))
    j = (i + m) % n_atoms
    w = chain.displacement
    arg = chain.period * m + (w[j] - w[i]) / eps
    value, d1, d2 = potential.evaluate(arg)

    energy = eps * float(np.sum(value))
    gradient = np.bincount(j, weights=d1, minlength=n_atoms) - np.bincount(i, weights=d1, minlength=n_atoms)
    hessian = None
    if with_hessian:
        h = d2 / eps
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        data = np.concatenate([h, h, -h, -h])
        hessian = coo_matrix((data, (rows, cols)), shape=(n_atoms, n_atoms)).tocsr()

    if force is not None:
        _check_force(force, n_atoms)
        energy -= eps * float(np.dot(force.values, chain.positions))
        gradient = gradient - eps * force.values
    return EnergyReport(energy, gradient, hessian)


def _check_force(force: ExternalForce, n_atoms: int):
    if force.n_atoms != n_atoms:
        raise ModelError(f"外力长度 {force.n_atoms} 与原子数 {n_atoms} 不一致")


class CouplingModel:
    """
    指定网格与势函数上的一个耦合模型

    模板项只依赖网格与邻居范围，构造时生成一次，之后对任意构型求值。
    """

    def __init__(self, kind: ModelKind, mesh: NodalMesh, potential: PairPotential):
        self.kind = ModelKind(kind)
        self.mesh = mesh
        self.potential = potential
        self.neighbor_range = potential.neighbor_range
        n = self.neighbor_range

        if self.kind is ModelKind.ATOMISTIC:
            if not mesh.is_full:
                raise ModelError("全原子模型需要每个原子都是节点的网格")
            self.terms = None
            return
        if self.kind is not ModelKind.QCP:
            check_element_lengths(mesh, n)
        self.terms = TERM_BUILDERS[self.kind](mesh, n)
        logger.debug(f"[Model] {self.kind.value}: {self.terms.size} 个模板项，K={mesh.n_nodes}")

    def report(self, config: QCConfiguration, force: Optional[ExternalForce] = None,
               with_hessian: bool = True) -> EnergyReport:
        """
        计算能量、梯度和 Hessian

        :param config: 节点构型
        :param force: 外力，None 表示无外力
        :param with_hessian: 是否组装 Hessian
        """
        mesh = self.mesh
        if config.displacement.size != mesh.n_nodes:
            raise ModelError("构型与网格不匹配")
        if not config.is_monotone:
            raise InvertedBondError("构型中出现翻转的键")

        if self.kind is ModelKind.ATOMISTIC:
            chain = PeriodicChain(config.displacement, config.period)
            return atomistic_report(chain, self.potential, force, with_hessian)

        energy, gradient, hessian = assemble(mesh, config, self.potential, self.terms, with_hessian)
        if force is not None:
            _check_force(force, mesh.n_atoms)
            eps = mesh.epsilon
            op = mesh.operator
            atom_disp = op.apply(config.displacement)
            reference = config.period * eps * np.arange(1, mesh.n_atoms + 1)
            energy -= eps * float(np.dot(force.values, reference + atom_disp))
            gradient = gradient - eps * (
                np.bincount(op.left_index, weights=op.left_weight * force.values, minlength=mesh.n_nodes)
                + np.bincount(op.right_index, weights=op.right_weight * force.values, minlength=mesh.n_nodes)
            )
        return EnergyReport(energy, gradient, hessian)

    def energy(self, config: QCConfiguration, force: Optional[ExternalForce] = None) -> float:
        return self.report(config, force, with_hessian=False).energy


def model_report(kind: ModelKind, mesh: NodalMesh, config: QCConfiguration, potential: PairPotential,
                 force: Optional[ExternalForce] = None) -> EnergyReport:
    return CouplingModel(kind, mesh, potential).report(config, force)


def qce_report(mesh, config, potential, force=None) -> EnergyReport:
    return model_report(ModelKind.QCE, mesh, config, potential, force)


def qnl_report(mesh, config, potential, force=None) -> EnergyReport:
    return model_report(ModelKind.QNL, mesh, config, potential, force)


def gcr_report(mesh, config, potential, force=None, variant: str = "table_one") -> EnergyReport:
    """
    :param variant: table_one | shifted
    """
    kind = {"table_one": ModelKind.GCR_TABLE_I, "shifted": ModelKind.GCR_SHIFTED}.get(variant)
    if kind is None:
        raise ModelError(f"未知的 GCR 变体: {variant}")
    return model_report(kind, mesh, config, potential, force)


def qcp_report(mesh, config, potential, force=None) -> EnergyReport:
    return model_report(ModelKind.QCP, mesh, config, potential, force)


def qcpm_report(mesh, config, potential, force=None) -> EnergyReport:
    return model_report(ModelKind.QCPM, mesh, config, potential, force)


def projected_report(mesh: NodalMesh, config: QCConfiguration, potential: PairPotential,
                     force: Optional[ExternalForce] = None) -> EnergyReport:
    """
    QCP 的定义式：全原子能量作用在重构链上，梯度 Uᵀg，Hessian UᵀHU
    """
    chain = reconstruct(mesh, config)
    full = atomistic_report(chain, potential, force)
    matrix = mesh.operator.matrix()
    return EnergyReport(full.energy, matrix.T @ full.gradient, (matrix.T @ full.hessian @ matrix).tocsr())


def ghost_force(kind: ModelKind, mesh: NodalMesh, z: float, potential: PairPotential) \
        -> Tuple[np.ndarray, float]:
    """
    均匀应变下模型能量的梯度（鬼力）

    :return: (节点残差, 最大范数)
    """
    report = CouplingModel(kind, mesh, potential).report(uniform_config(mesh, z))
    return report.gradient, report.residual
