"""
模板项组装

所有耦合模型的能量都写成一组模板项之和::

    weight · φ( Σ_a λ_a u_{α_a} / ε )

其中 α_a 为任意整数原子编号（按周期折回），u_α 通过表示向量由节点位移得到。
每一项对梯度贡献 (weight/ε) φ' c，对 Hessian 贡献 (weight/ε²) φ'' c cᵀ，
c = Σ_a λ_a U_{α_a} 为该项在节点上的系数行。
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from ..models.chain_model import NodalMesh, QCConfiguration
from ..models.errors import InvertedBondError, PotentialDomainError
from .potential import PairPotential

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StencilTerms:
    atoms: np.ndarray     # (T, W) 原子编号
    coeffs: np.ndarray    # (T, W) 系数 λ，每行之和为 0
    weights: np.ndarray   # (T,) 权重

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.int64))
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.shape != coeffs.shape or weights.shape != (atoms.shape[0],):
            raise ValueError(f"模板项形状不一致: atoms={atoms.shape}, coeffs={coeffs.shape}, "
                             f"weights={weights.shape}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def width(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def pairs(cls, left, right, scale, weights) -> "StencilTerms":
        """两原子项 weight · φ(scale·(u_right - u_left)/ε)"""
        left = np.asarray(left, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        scale = np.broadcast_to(np.asarray(scale, dtype=float), left.shape)
        weights = np.broadcast_to(np.asarray(weights, dtype=float), left.shape)
        return cls(np.stack([left, right], axis=1), np.stack([-scale, scale], axis=1), weights.copy())

    @classmethod
    def single(cls, atoms: Sequence[int], coeffs: Sequence[float], weight: float) -> "StencilTerms":
        return cls(np.array([atoms]), np.array([coeffs]), np.array([weight]))

    @staticmethod
    def empty(width: int = 2) -> "StencilTerms":
        return StencilTerms(np.zeros((0, width), dtype=np.int64), np.zeros((0, width)), np.zeros(0))

    def scaled(self, factor: float) -> "StencilTerms":
        return StencilTerms(self.atoms, self.coeffs, self.weights * factor)

    @staticmethod
    def concat(parts: List["StencilTerms"]) -> "StencilTerms":
        """拼接不同宽度的模板项，窄的补零系数"""
        parts = [p for p in parts if p.size]
        if not parts:
            return StencilTerms.empty()
        width = max(p.width for p in parts)
        atoms, coeffs = [], []
        for p in parts:
            pad = width - p.width
            atoms.append(np.pad(p.atoms, ((0, 0), (0, pad)), mode="edge"))
            coeffs.append(np.pad(p.coeffs, ((0, 0), (0, pad))))
        return StencilTerms(np.vstack(atoms), np.vstack(coeffs),
                            np.concatenate([p.weights for p in parts]))


def stencil_arguments(mesh: NodalMesh, config: QCConfiguration, terms: StencilTerms) \
        -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    计算每一项的约化间距及其节点系数行

    :return: (arg, node_cols, node_coeffs)，后两者形状为 (T, 2W)
    """
    op = mesh.operator
    atoms, lam = terms.atoms, terms.coeffs
    base = (atoms - 1) % mesh.n_atoms

    li, ri = op.left_index[base], op.right_index[base]
    lw, rw = op.left_weight[base], op.right_weight[base]
    w = config.displacement
    atom_disp = lw * w[li] + rw * w[ri]

    # 参考晶格部分以整数差计算，避免大编号下的舍入
    rel = atoms - atoms[:, :1]
    arg = config.period * np.sum(lam * rel, axis=1) + np.sum(lam * atom_disp, axis=1) / mesh.epsilon

    cols = np.concatenate([li, ri], axis=1)
    row_coeffs = np.concatenate([lam * lw, lam * rw], axis=1)
    return arg, cols, row_coeffs


def assemble(mesh: NodalMesh, config: QCConfiguration, potential: PairPotential,
             terms: StencilTerms, with_hessian: bool = True) -> Tuple[float, np.ndarray, csr_matrix]:
    """
    组装能量、梯度与 Hessian

    :param mesh: 网格
    :param config: 节点构型
    :param potential: 对势
    :param terms: 模板项
    :param with_hessian: 为 False 时只返回能量与梯度，Hessian 为 None
    :return: (energy, gradient, hessian)
    """
    n_nodes = mesh.n_nodes
    if terms.size == 0:
        hess = csr_matrix((n_nodes, n_nodes)) if with_hessian else None
        return 0.0, np.zeros(n_nodes), hess

    arg, cols, row_coeffs = stencil_arguments(mesh, config, terms)
    try:
        value, d1, d2 = potential.evaluate(arg)
    except PotentialDomainError as e:
        raise InvertedBondError(f"构型中出现零长度键: {e}") from e

    eps = mesh.epsilon
    weights = terms.weights
    energy = float(np.dot(weights, value))

    gscale = weights * d1 / eps
    gradient = np.bincount(cols.ravel(), weights=(gscale[:, None] * row_coeffs).ravel(),
                           minlength=n_nodes)

    hessian = None
    if with_hessian:
        hscale = weights * d2 / (eps * eps)
        width = cols.shape[1]
        data = hscale[:, None, None] * row_coeffs[:, :, None] * row_coeffs[:, None, :]
        rows = np.broadcast_to(cols[:, :, None], (cols.shape[0], width, width))
        columns = np.broadcast_to(cols[:, None, :], (cols.shape[0], width, width))
        hessian = coo_matrix((data.ravel(), (rows.ravel(), columns.ravel())),
                             shape=(n_nodes, n_nodes)).tocsr()
    return energy, gradient, hessian
