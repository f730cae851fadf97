import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

DEFAULT_MODELS = ["qce", "qnl", "gcr", "qcp", "qcpm"]


@dataclass
class ExperimentParams:
    n_atoms: int = 2000                  # 周期内原子数 N
    cutoff_radius: float = 3.25          # 截断半径，n = floor(cutoff_radius)
    potential: str = "lennard_jones"     # lennard_jones | table
    potential_table: str = ""            # potential=table 时的 CSV 路径
    models: List[str] = field(default_factory=lambda: list(DEFAULT_MODELS))
    m_list: List[int] = field(default_factory=lambda: [8, 10, 12, 14, 16, 18, 20])
    dof_list: List[int] = field(default_factory=lambda: [16, 24, 32, 48, 64, 96, 128])
    bulk_m_max: int = 0                  # 测试 2 中非局部宽度的扫描上限，0 表示不设上限
    residual_tolerance: float = 1e-12
    max_iterations: int = 50
    seed: int = 0                        # 仅用于 fd-check 的随机扰动
    output_dir: str = "output"
    workers: int = 1                     # 并行求解的线程数
    debug_mode: bool = False

    @property
    def neighbor_range(self) -> int:
        return int(math.floor(self.cutoff_radius))

    def to_metadata(self) -> Dict[str, Any]:
        data = asdict(self)
        data["neighbor_range"] = self.neighbor_range
        return data


@dataclass
class StudyRow:
    model: str                 # 模型名
    param: int                 # 测试 1 为 m，测试 2 为目标自由度
    dof: int                   # 实际自由度 K - 1
    m: int                     # 非局部区域宽度
    error: float               # W^{1,∞} 误差，失败时为 nan
    iterations: int            # Newton 步数
    converged: bool = True

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if not math.isfinite(self.error):
            data["error"] = None
        return data


@dataclass
class StudyTable:
    study: str                             # localized | bulk
    rows: List[StudyRow] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def filter(self, model: str) -> List[StudyRow]:
        return [r for r in self.rows if r.model == model]

    @property
    def models(self) -> List[str]:
        seen = []
        for r in self.rows:
            if r.model not in seen:
                seen.append(r.model)
        return seen
