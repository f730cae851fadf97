class QCError(Exception):
    """qc_chain 所有异常的基类"""


class PotentialDomainError(QCError, ValueError):
    """势函数在给定间距处无定义（例如 z = 0 或低于表格下界）"""


class MeshError(QCError, ValueError):
    """网格参数不合法"""


class ModelError(QCError, ValueError):
    """耦合模型在当前网格或势函数下无定义"""


class InvertedBondError(ModelError):
    """构型出现翻转或零长度的键"""


class SolverError(QCError, RuntimeError):
    """Newton 迭代失败"""

    def __init__(self, message: str, iteration: int = -1):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(QCError, ValueError):
    """配置或命令行参数不合法"""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key
