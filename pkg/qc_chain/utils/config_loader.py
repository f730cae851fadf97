import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Union

from ..models.errors import ConfigError
from ..models.study_model import ExperimentParams

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "_conf_schema.json"

_TYPE_CHECKS = {
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
    "list": lambda v: isinstance(v, list),
}


def load_schema(path: Union[str, Path] = SCHEMA_PATH) -> Dict[str, Dict[str, Any]]:
    return json.loads(Path(path).read_text(encoding="utf-8-sig"))


def _check_value(key: str, value: Any, rule: Dict[str, Any]) -> Any:
    kind = rule.get("type", "string")
    if not _TYPE_CHECKS[kind](value):
        raise ConfigError(f"配置项 {key} 的类型应为 {kind}，当前为 {value!r}", key)
    if kind == "float":
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"配置项 {key} 必须为有限数", key)
    if "min" in rule and value < rule["min"]:
        raise ConfigError(f"配置项 {key} = {value} 小于下限 {rule['min']}", key)
    if "max" in rule and value > rule["max"]:
        raise ConfigError(f"配置项 {key} = {value} 大于上限 {rule['max']}", key)
    options = rule.get("options")
    if options:
        items = value if kind == "list" else [value]
        for item in items:
            if item not in options:
                raise ConfigError(f"配置项 {key} 的取值 {item!r} 不在 {options} 中", key)
    return value


def _check_lists(params: ExperimentParams):
    n = params.neighbor_range
    for key, values in (("m_list", params.m_list), ("dof_list", params.dof_list)):
        if not values or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise ConfigError(f"配置项 {key} 必须是非空整数列表", key)
    for m in params.m_list:
        if m % 2:
            raise ConfigError(f"m must be even: 配置项 m_list 含有奇数 {m}", "m_list")
        if m < 2 * n + 2:
            raise ConfigError(f"配置项 m_list 中的 {m} 小于 2n+2 = {2 * n + 2}", "m_list")
    for dof in params.dof_list:
        if not 1 <= dof <= params.n_atoms - 1:
            raise ConfigError(f"配置项 dof_list 中的 {dof} 超出 [1, N-1]", "dof_list")
    if params.n_atoms % 2:
        raise ConfigError(f"n_atoms 必须为偶数，当前为 {params.n_atoms}", "n_atoms")
    if params.potential == "table" and not params.potential_table:
        raise ConfigError("potential = table 时必须提供 potential_table", "potential_table")


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Any]] = None) -> ExperimentParams:
    """
    读取 JSON 配置并按 _conf_schema.json 校验

    :param path: 配置文件路径，None 表示全部使用默认值
    :param overrides: 命令行覆盖项，值为 None 的键被忽略
    :return: ExperimentParams
    """
    schema = load_schema()
    raw: Dict[str, Any] = {}
    if path is not None:
        cfg_path = Path(path)
        if not cfg_path.exists():
            raise ConfigError(f"配置文件不存在: {cfg_path}", "config")
        try:
            raw = json.loads(cfg_path.read_text(encoding="utf-8-sig"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法的 JSON: {e}", "config") from e
        if not isinstance(raw, dict):
            raise ConfigError("配置文件顶层必须是对象", "config")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    values = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"未知的配置项: {key}", key)
        values[key] = _check_value(key, value, schema[key])

    params = ExperimentParams(**values)
    _check_lists(params)
    logger.debug(f"[Config] 生效配置: {params.to_metadata()}")
    return params
