import os
from dataclasses import dataclass, fields
from typing import Any, Optional

from dotenv import load_dotenv
from langchain_core.runnables import RunnableConfig

load_dotenv()

ENV_PREFIX = "FIELDLAB_"


def _coerce(raw: Any, kind: type) -> Any:
    if not isinstance(raw, str) or kind is str:
        return raw
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return kind(raw)


@dataclass(kw_only=True)
class Configuration:
    """The configurable fields for the laboratory."""
    workers: int = 1
    output_dir: str = "reports"
    log_level: str = "INFO"
    flat_waves: int = 256
    space_waves: int = 512
    hyperbolic_waves: int = 256
    hyperbolic_r_max: float = 2.0
    hyperbolic_radius_bound: float = 4.0
    certify_tolerance: float = 0.005
    refinement_stride: int = 10
    rel_tolerance: float = 0.03
    png: bool = False

    @classmethod
    def from_runnable_config(
        cls, config: Optional[RunnableConfig] = None
    ) -> "Configuration":
        """Create a Configuration instance from a RunnableConfig."""
        configurable = (
            config["configurable"] if config and "configurable" in config else {}
        )
        types = {"int": int, "float": float, "bool": bool, "str": str}
        values: dict[str, Any] = {}
        for f in fields(cls):
            if not f.init:
                continue
            raw = configurable.get(f.name, os.environ.get(f"{ENV_PREFIX}{f.name.upper()}"))
            if raw is None:
                continue
            kind = f.type if isinstance(f.type, type) else types.get(str(f.type), str)
            values[f.name] = _coerce(raw, kind)
        return cls(**values)
