from dataclasses import dataclass, field
from typing import List


@dataclass
class ModelConfig:
    hidden: int = 4
    dropout: float = 0.1
    labels: List[str] = field(default_factory=list)
