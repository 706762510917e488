from collections import OrderedDict
from typing import Dict, List, Optional

from .layers import Activation, Base


class Network:
    def __init__(self, layers: List[Base]):
        self.layers = layers
        self.registry: "OrderedDict[str, Base]" = OrderedDict()
        self.meta: Optional[Dict[str, Activation]] = None
        self.version = 2

    def register(self, name: str, layer: Base) -> None:
        self.registry[name] = layer
