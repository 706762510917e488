from typing import Optional, Tuple


class Activation:
    def __init__(self, kind: str = "relu"):
        self.kind = kind


class Base:
    units: int

    def __init__(self, units: int):
        self.units = units
        self.activation: Optional[Activation] = None
        self.kernel_data = b""


class Dense(Base):
    def __init__(self, units: int, use_bias: bool = True):
        super().__init__(units)
        self.use_bias = use_bias


class Conv(Base):
    def __init__(self, units: int, kernel: Tuple[int, int] = (3, 3)):
        super().__init__(units)
        self.kernel = kernel
        self.padding = "same"


class DepthwiseConv(Conv):
    def __init__(self, units: int, multiplier: int = 1):
        super().__init__(units)
        self.multiplier = multiplier


class Mixed(Dense, Conv):
    """Diamond: reaches Base through both Dense and Conv."""

    def __init__(self, units: int):
        Dense.__init__(self, units)
        self.kernel = (1, 1)
