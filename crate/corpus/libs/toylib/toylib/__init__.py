"""A toy model library whose tensors rebuild themselves through a loader function."""

__version__ = "0.3.1"


class Tensor:
    def __init__(self, data: bytes, shape: tuple):
        self.data = data
        self.shape = shape

    def __reduce__(self):
        # Unpickling calls read_weights_to_tensor(Tensor, data, shape).
        return (read_weights_to_tensor, (Tensor, self.data, self.shape))


def read_weights_to_tensor(cls, data, shape):
    return cls(data, shape)


class Model:
    def __init__(self, name: str):
        self.name = name
        self.weights = Tensor(bytes(16), (2, 2))
        self.head = Linear(2, 2)
        self.config = ModelConfig()

    def forward(self, x):
        return self.head.forward(x)


from .layers import Linear  # noqa: E402
from .config import ModelConfig  # noqa: E402
