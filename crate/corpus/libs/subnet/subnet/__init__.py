from .network import Network

__version__ = "1.0.0"
