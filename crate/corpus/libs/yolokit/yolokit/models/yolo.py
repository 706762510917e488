from typing import List, Union

from yolokit.models.common import Bottleneck, Conv


class Detect:
    def __init__(self, nc: int = 80):
        self.nc = nc
        self.stride: List[float] = [8.0, 16.0, 32.0]


class DetectionModel:
    def __init__(self, cfg: str = "yolov5n.yaml", nc: int = 80):
        self.yaml = {"cfg": cfg, "nc": nc}
        self.model: List[Union[Conv, Bottleneck, Detect]] = []
        self.names = [str(i) for i in range(nc)]
