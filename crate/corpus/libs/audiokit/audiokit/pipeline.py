from typing import Dict, Optional


class Segmentation:
    def __init__(self, step: float = 0.1, min_duration: float = 0.5):
        self.step = step
        self.min_duration = min_duration
        self.onset = 0.5
        self.offset = 0.5


class Pipeline:
    def __init__(self, sample_rate: int = 16000):
        self.sample_rate = sample_rate
        self.segmentation = Segmentation()
        self.params: Dict[str, float] = {"threshold": 0.7}
        self.device: Optional[str] = None
