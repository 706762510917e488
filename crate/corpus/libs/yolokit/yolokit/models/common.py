class SiLU:
    inplace: bool = False


class Conv:
    def __init__(self, c1: int, c2: int, k: int = 1):
        self.c1 = c1
        self.c2 = c2
        self.k = k
        self.act = SiLU()


class Bottleneck:
    def __init__(self, c1: int, c2: int, shortcut: bool = True):
        self.cv1 = Conv(c1, c2, 1)
        self.cv2 = Conv(c2, c2, 3)
        self.add = shortcut and c1 == c2
