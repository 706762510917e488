from typing import Dict, List


class Dictionary:
    def __init__(self, add_unk: bool = True):
        self.item2idx: Dict[bytes, int] = {}
        self.idx2item: List[bytes] = []
        self.add_unk = add_unk
        self.span_labels = False

    def add_item(self, item: str) -> int:
        key = item.encode("utf-8")
        if key not in self.item2idx:
            self.item2idx[key] = len(self.idx2item)
            self.idx2item.append(key)
        return self.item2idx[key]
