import torch

from flairlike.data import Dictionary


class WordEmbeddings(torch.nn.Module):
    def __init__(self, vocab: Dictionary, dim: int):
        super().__init__()
        self.vocab = vocab
        self.embedding = torch.nn.Embedding(len(vocab.idx2item) + 1, dim)
        self.name = "glove"
        self.static_embeddings = True
