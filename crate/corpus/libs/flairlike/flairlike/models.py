from torch import nn

from .data import Dictionary
from .embeddings import WordEmbeddings


class SequenceTagger(nn.Module):
    def __init__(self, embeddings: WordEmbeddings, tag_dictionary: Dictionary, tag_type: str):
        super().__init__()
        self.embeddings = embeddings
        self.tag_dictionary = tag_dictionary
        self.tag_type = tag_type
        self.linear = nn.Linear(embeddings.embedding.embedding_dim, len(tag_dictionary.idx2item))

    def forward(self, token_ids):
        return self.linear(self.embeddings.embedding(token_ids))
