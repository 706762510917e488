from torch.optim import SGD


class ModelTrainer:
    def __init__(self, model, corpus=None):
        self.model = model
        self.corpus = corpus

    def train(self, learning_rate: float = 0.1, max_epochs: int = 1):
        # Training metadata lands on the model outside of its class definition.
        self.model.model_card = {
            "training_parameters": {
                "optimizer": SGD,
                "learning_rate": learning_rate,
                "max_epochs": max_epochs,
            },
            "reference_optimizer": SGD,
        }
        return self.model
