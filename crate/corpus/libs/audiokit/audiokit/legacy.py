class TaskSpec:
    """Unused. Kept so that checkpoints written by audiokit < 2.0 still unpickle."""

    pass
