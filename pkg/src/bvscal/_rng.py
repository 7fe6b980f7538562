import numpy as np


def generator(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream ``key`` under master ``seed``.

    Streams with different keys are independent, so a sub-task draws the
    same numbers no matter which other sub-tasks ran before it.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
