import numpy as np


def uniform(n, d=2, seed=0):
    return np.random.Generator(np.random.Philox(seed)).random((n, d))


def grid(n_side, d=2):
    g = (np.arange(n_side) + 0.5) / n_side
    return np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)


# criterion number -> (passed, detail); filled by test_acceptance, printed at session end
ACCEPTANCE = {}
