"""Pure-numpy reference versions of the compiled kernels."""
import numpy as np


def optimistic_scores(x, centers, gram_inv, sqrt_beta, out):
    quad = np.einsum("i,kij,j->k", x, gram_inv, x)
    np.maximum(quad, 0.0, out=quad)
    np.multiply(sqrt_beta, np.sqrt(quad), out=out)
    out += centers @ x
    return out


def sherman_morrison(gram_inv, x):
    u = gram_inv @ x
    denom = 1.0 + float(x @ u)
    if denom < 1e-12:
        return denom
    gram_inv -= np.outer(u, u) / denom
    return denom
