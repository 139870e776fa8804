"""Pure numpy versions of the compiled kernels, same signatures."""
import numpy as np


def langevin_pair_steps(xi, d2, yy, noise, eta, scale, beta, gamma, lower, upper, work):
    n = xi.shape[0]
    for m in range(d2.shape[0]):
        dd = d2[m]
        np.exp(-xi * dd, out=work)
        kbar = work.sum() / n
        coef = eta[m] * scale * 2.0 / n * (yy[m] - kbar / gamma) * dd
        xi -= coef * work
        xi += np.sqrt(2.0 * eta[m] / beta) * noise[m]
        np.clip(xi, lower, upper, out=xi)
