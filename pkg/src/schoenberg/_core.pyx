# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop for unconstrained particle updates."""
from libc.math cimport exp, sqrt
import numpy as np


def langevin_pair_steps(double[::1] xi, const double[::1] d2, const double[::1] yy,
                        const double[:, ::1] noise, const double[::1] eta,
                        double scale, double beta, double gamma, double lower, double upper,
                        double[::1] work):
    """Apply len(d2) projected noisy steps to xi in place.

    Step m uses pair squared distance d2[m], label product yy[m], noise row m
    and step size eta[m]. ``work`` is scratch of length N.
    """
    cdef Py_ssize_t steps = d2.shape[0]
    cdef Py_ssize_t n = xi.shape[0]
    cdef Py_ssize_t m, k
    cdef double dd, kbar, coef, sigma, v, inv_n = 1.0 / n
    for m in range(steps):
        dd = d2[m]
        sigma = sqrt(2.0 * eta[m] / beta)
        kbar = 0.0
        for k in range(n):
            work[k] = exp(-xi[k] * dd)
            kbar += work[k]
        kbar *= inv_n
        coef = eta[m] * scale * 2.0 * inv_n * (yy[m] - kbar / gamma) * dd
        for k in range(n):
            v = xi[k] - coef * work[k] + sigma * noise[m, k]
            if v < lower:
                v = lower
            elif v > upper:
                v = upper
            xi[k] = v
