"""Kernel-driven locality-sensitive hashing over Z_2 and Z_q."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import DimensionError
from .features import FeatureBank, draw_features, feature_map, projections
from .measure import ParticleEnsemble, RandomSource
from .objective import KernelUnderMeasure


@dataclass(frozen=True, eq=False)
class HashCode:
    symbols: np.ndarray
    alphabet: int = 2

    def __post_init__(self):
        s = np.asarray(self.symbols).astype(np.int64).reshape(-1)
        if self.alphabet < 2 or s.size and (s.min() < 0 or s.max() >= self.alphabet):
            raise ValueError(f"symbols must lie in [0, {self.alphabet})")
        object.__setattr__(self, "symbols", s)

    def __len__(self):
        return self.symbols.size


@dataclass(frozen=True, eq=False)
class BinaryHashFamily:
    thresholds: np.ndarray
    bank: FeatureBank  # frequencies and phases, one per bit

    @property
    def bits(self) -> int:
        return self.thresholds.size


@dataclass(frozen=True, eq=False)
class QaryHashFamily:
    alphabet: int
    bank: FeatureBank
    weights: np.ndarray  # (code length, N)
    offsets: np.ndarray  # (code length,)
    normalized: bool = True

    @property
    def code_length(self) -> int:
        return self.offsets.size


def binary_family(ensemble: ParticleEnsemble, bits: int, dimension: int,
                  rng: RandomSource) -> BinaryHashFamily:
    bank = draw_features(ensemble, bits, dimension, rng)
    t = rng.uniform(-1.0, 1.0, size=bits)
    return BinaryHashFamily(t, bank)


def binary_codes(family: BinaryHashFamily, x) -> np.ndarray:
    """Bit matrix for a batch of rows (or a single vector); 1 where t + cos(.) >= 0."""
    c = np.cos(projections(family.bank, x))
    return (family.thresholds + c >= 0).astype(np.uint8)


def binary_hash(family: BinaryHashFamily, x) -> HashCode:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("binary_hash takes one vector; use binary_codes for batches", "lsh")
    return HashCode(binary_codes(family, x), 2)


def qary_family(ensemble: ParticleEnsemble, alphabet: int, code_length: int, features: int,
                dimension: int, rng: RandomSource, normalized: bool = True) -> QaryHashFamily:
    """``normalized`` uses the sqrt(2/N)-scaled feature map; otherwise raw cosines."""
    if alphabet < 2:
        raise ValueError("alphabet must be at least 2")
    bank = draw_features(ensemble, features, dimension, rng)
    w = rng.standard_normal((code_length, features))
    t = rng.uniform(0.0, alphabet, size=code_length)
    return QaryHashFamily(int(alphabet), bank, w, t, normalized)


def _qary_features(family: QaryHashFamily, x):
    if family.normalized:
        return feature_map(family.bank, x)
    return np.cos(projections(family.bank, x))


def qary_codes(family: QaryHashFamily, x) -> np.ndarray:
    phi = _qary_features(family, x)
    z = phi @ family.weights.T + family.offsets
    return np.mod(np.ceil(z / family.alphabet), family.alphabet).astype(np.int64)


def qary_hash(family: QaryHashFamily, x) -> HashCode:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("qary_hash takes one vector; use qary_codes for batches", "lsh")
    return HashCode(qary_codes(family, x), family.alphabet)


def _pair(a, b):
    if isinstance(a, HashCode) and isinstance(b, HashCode):
        if a.alphabet != b.alphabet:
            raise ValueError("codes use different alphabets")
        sa, sb = a.symbols, b.symbols
    else:
        sa, sb = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    if sa.shape[-1] != sb.shape[-1]:
        raise DimensionError("codes differ in length", "lsh")
    return sa, sb


def hamming_distance(a, b) -> int:
    sa, sb = _pair(a, b)
    return int(np.count_nonzero(sa != sb))


def lee_distance(a, b, q: int) -> int:
    sa, sb = _pair(a, b)
    if sa.size and (min(sa.min(), sb.min()) < 0 or max(sa.max(), sb.max()) >= q):
        raise ValueError(f"symbols must lie in [0, {q})")
    return int(np.minimum(np.mod(sa - sb, q), np.mod(sb - sa, q)).sum())


def pairwise_code_distances(queries: np.ndarray, database: np.ndarray, q: int = 2) -> np.ndarray:
    """Hamming (q == 2) or Lee distances between every query row and database row."""
    queries = np.atleast_2d(queries).astype(np.int64)
    database = np.atleast_2d(database).astype(np.int64)
    if q == 2:
        # counting mismatches through inner products keeps memory at (m, n)
        a, b = queries, database
        return a @ (1 - b).T + (1 - a) @ b.T
    out = np.empty((queries.shape[0], database.shape[0]), dtype=np.int64)
    for i, row in enumerate(queries):
        d = np.mod(row - database, q)
        out[i] = np.minimum(d, q - d).sum(axis=1)
    return out


class SeriesValue(NamedTuple):
    value: float
    tail_bound: float


def collision_curve_hK(k, x, y, terms: int = 10_000) -> SeriesValue:
    """Expected fraction of differing bits: (8/pi^2) sum_{m>=1} (1 - K(m(x-y))) / (4m^2 - 1).

    The m = 0 term vanishes. Past ``terms`` the kernel part is dropped and the
    constant part is summed exactly (sum_{m>T} 1/(4m^2 - 1) = 1/(2(2T + 1))),
    so only the neglected kernel terms remain; ``tail_bound`` bounds them by
    4 / (pi^2 (2T + 1)) times the largest exp(-xi (T+1)^2 |x-y|^2) over xi > 0.
    """
    if terms < 1:
        raise ValueError("terms must be at least 1")
    kern = k if isinstance(k, KernelUnderMeasure) else KernelUnderMeasure(k)
    d2 = float(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))
    xi = kern.ensemble.particles
    if d2 == 0.0:
        return SeriesValue(0.0, 0.0)
    m = np.arange(1, terms + 1, dtype=float)
    value = 0.0
    # chunk over m to bound memory for large ensembles
    step = max(1, 2_000_000 // max(xi.size, 1))
    for s in range(0, terms, step):
        mm = m[s:s + step]
        kv = np.exp(-np.multiply.outer(mm * mm * d2, xi)).mean(axis=1)
        value += float(np.sum((1.0 - kv) / (4.0 * mm * mm - 1.0)))
    # particles at zero give K = 1 for every m and contribute nothing beyond T
    live = np.count_nonzero(xi > 0) / xi.size
    tail = 1.0 / (2.0 * (2 * terms + 1))
    value += live * tail
    pos = xi[xi > 0]
    worst = float(np.exp(-pos.min() * (terms + 1) ** 2 * d2)) if pos.size else 0.0
    return SeriesValue(8.0 / np.pi ** 2 * value, 8.0 / np.pi ** 2 * tail * worst)


def psi_q(u: float, q: int, tolerance: float = 1e-12) -> float:
    """Collision probability of one q-ary symbol when the kernel value is ``u``.

    Integrates the half-normal density of |<w, phi(x) - phi(y)>| (variance
    2(1 - u)) against the no-wrap collision chance (1 - s/q).
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    if u >= 1.0:
        return 1.0
    a = 1.0 - u
    c = 1.0 / np.sqrt(np.pi * a)
    f = lambda s: c * np.exp(-s * s / (4.0 * a)) * (1.0 - s / q)
    # the density is concentrated within a few standard deviations of 0
    spread = min(float(q), 40.0 * np.sqrt(a))
    val, _ = integrate.quad(f, 0.0, spread, epsabs=tolerance, epsrel=tolerance, limit=200)
    if spread < q:
        val += integrate.quad(f, spread, q, epsabs=tolerance, limit=200)[0]
    return float(val)


def psi_q_closed_form(u: float, q: int) -> float:
    """Same integral in closed form via erf."""
    if u >= 1.0:
        return 1.0
    a = 1.0 - u
    r = 2.0 * np.sqrt(a)
    return float(special.erf(q / r) - r / (q * np.sqrt(np.pi)) * (-np.expm1(-q * q / (r * r))))


def qary_collision_probability(u: float, q: int, wraps: int = 50) -> float:
    """Exact single-symbol collision chance including wrap-around modulo q.

    Symbols also coincide when the bucket indices differ by a multiple of q,
    i.e. when the projection gap is near q^2, 2q^2, ... These add to psi_q.
    """
    if u >= 1.0:
        return 1.0
    a = 1.0 - u
    c = 1.0 / np.sqrt(np.pi * a)
    f = lambda s: c * np.exp(-s * s / (4.0 * a))
    total = psi_q(u, q)
    for j in range(1, wraps + 1):
        mid = j * q * q
        g = lambda s, mid=mid: f(s) * (1.0 - abs(s - mid) / q)
        part = integrate.quad(g, mid - q, mid + q, points=[mid], limit=100)[0]
        total += part
        if part < 1e-16:
            break
    return float(total)


_MAGIC = b"SKLH"


def save_codes(path, codes: np.ndarray, q: int, seed: int) -> None:
    """Binary layout: magic, then little-endian int64 (n, q, seed, rows), then packed rows.

    Binary codes are bit-packed; q-ary codes use one byte per symbol when q <= 256
    and two bytes otherwise.
    """
    codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
    if q > 65536:
        raise ValueError("code files hold alphabets up to 65536 symbols")
    rows, n = codes.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4q", n, q, seed, rows))
        if q == 2:
            fh.write(np.packbits(codes.astype(np.uint8), axis=1).tobytes())
        elif q <= 256:
            fh.write(codes.astype(np.uint8).tobytes())
        else:
            fh.write(codes.astype("<u2").tobytes())


def load_codes(path):
    """Returns (codes, q, seed)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a code file")
        n, q, seed, rows = struct.unpack("<4q", fh.read(32))
        raw = fh.read()
    if q == 2:
        width = (n + 7) // 8
        packed = np.frombuffer(raw, dtype=np.uint8).reshape(rows, width)
        codes = np.unpackbits(packed, axis=1)[:, :n]
    elif q <= 256:
        codes = np.frombuffer(raw, dtype=np.uint8).reshape(rows, n)
    else:
        codes = np.frombuffer(raw, dtype="<u2").reshape(rows, n)
    return codes.astype(np.int64), int(q), int(seed)
