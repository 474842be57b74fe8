"""Counter-based random numbers for reproducible, embarrassingly parallel paths.

Every variate is a pure function of ``(root_seed, stream_id, counter)``:

* bits come from Philox4x32-10 (Salmon et al., "Parallel random numbers: as
  easy as 1, 2, 3", SC'11) keyed by the 64-bit ``root_seed``;
* the 128-bit Philox counter is laid out as ``(c0, c1, c2, c3)`` with
  ``(c2, c3) = stream_id`` (low, high 32-bit words) and ``(c0, c1)`` a block
  index whose top bits carry a domain tag (see ``DOMAIN_*``);
* one Philox block yields four 32-bit words, i.e. two 53-bit uniforms on the
  open interval (0, 1);
* normals are obtained by the inverse CDF using Wichura's rational
  approximation AS241 (PPND16, relative accuracy about 1e-16).

The mapping (root_seed, stream_id) -> key/counter is the identity on the two
64-bit integers, hence injective. Because no rejection step is involved, the
value of draw ``i`` on stream ``s`` never depends on how many other draws were
made, on batch sizes, or on the number of worker threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85

# Domain tags live in the high counter word c1.
DOMAIN_INCREMENT = 0x00000000  # c1 = high bits of block index, < 2**30
DOMAIN_BRIDGE = 0x80000000  # c1 = DOMAIN_BRIDGE | n_intervals of the grid being refined
DOMAIN_DERIVE = 0xC0000000  # seed derivation, stream words zero
DOMAIN_UNIFORM = 0x40000000  # auxiliary uniforms (spot checks, samplers)

U64 = (1 << 64) - 1
_u = np.uint64


@dataclass(frozen=True)
class SeedSpec:
    """Root seed plus a stream index.

    Batched operations use streams ``stream_id, stream_id + 1, ...`` for their
    paths, so path ``i`` of a batch is reproducible on its own via
    ``SeedSpec(root_seed, stream_id + i)``.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.root_seed <= U64:
            raise ValueError(f"root_seed must fit in 64 bits, got {self.root_seed}")
        if not 0 <= self.stream_id <= U64:
            raise ValueError(f"stream_id must be a non-negative 64-bit integer, got {self.stream_id}")

    def streams(self, n: int) -> np.ndarray:
        if self.stream_id + n - 1 > U64:
            raise ValueError("stream range overflows 64 bits")
        return np.arange(n, dtype=np.uint64) + np.uint64(self.stream_id)

    def child(self, label: int) -> "SeedSpec":
        """Fresh root seed derived from this root and ``label`` (stream reset to 0)."""
        return SeedSpec(derive_seed(self.root_seed, label), 0)


def _mulhilo(m, x):
    p = m * x
    return p >> np.uint64(32), p & MASK32


def philox4x32(counter, key):
    """Philox4x32-10 on broadcast arrays.

    ``counter`` is a 4-tuple of uint64 arrays holding 32-bit words, ``key`` a
    pair of python ints (32-bit words). Returns the four output words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(10):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0
    return c0, c1, c2, c3


def _key(root_seed: int):
    return root_seed & 0xFFFFFFFF, (root_seed >> 32) & 0xFFFFFFFF


def _words_to_uniform(hi, lo):
    # 53 bits, midpoint offset keeps the result strictly inside (0, 1)
    bits = ((hi << np.uint64(21)) | (lo >> np.uint64(11))).astype(np.float64)
    return (bits + 0.5) * 2.0**-53


def uniform_blocks(root_seed: int, streams, blocks, domain: int = DOMAIN_INCREMENT) -> np.ndarray:
    """Uniforms in (0,1) for every (stream, block) pair.

    ``streams`` has shape (S,), ``blocks`` shape (B,); result shape (S, 2*B)
    where columns 2b and 2b+1 come from block ``blocks[b]``.
    """
    streams = np.asarray(streams, dtype=np.uint64)[:, None]
    blocks = np.asarray(blocks, dtype=np.uint64)[None, :]
    c0 = blocks & MASK32
    c1 = (blocks >> np.uint64(32)) | np.uint64(domain)
    c2 = streams & MASK32
    c3 = streams >> np.uint64(32)
    c0, c1, c2 = np.broadcast_arrays(c0, c1, c2)
    c3 = np.broadcast_to(c3, c0.shape)
    r0, r1, r2, r3 = philox4x32((c0, c1, c2, c3), _key(root_seed))
    out = np.empty(c0.shape + (2,))
    out[..., 0] = _words_to_uniform(r0, r1)
    out[..., 1] = _words_to_uniform(r2, r3)
    return out.reshape(c0.shape[0], -1)


def normal_blocks(root_seed: int, streams, blocks, domain: int = DOMAIN_INCREMENT) -> np.ndarray:
    """Standard normals, two per block, same layout as :func:`uniform_blocks`."""
    return norm_ppf(uniform_blocks(root_seed, streams, blocks, domain))


def derive_seed(root_seed: int, label: int) -> int:
    """Deterministic 64-bit child seed; used for per-level fresh sub-seeds."""
    lo = np.uint64(label & 0xFFFFFFFF)
    hi = np.uint64(((label >> 32) & 0x3FFFFFFF) | DOMAIN_DERIVE)
    z = np.uint64(0)
    r0, r1, _, _ = philox4x32((lo, hi, z, z), _key(root_seed))
    return (int(r1) << 32) | int(r0)


# Wichura (1988), Algorithm AS 241, PPND16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _horner(coef, x):
    acc = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        acc = acc * x + c
    return acc


def norm_ppf(p) -> np.ndarray:
    """Inverse standard normal CDF for p in (0, 1) (AS241)."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    if central.any():
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _horner(_A, r) / _horner(_B, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.sqrt(-np.log(np.where(qt < 0, p[tail], 1.0 - p[tail])))
        near = r <= 5.0
        x = np.empty_like(r)
        rn = r[near] - 1.6
        x[near] = _horner(_C, rn) / _horner(_D, rn)
        rf = r[~near] - 5.0
        x[~near] = _horner(_E, rf) / _horner(_F, rf)
        out[tail] = np.where(qt < 0, -x, x)
    return out


# Compiled kernels. These are the canonical generators; the numpy versions
# above are kept as reference implementations and agree bit-for-bit on
# uniforms and to a few ulp on normals.

@nb.njit(cache=True, nogil=True)
def _ppf(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r
                   + 4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r
                   + 2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r
                   + 1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r
                   + 1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r
                   + 2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r
                   + 7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    x = num / den
    return -x if q < 0 else x

@nb.njit(cache=True, nogil=True)
def _fill(root, streams, block0, nblocks, domain, normal, out):
    M = _u(0xFFFFFFFF)
    s32 = _u(32)
    k0i = root & M
    k1i = root >> s32
    for i in range(streams.shape[0]):
        s = streams[i]
        for b in range(nblocks):
            blk = block0 + _u(b)
            c0 = blk & M
            c1 = (blk >> s32) | domain
            c2 = s & M
            c3 = s >> s32
            k0 = k0i
            k1 = k1i
            for r in range(10):
                if r > 0:
                    k0 = (k0 + _u(0x9E3779B9)) & M
                    k1 = (k1 + _u(0xBB67AE85)) & M
                p0 = _u(0xD2511F53) * c0
                p1 = _u(0xCD9E8D57) * c2
                n0 = (p1 >> s32) ^ c1 ^ k0
                n1 = p1 & M
                n2 = (p0 >> s32) ^ c3 ^ k1
                n3 = p0 & M
                c0, c1, c2, c3 = n0, n1, n2, n3
            u0 = (float((c0 << _u(21)) | (c1 >> _u(11))) + 0.5) * 1.1102230246251565e-16
            u1 = (float((c2 << _u(21)) | (c3 >> _u(11))) + 0.5) * 1.1102230246251565e-16
            if normal:
                out[i, 2 * b] = _ppf(u0)
                out[i, 2 * b + 1] = _ppf(u1)
            else:
                out[i, 2 * b] = u0
                out[i, 2 * b + 1] = u1


def _draw(root_seed, streams, block0, n_blocks, domain, normal):
    streams = np.ascontiguousarray(streams, dtype=np.uint64)
    if block0 < 0 or block0 + n_blocks > (1 << 62):
        raise ValueError("block index out of range")
    out = np.empty((streams.shape[0], 2 * n_blocks))
    _fill(_u(root_seed), streams, _u(block0), n_blocks, _u(domain), normal, out)
    return out


def normals(root_seed: int, streams, block0: int, n_blocks: int, domain: int = DOMAIN_INCREMENT) -> np.ndarray:
    """Standard normals from the contiguous blocks ``block0 .. block0+n_blocks-1``.

    Shape (len(streams), 2*n_blocks).
    """
    return _draw(root_seed, streams, block0, n_blocks, domain, True)


def uniforms(root_seed: int, streams, block0: int, n_blocks: int, domain: int = DOMAIN_UNIFORM) -> np.ndarray:
    return _draw(root_seed, streams, block0, n_blocks, domain, False)
