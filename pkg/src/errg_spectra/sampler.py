"""Sampling A(i, j) ~ Bernoulli(eps f(i/N, j/N)), i <= j, and matrix-free products with A and W."""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .kernel import KernelSpec, common_knots, discretize
from .rng import RowStreams

MAGIC = b"ERGS"
VERSION = 1
_HEADER = struct.Struct("<4sHQd32sQQ")


class ProbabilityOverflowError(ValueError):
    """eps * f exceeds 1 somewhere on the grid."""


class KernelMismatchError(ValueError):
    """The kernel passed does not match the one the sample was drawn from."""


@dataclass(frozen=True, eq=False)
class GraphSample:
    """Upper triangle (diagonal included) of a sampled adjacency matrix in CSR layout.

    Vertex indices are 0-based: row i holds columns ``indices[indptr[i]:indptr[i+1]]``,
    all >= i and strictly increasing.
    """

    N: int
    epsilon: float
    kernel_id: str
    seed: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices):
            arr.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size)

    @property
    def upper_edges(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.N), np.diff(self.indptr))
        return np.column_stack([rows, self.indices])

    @cached_property
    def upper(self) -> sp.csr_matrix:
        data = np.ones(self.edge_count)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.N, self.N))

    @cached_property
    def self_loops(self) -> np.ndarray:
        loops = np.zeros(self.N)
        rows = np.repeat(np.arange(self.N), np.diff(self.indptr))
        loops[rows[rows == self.indices]] = 1.0
        return loops

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(_header_bytes(self))
        h.update(np.ascontiguousarray(self.indptr, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.indices, dtype="<i8").tobytes())
        return h.hexdigest()

    def dense(self) -> np.ndarray:
        """Full symmetric adjacency matrix (small N only)."""
        u = self.upper.toarray()
        return u + np.triu(u, 1).T


def _skip(rng: np.random.Generator, lo: int, hi: int, p: float) -> np.ndarray:
    """Positions in [lo, hi) selected independently with probability p, by geometric jumps."""
    if hi <= lo or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(lo, hi, dtype=np.int64)
    mean = (hi - lo) * p
    chunk = int(mean + 4.0 * np.sqrt(mean) + 16)
    parts = []
    pos = lo - 1
    while True:
        cols = pos + np.cumsum(rng.geometric(p, size=chunk))
        if cols[-1] >= hi:
            parts.append(cols[cols < hi])
            break
        parts.append(cols)
        pos = int(cols[-1])
    return np.concatenate(parts)


def sample_graph(spec: KernelSpec, N: int, epsilon: float, seed: int) -> GraphSample:
    """Draw one graph; the result is a pure function of (spec, N, epsilon, seed).

    Piecewise-constant kernels are sampled by exact geometric skipping on each
    constant-probability run of a row; other kernels by skipping at the
    envelope rate eps * M followed by acceptance with probability f / M.
    """
    if int(N) != N or N < 1:
        raise ValueError("empty domain: N must be a positive integer")
    N = int(N)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    M = spec.sup_bound
    if epsilon * M > 1.0 + 1e-12:
        raise ProbabilityOverflowError(f"epsilon * sup f = {epsilon * M:.6g} > 1")
    e = discretize(spec, N) * np.sqrt(N)  # r_l(a/N)
    theta = np.asarray(spec.thetas)
    streams = RowStreams(int(seed))
    rows = []
    if spec.is_piecewise_constant:
        grid = np.arange(1, N + 1) / N
        knots = common_knots(spec.eigenfunctions)
        cell = np.clip(np.searchsorted(knots, grid, side="right") - 1, 0, len(knots) - 2)
        starts = np.flatnonzero(np.diff(cell, prepend=-1))
        ends = np.append(starts[1:], N)
        # probability on each (row-run, column-run) rectangle
        rep = e[:, starts]
        prob = epsilon * (rep.T @ (theta[:, None] * rep))
        if prob.min() < -1e-12:
            raise ValueError("kernel takes negative values on the sampling grid")
        if prob.max() > 1.0 + 1e-12:
            raise ProbabilityOverflowError("eps * f exceeds 1 on the sampling grid")
        run_of = np.repeat(np.arange(len(starts)), ends - starts)
        for i in range(N):
            rng = streams.row(i)
            ri = run_of[i]
            segs = [
                _skip(rng, max(i, int(starts[c])), int(ends[c]), float(prob[ri, c]))
                for c in range(ri, len(starts))
            ]
            rows.append(np.concatenate(segs))
    else:
        p_env = min(1.0, epsilon * M)
        for i in range(N):
            rng = streams.row(i)
            cand = _skip(rng, i, N, p_env)
            u = rng.random(cand.size)
            fv = (theta * e[:, i]) @ e[:, cand]
            if fv.size and (fv.max() > M * (1 + 1e-9)):
                raise ProbabilityOverflowError("f exceeds its sup bound on the sampling grid")
            if fv.size and fv.min() < -1e-12:
                raise ValueError("kernel takes negative values on the sampling grid")
            rows.append(cand[u * M < fv])
    counts = np.array([r.size for r in rows], dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    return GraphSample(N, float(epsilon), spec.kernel_id, int(seed), indptr, indices.astype(np.int64))


def _check_dim(g: GraphSample, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != g.N or x.ndim > 2:
        raise ValueError(f"dimension mismatch: expected leading dimension {g.N}, got {x.shape}")
    return x


def apply_A(g: GraphSample, x) -> np.ndarray:
    """A x from the upper triangle: U x + U' x - diag(U) x. Accepts (N,) or (N, m)."""
    x = _check_dim(g, x)
    u = g.upper
    loops = g.self_loops if x.ndim == 1 else g.self_loops[:, None]
    return u @ x + u.T @ x - loops * x


def apply_W(g: GraphSample, spec: KernelSpec, x) -> np.ndarray:
    """W x = A x - N eps sum_j theta_j (e_j' x) e_j."""
    if spec.kernel_id != g.kernel_id:
        raise KernelMismatchError("kernel does not match the sample's kernel_id")
    x = _check_dim(g, x)
    e = discretize(spec, g.N)
    theta = np.asarray(spec.thetas)
    proj = e @ x
    proj = theta * proj if x.ndim == 1 else theta[:, None] * proj
    return apply_A(g, x) - g.N * g.epsilon * (e.T @ proj)


# -- serialization --------------------------------------------------------


def _header_bytes(g: GraphSample) -> bytes:
    kid = bytes.fromhex(g.kernel_id) if g.kernel_id else bytes(32)
    return _HEADER.pack(MAGIC, VERSION, g.N, g.epsilon, kid, g.seed, g.edge_count)


def _varint_encode(vals: np.ndarray) -> bytes:
    vals = vals.astype(np.uint64)
    nbytes = np.ones(vals.size, dtype=np.int64)
    rest = vals >> np.uint64(7)
    while np.any(rest):
        nbytes += rest > 0
        rest = rest >> np.uint64(7)
    out = np.zeros(int(nbytes.sum()), dtype=np.uint8)
    offsets = np.cumsum(nbytes) - nbytes
    for b in range(int(nbytes.max(initial=0))):
        m = nbytes > b
        byte = (vals[m] >> np.uint64(7 * b)) & np.uint64(0x7F)
        cont = (nbytes[m] > b + 1).astype(np.uint64) << np.uint64(7)
        out[offsets[m] + b] = (byte | cont).astype(np.uint8)
    return out.tobytes()


def _varint_decode(buf: bytes, count: int) -> np.ndarray:
    raw = np.frombuffer(buf, dtype=np.uint8)
    ends = np.flatnonzero((raw & 0x80) == 0)
    if ends.size != count:
        raise ValueError("corrupt edge list: varint count mismatch")
    starts = np.concatenate([[0], ends[:-1] + 1]).astype(np.int64)
    lengths = ends - starts + 1
    vals = np.zeros(count, dtype=np.uint64)
    for b in range(int(lengths.max(initial=0))):
        m = lengths > b
        vals[m] |= (raw[starts[m] + b] & np.uint64(0x7F)).astype(np.uint64) << np.uint64(7 * b)
    return vals


def to_binary(g: GraphSample) -> bytes:
    """Header (magic, version, N, epsilon, kernel hash, seed, edge count) + delta-encoded pair keys."""
    keys = g.upper_edges.astype(np.uint64)
    keys = keys[:, 0] * np.uint64(g.N) + keys[:, 1]
    deltas = np.diff(keys, prepend=np.uint64(0)) if keys.size else keys
    return _header_bytes(g) + _varint_encode(deltas)


def from_binary(data: bytes) -> GraphSample:
    if len(data) < _HEADER.size:
        raise ValueError("truncated sample file")
    magic, version, N, eps, kid, seed, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not a graph sample file (bad magic)")
    if version != VERSION:
        raise ValueError(f"unsupported sample format version {version}")
    keys = np.cumsum(_varint_decode(data[_HEADER.size :], count), dtype=np.uint64)
    rows = (keys // np.uint64(N)).astype(np.int64)
    cols = (keys % np.uint64(N)).astype(np.int64)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=N))]).astype(np.int64)
    kernel_id = kid.hex() if any(kid) else ""
    return GraphSample(int(N), float(eps), kernel_id, int(seed), indptr, cols)


def write_binary(g: GraphSample, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_binary(g))


def read_binary(path) -> GraphSample:
    with open(path, "rb") as fh:
        return from_binary(fh.read())


def to_text(g: GraphSample) -> str:
    """One "i j" pair per line, 1-indexed, preceded by '#' metadata lines."""
    buf = io.StringIO()
    buf.write("# errg-spectra edge list (1-indexed, i <= j)\n")
    buf.write(f"# N={g.N}\n# epsilon={g.epsilon!r}\n# seed={g.seed}\n# kernel_id={g.kernel_id}\n")
    np.savetxt(buf, g.upper_edges + 1, fmt="%d")
    return buf.getvalue()


def from_text(text: str) -> GraphSample:
    meta = {}
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = val.strip()
            continue
        a, b = line.split()[:2]
        pairs.append((int(a), int(b)))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2) - 1
    if edges.size and edges.min() < 0:
        raise ValueError("edge list must be 1-indexed")
    edges = np.sort(edges, axis=1)  # store as i <= j
    N = int(meta["N"]) if "N" in meta else int(edges.max(initial=-1)) + 1
    if edges.size and edges.max() >= N:
        raise ValueError("vertex index exceeds N")
    edges = np.unique(edges, axis=0)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(edges[:, 0], minlength=N))]).astype(np.int64)
    return GraphSample(
        N,
        float(meta.get("epsilon", "nan")),
        meta.get("kernel_id", ""),
        int(meta.get("seed", 0)),
        indptr,
        edges[:, 1].copy(),
    )


def write_text(g: GraphSample, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_text(g))


def read_text(path) -> GraphSample:
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())
