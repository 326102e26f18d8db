"""SDPA sparse file I/O, Gset graphs, instance generators and result writers.

Format notes
------------
SDPA sparse (``.dat-s``): comment lines start with ``"`` or ``*``; then the
constraint count m; the block count; the block sizes (negative = diagonal
block, ``{},()`` and commas tolerated as whitespace); m objective values (the
SDPA c-vector, mapped to our right-hand side b); then entry lines
``matno blkno i j value`` with 1-based in-block indices and matno 0 denoting
the objective matrix F0.

An SDPA file describes the pair ``min c^T x`` / ``max <F0, Y> s.t.
<F_i, Y> = c_i, Y PSD``.  We ingest the second (primal PSD) form and store the
minimization objective ``C = -F0`` with ``maximize=True``, so reported
objectives match the usual published optima.  Files written by this module
carry a ``*<LRSDP> ...`` comment recording name/class/sense so that our own
problems round-trip exactly; foreign files default to class "generic".

Factor / solution dumps: binary, magic line ``LRSDP1``, one JSON header line,
then the factor values as little-endian float64, row-major.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO, Union

import numpy as np

from .model import SdpProblem, SparseSymMatrix

__all__ = [
    "SdpaFormatError", "MalformedLineError", "IndexOutOfBlockError",
    "MissingSectionError", "GsetFormatError",
    "GsetGraph", "McInstance",
    "parse_sdpa", "parse_sdpa_file", "write_sdpa",
    "parse_gset", "parse_gset_file", "random_gset_graph",
    "gen_maxcut", "gen_matrix_completion", "gen_mc_random",
    "write_factor", "read_factor", "write_solution", "read_solution",
    "write_csv_row", "CSV_HEADER",
]

FACTOR_MAGIC = b"LRSDP1"


class SdpaFormatError(ValueError):
    """Base error for malformed SDPA input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedLineError(SdpaFormatError):
    pass


class IndexOutOfBlockError(SdpaFormatError):
    pass


class MissingSectionError(SdpaFormatError):
    pass


class GsetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GsetGraph:
    """Edge list with 1-based vertices; weights default to 1 in the files."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        seen = set()
        for i, j, w in self.edges:
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise GsetFormatError(f"edge ({i},{j}) out of range for n={self.n}")
            if i == j:
                raise GsetFormatError(f"self-loop at vertex {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GsetFormatError(f"duplicate edge ({i},{j})")
            seen.add(key)


@dataclass(frozen=True)
class McInstance:
    """Partially observed matrix: entries (i, j, value), 0-based, no duplicates."""

    p: int
    q: int
    observed: tuple[tuple[int, int, float], ...]
    rank: int = 0   # ground-truth rank when generated; metadata only

    def __post_init__(self):
        seen = set()
        for i, j, _ in self.observed:
            if not (0 <= i < self.p and 0 <= j < self.q):
                raise ValueError(f"observation ({i},{j}) out of range")
            if (i, j) in seen:
                raise ValueError(f"duplicate observation ({i},{j})")
            seen.add((i, j))


# ---------------------------------------------------------------------------
# SDPA parsing

_PUNCT = str.maketrans({c: " " for c in "{}(),"})


def _parse_float(token: str) -> float:
    try:
        return float(token)
    except ValueError:
        # Fortran-style exponents (1.5D+01) appear in some published files
        return float(token.replace("D", "E").replace("d", "e"))


def _iter_lines(source) -> Iterable[tuple[int, str]]:
    if isinstance(source, os.PathLike):
        text = Path(source).read_text()
    elif isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    for no, line in enumerate(text.splitlines(), start=1):
        yield no, line


def parse_sdpa(source: Union[str, bytes, TextIO]) -> SdpProblem:
    """Parse SDPA sparse format into an SdpProblem (block-diagonal embedding)."""
    meta = {}
    data_lines = []
    for no, raw in _iter_lines(source):
        stripped = raw.lstrip()
        if not stripped:
            continue
        if stripped[0] in '"*':
            body = stripped[1:].strip()
            if body.startswith("<LRSDP>"):
                for token in body[len("<LRSDP>"):].split():
                    if "=" in token:
                        k, _, v = token.partition("=")
                        meta[k] = v
            continue
        data_lines.append((no, stripped))

    cursor = 0

    def next_line(section):
        nonlocal cursor
        if cursor >= len(data_lines):
            raise MissingSectionError(f"unexpected end of file while reading {section}")
        item = data_lines[cursor]
        cursor += 1
        return item

    no, line = next_line("the constraint count")
    try:
        m = int(line.split()[0])
    except ValueError:
        raise MalformedLineError(f"expected integer constraint count, got {line!r}", no)
    if m < 1:
        raise MalformedLineError(f"constraint count must be >= 1, got {m}", no)

    no, line = next_line("the block count")
    try:
        nblocks = int(line.split()[0])
    except ValueError:
        raise MalformedLineError(f"expected integer block count, got {line!r}", no)
    if nblocks < 1:
        raise MalformedLineError(f"block count must be >= 1, got {nblocks}", no)

    no, line = next_line("the block sizes")
    tokens = line.translate(_PUNCT).split()
    if len(tokens) != nblocks:
        raise MalformedLineError(
            f"expected {nblocks} block sizes, got {len(tokens)}", no)
    try:
        blocks = tuple(int(t) for t in tokens)
    except ValueError:
        raise MalformedLineError(f"non-integer block size in {line!r}", no)
    if any(b == 0 for b in blocks):
        raise MalformedLineError("block size 0 is not allowed", no)

    sizes = [abs(b) for b in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])

    # The c-vector may span several lines; keep consuming until m values read.
    rhs_vals: list[float] = []
    while len(rhs_vals) < m:
        no, line = next_line("the objective vector")
        for tok in line.translate(_PUNCT).split():
            try:
                rhs_vals.append(_parse_float(tok))
            except ValueError:
                raise MalformedLineError(f"bad objective value {tok!r}", no)
        if len(rhs_vals) > m:
            raise MalformedLineError(
                f"objective vector has more than m = {m} values", no)
    rhs = np.array(rhs_vals)

    entries: list[list[tuple[int, int, float]]] = [[] for _ in range(m + 1)]
    seen: list[set[tuple[int, int]]] = [set() for _ in range(m + 1)]
    while cursor < len(data_lines):
        no, line = next_line("matrix entries")
        tokens = line.split()
        if len(tokens) != 5:
            raise MalformedLineError(
                f"entry line needs 5 fields 'matno blkno i j value', got {len(tokens)}", no)
        try:
            matno, blkno, i, j = (int(t) for t in tokens[:4])
            value = _parse_float(tokens[4])
        except ValueError:
            raise MalformedLineError(f"bad entry line {line!r}", no)
        if not (0 <= matno <= m):
            raise MalformedLineError(f"matrix number {matno} outside 0..{m}", no)
        if not (1 <= blkno <= nblocks):
            raise IndexOutOfBlockError(f"block number {blkno} outside 1..{nblocks}", no)
        size = sizes[blkno - 1]
        if not (1 <= i <= size and 1 <= j <= size):
            raise IndexOutOfBlockError(
                f"entry ({i},{j}) outside block {blkno} of size {size}", no)
        if blocks[blkno - 1] < 0 and i != j:
            raise IndexOutOfBlockError(
                f"off-diagonal entry ({i},{j}) in diagonal block {blkno}", no)
        gi = int(offsets[blkno - 1]) + i - 1
        gj = int(offsets[blkno - 1]) + j - 1
        gi, gj = min(gi, gj), max(gi, gj)
        if (gi, gj) in seen[matno]:
            raise MalformedLineError(
                f"duplicate entry ({i},{j}) in block {blkno} for matrix {matno}", no)
        seen[matno].add((gi, gj))
        entries[matno].append((gi, gj, value))

    # Stored objective is the minimization form: C = -F0.
    objective = SparseSymMatrix.from_entries(
        n, [(i, j, -v) for i, j, v in entries[0]])
    constraints = tuple(SparseSymMatrix.from_entries(n, ent) for ent in entries[1:])

    sense = meta.get("sense", "max")
    return SdpProblem(
        n=n, m=m, objective=objective, constraints=constraints, rhs=rhs,
        class_tag=meta.get("class", "generic"),
        maximize=(sense == "max"),
        name=meta.get("name", ""),
        blocks=blocks,
    )


def parse_sdpa_file(path) -> SdpProblem:
    problem = parse_sdpa(Path(path).read_text())
    if not problem.name:
        problem = SdpProblem(
            n=problem.n, m=problem.m, objective=problem.objective,
            constraints=problem.constraints, rhs=problem.rhs,
            class_tag=problem.class_tag, maximize=problem.maximize,
            name=Path(path).stem, blocks=problem.blocks)
    return problem


def _block_of(index: int, offsets: np.ndarray) -> int:
    return int(np.searchsorted(offsets, index, side="right")) - 1


def write_sdpa(problem: SdpProblem, target) -> None:
    """Serialize to SDPA sparse format, restoring the stored block structure."""
    own = isinstance(target, (str, os.PathLike))
    fh = open(target, "w") if own else target
    try:
        fh.write('"SDPA sparse format; see the package format notes.\n')
        sense = "max" if problem.maximize else "min"
        name_token = f"name={problem.name} " if problem.name else ""
        fh.write(f"*<LRSDP> {name_token}class={problem.class_tag} sense={sense}\n")
        fh.write(f"{problem.m}\n")
        fh.write(f"{len(problem.blocks)}\n")
        fh.write(" ".join(str(b) for b in problem.blocks) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in problem.rhs) + "\n")
        offsets = np.concatenate([[0], np.cumsum([abs(b) for b in problem.blocks])])

        def emit(matno, mat, negate):
            for gi, gj, v in zip(mat.rows, mat.cols, mat.vals):
                blk = _block_of(gi, offsets)
                base = int(offsets[blk])
                out = -v if negate else v
                fh.write(f"{matno} {blk + 1} {gi - base + 1} {gj - base + 1} {out:.17g}\n")

        emit(0, problem.objective, negate=True)   # back to the file's F0
        for k, A in enumerate(problem.constraints, start=1):
            emit(k, A, negate=False)
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# Gset graphs and the MaxCut SDP

def parse_gset(source) -> GsetGraph:
    """Plain-text graph: first line ``n edge_count``, then ``i j [w]`` lines."""
    lines = list(_iter_lines(source))
    lines = [(no, ln.strip()) for no, ln in lines if ln.strip()]
    if not lines:
        raise GsetFormatError("empty graph file")
    no, head = lines[0]
    tokens = head.split()
    if len(tokens) < 2:
        raise GsetFormatError(f"line {no}: header needs 'n edge_count'")
    n, ecount = int(tokens[0]), int(tokens[1])
    if len(lines) - 1 != ecount:
        raise GsetFormatError(
            f"header declares {ecount} edges but file has {len(lines) - 1}")
    edges = []
    for no, ln in lines[1:]:
        tokens = ln.split()
        if len(tokens) not in (2, 3):
            raise GsetFormatError(f"line {no}: expected 'i j [w]'")
        i, j = int(tokens[0]), int(tokens[1])
        w = float(tokens[2]) if len(tokens) == 3 else 1.0
        edges.append((i, j, w))
    return GsetGraph(n, tuple(edges))


def parse_gset_file(path) -> GsetGraph:
    return parse_gset(Path(path).read_text())


def random_gset_graph(n: int, avg_degree: float = 6.0, seed: int = 42,
                      signed: bool = False) -> GsetGraph:
    """Erdos-Renyi style benchmark graph with unit (or +-1) weights."""
    if n < 2:
        raise ValueError("need at least two vertices")
    rng = np.random.default_rng(seed)
    p = min(1.0, avg_degree / (n - 1))
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    iu, ju = iu[mask], ju[mask]
    if iu.size == 0:   # keep the graph non-degenerate
        iu, ju = np.array([0]), np.array([1])
    if signed:
        w = rng.choice([-1.0, 1.0], size=iu.size)
    else:
        w = np.ones(iu.size)
    edges = tuple((int(i) + 1, int(j) + 1, float(wk)) for i, j, wk in zip(iu, ju, w))
    return GsetGraph(n, edges)


def gen_maxcut(graph: GsetGraph) -> SdpProblem:
    """MaxCut SDP relaxation: maximize <L/4, X> with unit diagonal.

    The solver minimizes, so the stored objective is -L/4 and the report
    negates the value back (``maximize=True``).
    """
    n = graph.n
    degree = np.zeros(n)
    off = {}
    for i, j, w in graph.edges:
        a, b = i - 1, j - 1
        degree[a] += w
        degree[b] += w
        off[(min(a, b), max(a, b))] = w
    entries = [(i, i, -degree[i] / 4.0) for i in range(n)]
    entries += [(a, b, w / 4.0) for (a, b), w in sorted(off.items())]
    objective = SparseSymMatrix.from_entries(n, entries)
    constraints = tuple(
        SparseSymMatrix.from_entries(n, [(i, i, 1.0)]) for i in range(n))
    return SdpProblem(
        n=n, m=n, objective=objective, constraints=constraints,
        rhs=np.ones(n), class_tag="maxcut", maximize=True)


# ---------------------------------------------------------------------------
# Matrix completion

def gen_matrix_completion(instance: McInstance) -> SdpProblem:
    """Nuclear-norm SDP embedding of a partially observed p x q matrix.

    The (p+q)-order variable holds [[W1, M], [M^T, W2]]; observation (i, j)
    pins the cross-block entry (i, p+j) via <A, X> = 2 M_ij, and the
    objective trace(X) equals twice the nuclear norm at the optimum.
    """
    n = instance.p + instance.q
    m = len(instance.observed)
    if m == 0:
        raise ValueError("instance has no observations")
    constraints = []
    rhs = np.zeros(m)
    for k, (i, j, value) in enumerate(instance.observed):
        constraints.append(
            SparseSymMatrix.from_entries(n, [(i, instance.p + j, 1.0)]))
        rhs[k] = 2.0 * value
    return SdpProblem(
        n=n, m=m, objective=SparseSymMatrix.identity(n),
        constraints=tuple(constraints), rhs=rhs,
        class_tag="matrix_completion", maximize=False)


def gen_mc_random(p: int, q: int, rank: int, sample_fraction: float,
                  seed: int = 42) -> McInstance:
    """Hidden M = L R^T with Gaussian factors; entries sampled uniformly
    without replacement at the given fraction. Deterministic per seed."""
    if not (0.0 < sample_fraction <= 1.0):
        raise ValueError(f"sample fraction must lie in (0, 1], got {sample_fraction}")
    if not (1 <= rank <= min(p, q)):
        raise ValueError(f"rank must lie in [1, min(p, q)], got {rank}")
    count = int(round(sample_fraction * p * q))
    if count < 1:
        raise ValueError("sample fraction selects no entries")
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((p, rank))
    right = rng.standard_normal((q, rank))
    hidden = left @ right.T
    flat = rng.choice(p * q, size=count, replace=False)
    flat.sort()
    rows, cols = np.divmod(flat, q)
    observed = tuple(
        (int(i), int(j), float(hidden[i, j])) for i, j in zip(rows, cols))
    return McInstance(p=p, q=q, observed=observed, rank=rank)


# ---------------------------------------------------------------------------
# Result serialization

CSV_HEADER = ("name,n,m,phase1_iters,phase2_iters,cg_total,time_s,"
              "p_infeas,d_infeas,pd_gap")


def _write_container(path, header: dict, factor: np.ndarray) -> None:
    factor = np.ascontiguousarray(factor, dtype="<f8")
    header = dict(header, n=int(factor.shape[0]), r=int(factor.shape[1]))
    with open(path, "wb") as fh:
        fh.write(FACTOR_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(factor.tobytes(order="C"))


def _read_container(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != FACTOR_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {FACTOR_MAGIC!r}")
        header = json.loads(fh.readline())
        n, r = header["n"], header["r"]
        data = fh.read(8 * n * r)
        if len(data) != 8 * n * r:
            raise ValueError(f"{path}: truncated factor payload")
        factor = np.frombuffer(data, dtype="<f8").reshape(n, r).copy()
    return header, factor


def write_factor(path, factor: np.ndarray) -> None:
    """Dump a dense factor (magic LRSDP1, JSON size header, row-major f64)."""
    try:
        _write_container(path, {}, factor)
    except OSError as exc:
        raise OSError(f"writing factor to {path}: {exc}") from exc


def read_factor(path) -> np.ndarray:
    return _read_container(path)[1]


def write_solution(report, path) -> None:
    """Dump the recombined factor plus objective and the three errors."""
    if report.factor is None:
        raise ValueError("report carries no factor (failed solve?)")
    header = {
        "name": report.name,
        "objective": report.objective,
        "p_infeas": report.p_infeas,
        "d_infeas": report.d_infeas,
        "pd_gap": report.pd_gap,
    }
    try:
        _write_container(path, header, report.factor)
    except OSError as exc:
        raise OSError(f"writing solution to {path}: {exc}") from exc


def read_solution(path) -> tuple[dict, np.ndarray]:
    return _read_container(path)


def write_csv_row(report, path) -> None:
    """Append one benchmark row, creating the file with a header if needed."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    try:
        with open(path, "a") as fh:
            if fresh:
                fh.write(CSV_HEADER + "\n")
            fh.write(report.csv_row() + "\n")
    except OSError as exc:
        raise OSError(f"writing csv row to {path}: {exc}") from exc
