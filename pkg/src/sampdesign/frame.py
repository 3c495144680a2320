"""Population frames, inclusion probabilities and samples."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np


class FrameError(ValueError):
    """Invalid frame data or schema."""


def _frozen(a, dtype=np.float64):
    if a is None:
        return None
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PopulationFrame:
    """A finite population with its register of auxiliary information.

    Units are addressed by row index ``0..N-1``; ``unit_ids`` are labels only.

    Attributes
    ----------
    unit_ids : tuple of str
    aux : (N, p) float array
        Auxiliary variables, one row per unit (p may be 0).
    aux_names : tuple of str
    coords : (N, d) float array or None
    strata : (N,) int array or None
        Stratum code per unit, 0..H-1 in order of first appearance.
    stratum_labels : tuple of str or None
    sigma : (N,) float array or None
        Model dispersion of each unit.
    extra : mapping of column name to float array
        Other numeric columns (responses, prescribed probabilities, ...).
    """

    unit_ids: tuple
    aux: np.ndarray
    aux_names: tuple = ()
    coords: Optional[np.ndarray] = None
    coord_names: tuple = ()
    strata: Optional[np.ndarray] = None
    stratum_labels: Optional[tuple] = None
    sigma: Optional[np.ndarray] = None
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(str(u) for u in self.unit_ids)
        if len(ids) == 0:
            raise FrameError("empty frame")
        N = len(ids)
        if len(set(ids)) != N:
            seen = set()
            dup = next(u for u in ids if u in seen or seen.add(u))
            raise FrameError(f"duplicate unit id {dup!r}")
        object.__setattr__(self, "unit_ids", ids)

        aux = np.asarray(self.aux, dtype=np.float64)
        if aux.ndim == 1:
            aux = aux[:, None]
        if aux.size == 0:
            aux = np.zeros((N, 0))
        if aux.shape[0] != N:
            raise FrameError(f"aux has {aux.shape[0]} rows, expected {N}")
        if not np.all(np.isfinite(aux)):
            raise FrameError("aux contains non-finite values")
        object.__setattr__(self, "aux", _frozen(aux))
        names = tuple(self.aux_names) or tuple(f"x{j}" for j in range(aux.shape[1]))
        if len(names) != aux.shape[1]:
            raise FrameError("aux_names length does not match aux columns")
        object.__setattr__(self, "aux_names", names)

        if self.coords is not None:
            c = np.asarray(self.coords, dtype=np.float64)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[0] != N or c.shape[1] < 1:
                raise FrameError("coords must be an N x d array with d >= 1")
            if not np.all(np.isfinite(c)):
                raise FrameError("coords contain non-finite values")
            object.__setattr__(self, "coords", _frozen(c))
            cn = tuple(self.coord_names) or tuple(f"c{j}" for j in range(c.shape[1]))
            object.__setattr__(self, "coord_names", cn)

        if self.strata is not None:
            raw = list(self.strata)
            if len(raw) != N:
                raise FrameError("every unit needs exactly one stratum label")
            if self.stratum_labels is None:
                labels, codes = [], {}
                for s in raw:
                    s = str(s)
                    if s not in codes:
                        codes[s] = len(labels)
                        labels.append(s)
                object.__setattr__(self, "strata", _frozen([codes[str(s)] for s in raw], np.int64))
                object.__setattr__(self, "stratum_labels", tuple(labels))
            else:
                codes = np.asarray(raw, dtype=np.int64)
                if codes.min() < 0 or codes.max() >= len(self.stratum_labels):
                    raise FrameError("stratum code out of range")
                object.__setattr__(self, "strata", _frozen(codes, np.int64))

        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=np.float64)
            if s.shape != (N,) or not np.all(np.isfinite(s)):
                raise FrameError("sigma must be a finite vector of length N")
            if np.any(s < 0) or not np.any(s > 0):
                raise FrameError("sigma must be >= 0 and not all zero")
            object.__setattr__(self, "sigma", _frozen(s))

        extra = {}
        for k, col in dict(self.extra).items():
            col = _frozen(col)
            if col.shape != (N,):
                raise FrameError(f"column {k!r} has wrong length")
            extra[k] = col
        object.__setattr__(self, "extra", extra)

    @property
    def N(self) -> int:
        return len(self.unit_ids)

    @property
    def p(self) -> int:
        return self.aux.shape[1]

    @property
    def d(self) -> int:
        return 0 if self.coords is None else self.coords.shape[1]

    @property
    def H(self) -> int:
        return 0 if self.strata is None else len(self.stratum_labels)

    def stratum_sizes(self) -> np.ndarray:
        if self.strata is None:
            raise FrameError("frame has no strata")
        return np.bincount(self.strata, minlength=self.H)

    def column(self, name: str) -> np.ndarray:
        """Numeric column by name, searched in aux, coords, sigma and extra."""
        if name in self.aux_names:
            return self.aux[:, self.aux_names.index(name)]
        if name in self.coord_names:
            return self.coords[:, self.coord_names.index(name)]
        if name == "sigma" and self.sigma is not None:
            return self.sigma
        if name in self.extra:
            return self.extra[name]
        raise FrameError(f"no numeric column {name!r}")

    def aux_matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        """Columns ``names`` (any numeric column) stacked as an N x q matrix."""
        if names is None:
            return np.array(self.aux)
        return np.column_stack([self.column(n) for n in names]) if names else np.zeros((self.N, 0))


@dataclass(frozen=True)
class InclusionProbabilities:
    """First-order inclusion probabilities of a design."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        if pi.ndim != 1:
            raise ValueError("inclusion probabilities must be a vector")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
            raise ValueError("inclusion probabilities must lie in [0, 1]")
        object.__setattr__(self, "pi", _frozen(pi))

    @property
    def expected_size(self) -> float:
        return float(self.pi.sum())

    @property
    def N(self) -> int:
        return self.pi.shape[0]

    def is_fixed_size(self, tol: float = 1e-9) -> bool:
        n = self.expected_size
        return abs(n - round(n)) <= tol

    def __len__(self):
        return self.N

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.pi, dtype=dtype)


def as_pi(pi, N: Optional[int] = None) -> np.ndarray:
    """Coerce ``pi`` to a validated float vector, optionally of length N."""
    if isinstance(pi, InclusionProbabilities):
        arr = pi.pi
    else:
        arr = InclusionProbabilities(np.asarray(pi, dtype=np.float64)).pi
    if N is not None and arr.shape[0] != N:
        raise ValueError(f"inclusion probabilities have length {arr.shape[0]}, frame has {N} units")
    return arr


@dataclass(frozen=True)
class Sample:
    """A sample without replacement, stored as a 0/1 indicator vector."""

    indicator: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.indicator)
        if ind.ndim != 1 or not np.all((ind == 0) | (ind == 1)):
            raise ValueError("indicator must be a 0/1 vector")
        object.__setattr__(self, "indicator", _frozen(ind, np.uint8))

    @classmethod
    def from_indices(cls, indices: Iterable[int], N: int) -> "Sample":
        ind = np.zeros(N, dtype=np.uint8)
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= N):
            raise ValueError("sample index out of range")
        ind[idx] = 1
        return cls(ind)

    @classmethod
    def from_vector(cls, v: np.ndarray, tol: float = 1e-9) -> "Sample":
        """Round a resolved inclusion vector (all entries within tol of 0/1)."""
        v = np.asarray(v, dtype=np.float64)
        if np.any(np.minimum(np.abs(v), np.abs(v - 1)) > tol):
            raise ValueError("vector has unresolved components")
        return cls((v > 0.5).astype(np.uint8))

    @property
    def N(self) -> int:
        return self.indicator.shape[0]

    @property
    def size(self) -> int:
        return int(self.indicator.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.indicator)

    def key(self) -> str:
        return "".join("1" if b else "0" for b in self.indicator)

    def __contains__(self, k):
        return bool(self.indicator[k])

    def __len__(self):
        return self.size


# --- loading -----------------------------------------------------------------

@dataclass
class FrameSchema:
    """Roles of the columns of a tabular frame.

    Columns not named here are kept in ``PopulationFrame.extra`` when they are
    numeric on every row.
    """

    id: str
    aux: Sequence[str] = ()
    coords: Sequence[str] = ()
    stratum: Optional[str] = None
    sigma: Optional[str] = None

    @classmethod
    def from_json(cls, text: str) -> "FrameSchema":
        d = json.loads(text)
        return cls(
            id=d["id"],
            aux=tuple(d.get("aux", ())),
            coords=tuple(d.get("coords", ())),
            stratum=d.get("stratum"),
            sigma=d.get("sigma"),
        )

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id, "aux": list(self.aux), "coords": list(self.coords),
            "stratum": self.stratum, "sigma": self.sigma,
        })


def _numeric(rows, col, header):
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        cell = r[col].strip()
        try:
            out[i] = float(cell)
        except ValueError:
            raise FrameError(f"non-numeric value {cell!r} in column {header[col]!r} (row {i + 2})") from None
        if not np.isfinite(out[i]):
            raise FrameError(f"non-finite value in column {header[col]!r} (row {i + 2})")
    return out


def load_frame(source: TextIO | str, schema: FrameSchema) -> PopulationFrame:
    """Read a comma-delimited table with a header row into a frame.

    ``source`` is an open text stream or a path. Row order defines unit
    indexing. Missing cells are rejected.
    """
    if isinstance(source, str):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_frame(fh, schema)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FrameError("empty table") from None
    rows = [r for r in reader if any(c.strip() for c in r)]
    if not rows:
        raise FrameError("empty table")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise FrameError(f"row {i + 2} has {len(r)} cells, header has {len(header)}")
    col = {h: j for j, h in enumerate(header)}

    def need(name):
        if name not in col:
            raise FrameError(f"column {name!r} not in table")
        return col[name]

    ids = [r[need(schema.id)].strip() for r in rows]
    if any(u == "" for u in ids):
        raise FrameError("missing unit id")
    aux = [_numeric(rows, need(c), header) for c in schema.aux]
    coords = [_numeric(rows, need(c), header) for c in schema.coords]
    strata = None
    if schema.stratum:
        j = need(schema.stratum)
        strata = [r[j].strip() for r in rows]
        if any(s == "" for s in strata):
            raise FrameError("missing stratum label")
    sigma = _numeric(rows, need(schema.sigma), header) if schema.sigma else None

    used = {schema.id, *schema.aux, *schema.coords, schema.stratum, schema.sigma}
    extra = {}
    for h, j in col.items():
        if h in used:
            continue
        try:
            extra[h] = np.array([float(r[j]) for r in rows])
        except ValueError:
            continue
    return PopulationFrame(
        unit_ids=ids,
        aux=np.column_stack(aux) if aux else np.zeros((len(ids), 0)),
        aux_names=tuple(schema.aux),
        coords=np.column_stack(coords) if coords else None,
        coord_names=tuple(schema.coords),
        strata=strata,
        sigma=sigma,
        extra=extra,
    )


def write_frame(frame: PopulationFrame, dest: TextIO | str) -> FrameSchema:
    """Write ``frame`` as CSV (shortest round-trip float repr). Returns the
    schema that reloads it."""
    if isinstance(dest, str):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_frame(frame, fh)
    header = ["id"]
    cols = []
    aux_names = [f"aux:{n}" if n in frame.coord_names else n for n in frame.aux_names]
    header += aux_names
    cols += [frame.aux[:, j] for j in range(frame.p)]
    header += list(frame.coord_names)
    cols += [frame.coords[:, j] for j in range(frame.d)]
    if frame.sigma is not None:
        header.append("sigma")
        cols.append(frame.sigma)
    for k, v in frame.extra.items():
        header.append(k)
        cols.append(v)
    w = csv.writer(dest, lineterminator="\n")
    if frame.strata is not None:
        header.append("stratum")
    w.writerow(header)
    for i in range(frame.N):
        row = [frame.unit_ids[i]] + [repr(float(c[i])) for c in cols]
        if frame.strata is not None:
            row.append(frame.stratum_labels[frame.strata[i]])
        w.writerow(row)
    return FrameSchema(
        id="id", aux=tuple(aux_names), coords=tuple(frame.coord_names),
        stratum="stratum" if frame.strata is not None else None,
        sigma="sigma" if frame.sigma is not None else None,
    )


def grid_frame(side: int, aux_spec: str = "constant_one", block: Optional[int] = None) -> PopulationFrame:
    """Square lattice population of ``side**2`` units at integer coordinates.

    Units are ordered with x varying slowest: (0,0), (0,1), ..., (1,0), ...

    ``aux_spec`` is ``"constant_one"`` (aux = [1]) or ``"coords_and_one"``
    (aux = [1, x, y]). With ``block`` the grid is cut into square strata of
    ``block x block`` cells (``block`` must divide ``side``).
    """
    side = int(side)
    if side < 1:
        raise FrameError("side must be >= 1")
    xs, ys = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    coords = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    N = side * side
    one = np.ones(N)
    if aux_spec == "constant_one":
        aux, names = one[:, None], ("one",)
    elif aux_spec == "coords_and_one":
        aux, names = np.column_stack([one, coords]), ("one", "x", "y")
    else:
        raise FrameError(f"unknown aux_spec {aux_spec!r}")
    strata = labels = None
    if block is not None:
        block = int(block)
        if block < 1 or side % block:
            raise FrameError("block must divide side")
        per_row = side // block
        strata = (xs.ravel() // block) * per_row + ys.ravel() // block
        labels = tuple(str(h) for h in range(per_row * per_row))
    # aux columns named x/y shadow the coordinates in column() lookups; same values
    return PopulationFrame(
        unit_ids=[str(k) for k in range(N)],
        aux=aux,
        aux_names=names,
        coords=coords,
        coord_names=("x", "y"),
        strata=strata,
        stratum_labels=labels,
    )


def frame_from_text(text: str, schema: FrameSchema) -> PopulationFrame:
    return load_frame(io.StringIO(text), schema)
