"""Per-run trajectory tables and their on-disk text format.

A :class:`TrajectoryRecord` holds the sampled history of every element:
position, velocity, density, quantum potential, external potential,
action, log Jacobian, and total energy, with a shared time axis.
Element indices are 1-based everywhere they are written out; element 1
is the leftmost at t = 0.

The file format is plain delimited text.  Values are rendered with
``%.17g`` so a record round-trips bit for bit and identical runs produce
identical bytes.  Layout::

    # qtraj trajectory record
    # engine = mwls
    # n_elements = 100
    # n_samples = 42
    # columns: index x v rho Q V S logJ E
    # t = 0
    1 <x> <v> <rho> <Q> <V> <S> <logJ> <E>
    ...
    # t = 4.2
    ...

NaN entries are legal (the wavepacket route has no volume element, so
its log J column is nan).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["TrajectoryRecord", "FMT"]

#: Repr-exact float format used for every numeric field written to disk.
FMT = "%.17g"

_COLUMNS = ("x", "v", "rho", "Q", "V", "S", "logJ", "E")


@dataclass
class TrajectoryRecord:
    """Sampled per-element history of one run.

    All field arrays have shape (n_samples, n_elements) aligned with the
    time axis ``t``.  ``notes`` carries free-form header lines (for
    example the phase-wrapping convention of the wavepacket route).
    """

    engine: str
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    S: np.ndarray
    logJ: np.ndarray
    E: np.ndarray
    index_base: int = 1
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        shape = None
        for name in _COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ValueError(f"column {name!r} has shape {arr.shape}, expected {shape}")
        if shape is None or len(shape) != 2 or shape[0] != self.t.shape[0]:
            raise ValueError("field arrays must be (n_samples, n_elements)")

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    @property
    def n_elements(self) -> int:
        return self.x.shape[1]

    def positions_at(self, times) -> np.ndarray:
        """Linear-in-time interpolation of every trajectory.

        ``times`` must lie within the recorded span.  Returns an array
        of shape (len(times), n_elements).
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.min() < self.t[0] - 1e-9 or times.max() > self.t[-1] + 1e-9:
            raise ValueError(
                f"requested times outside recorded span "
                f"[{self.t[0]:g}, {self.t[-1]:g}]"
            )
        out = np.empty((times.size, self.n_elements))
        for j in range(self.n_elements):
            out[:, j] = np.interp(times, self.t, self.x[:, j])
        return out

    def save(self, path) -> None:
        path = Path(path)
        idx = np.arange(self.n_elements) + self.index_base
        lines = [
            "# qtraj trajectory record",
            f"# engine = {self.engine}",
            f"# n_elements = {self.n_elements}",
            f"# n_samples = {self.n_samples}",
            f"# index_base = {self.index_base}",
        ]
        lines += [f"# note: {note}" for note in self.notes]
        lines.append("# columns: index " + " ".join(_COLUMNS))
        for k in range(self.n_samples):
            lines.append("# t = " + FMT % self.t[k])
            block = np.column_stack(
                [getattr(self, name)[k] for name in _COLUMNS]
            )
            for i in range(self.n_elements):
                lines.append(
                    "%d " % idx[i] + " ".join(FMT % v for v in block[i])
                )
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TrajectoryRecord":
        path = Path(path)
        engine = "unknown"
        index_base = 1
        notes = []
        times: list[float] = []
        blocks: list[list[list[float]]] = []
        for raw in path.read_text().splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("engine ="):
                    engine = body.split("=", 1)[1].strip()
                elif body.startswith("index_base ="):
                    index_base = int(body.split("=", 1)[1])
                elif body.startswith("note:"):
                    notes.append(body.split(":", 1)[1].strip())
                elif body.startswith("t ="):
                    times.append(float(body.split("=", 1)[1]))
                    blocks.append([])
                continue
            if not blocks:
                raise ValueError(f"{path}: data row before any '# t =' header")
            blocks[-1].append([float(v) for v in line.split()[1:]])
        if not times:
            raise ValueError(f"{path}: no samples found")
        data = np.asarray(blocks, dtype=float)
        fields = {
            name: data[:, :, j] for j, name in enumerate(_COLUMNS)
        }
        return cls(
            engine=engine,
            t=np.asarray(times),
            index_base=index_base,
            notes=tuple(notes),
            **fields,
        )
