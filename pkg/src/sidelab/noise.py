"""Driving noise: truncated Wiener increments and finite-activity jump streams.

Every random draw comes from a Philox (counter-based) generator keyed by
``(seed, path, stream, ...)``, so a realization depends only on its seed and
path index, never on the order in which paths are generated.
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

WIENER, JUMPS_N, JUMPS_M, BRIDGE, AUX = range(5)
STREAM_CODES = {"N": JUMPS_N, "M": JUMPS_M}


def substream(seed, path, stream, *extra):
    key = tuple(int(k) for k in (path, stream) + extra)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class MarkSpace:
    """Finite atomic measure: mark ``labels[j]`` carries mass ``weights[j]``."""
    labels: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.weights):
            raise ValueError("one weight per label expected")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("mark labels must be distinct")
        for w in self.weights:
            if not (w > 0 and math.isfinite(w)):
                raise ValueError(f"mark weights must be positive and finite, got {w!r}")

    @classmethod
    def atoms(cls, weights, labels=None):
        weights = tuple(float(w) for w in weights)
        return cls(tuple(labels) if labels is not None else tuple(range(len(weights))), weights)

    @classmethod
    def empty(cls):
        return cls((), ())

    @property
    def total(self):
        return math.fsum(self.weights)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.labels, self.weights))


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if not (self.T > 0 and self.steps >= 1):
            raise ValueError("need T > 0 and at least one step")

    @property
    def dt(self):
        return self.T / self.steps

    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    def coarsen(self, factor):
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps cannot be coarsened by {factor}")
        return TimeGrid(self.T, self.steps // factor)


@dataclass(frozen=True, eq=False)
class JumpStream:
    times: np.ndarray
    marks: np.ndarray  # indices into the mark space

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.marks, dtype=int)
        if t.shape != m.shape or t.ndim != 1:
            raise ValueError("times and marks must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", m)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        return (isinstance(other, JumpStream) and np.array_equal(self.times, other.times)
                and np.array_equal(self.marks, other.marks))


def sample_wiener(grid, modes, seed, path=0):
    """Increments ``(steps, modes)``, i.i.d. N(0, dt)."""
    if modes < 0:
        raise ValueError("modes must be non-negative")
    rng = substream(seed, path, WIENER, grid.steps)
    return rng.standard_normal((grid.steps, modes)) * math.sqrt(grid.dt)


def sample_jumps(grid, marks, seed, path=0, stream="N"):
    """Compound Poisson event stream on ``(0, T]`` with intensity measure ``marks``.

    Arrival times come from exponential gaps, so the stream does not depend on
    the number of time steps.
    """
    rate = marks.total if len(marks) else 0.0
    if rate == 0.0:
        return JumpStream.empty()
    rng = substream(seed, path, STREAM_CODES.get(stream, AUX))
    times = []
    t = 0.0
    batch = max(8, int(2 * rate * grid.T) + 8)
    while True:
        gaps = rng.exponential(1.0 / rate, size=batch)
        for g in gaps:
            t += g
            if t > grid.T:
                break
            times.append(t)
        else:
            continue
        break
    p = np.asarray(marks.weights) / rate
    idx = rng.choice(len(marks), size=len(times), p=p) if len(marks) > 1 else np.zeros(len(times), int)
    return JumpStream(np.asarray(times), idx)


def compensated_integral(stream, marks, grid, weight):
    """``sum_{tau <= t} weight[mark] - t * sum_j weight[j] * mass[j]`` on the grid times."""
    weight = np.asarray(weight, dtype=float)
    t = grid.times()
    comp = math.fsum(weight * np.asarray(marks.weights)) if len(marks) else 0.0
    jumps = weight[stream.marks] if len(stream) else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(jumps)])
    counts = np.searchsorted(stream.times, t, side="right")
    return cum[counts] - t * comp


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """One path of all driving noises.

    ``jumps`` maps a stream name ("N" for marks in Z, "M" for marks in F) to
    its events; ``marks`` maps the same names to the mark spaces.
    """
    grid: TimeGrid
    wiener: np.ndarray
    jumps: dict = field(default_factory=dict)
    marks: dict = field(default_factory=dict)
    seed: int = 0
    path: int = 0
    fine_steps: int = None

    def __post_init__(self):
        w = np.asarray(self.wiener, dtype=float)
        if w.ndim != 2 or w.shape[0] != self.grid.steps:
            raise ValueError("wiener increments must have shape (steps, modes)")
        w.setflags(write=False)
        object.__setattr__(self, "wiener", w)
        for name, s in self.jumps.items():
            if len(s) and (s.times[0] <= 0 or s.times[-1] > self.grid.T):
                raise ValueError(f"stream {name}: jump times must lie in (0, T]")
            if len(s) and name in self.marks and (s.marks.min() < 0 or s.marks.max() >= len(self.marks[name])):
                raise ValueError(f"stream {name}: mark index out of range")
        if self.fine_steps is None:
            object.__setattr__(self, "fine_steps", self.grid.steps)

    @property
    def modes(self):
        return self.wiener.shape[1]

    def stream(self, name):
        return self.jumps.get(name, JumpStream.empty())

    def coarsen(self, factor):
        """Same path on a grid ``factor`` times coarser (increments summed)."""
        g = self.grid.coarsen(factor)
        w = self.wiener.reshape(g.steps, factor, self.modes).sum(axis=1)
        return NoiseRealization(g, w, self.jumps, self.marks, self.seed, self.path, self.fine_steps)

    def split_increment(self, step, cuts):
        """Brownian-bridge split of step ``step`` at offsets ``cuts`` (from the step start).

        Returns ``len(cuts) + 1`` increments summing to ``wiener[step]``.
        """
        total = self.wiener[step]
        if not len(cuts):
            return total[None, :]
        dt = self.grid.times()[step + 1] - self.grid.times()[step]
        rng = substream(self.seed, self.path, BRIDGE, self.fine_steps, self.grid.steps, step)
        z = rng.standard_normal((len(cuts), self.modes))
        pieces = []
        w_prev, s_prev = np.zeros(self.modes), 0.0
        for c, zi in zip(cuts, z):
            mean = w_prev + (c - s_prev) / (dt - s_prev) * (total - w_prev)
            var = max((c - s_prev) * (dt - c) / (dt - s_prev), 0.0)
            w_c = mean + math.sqrt(var) * zi
            pieces.append(w_c - w_prev)
            w_prev, s_prev = w_c, c
        pieces.append(total - w_prev)
        return np.array(pieces)

    def substeps(self, stream):
        """Iterate ``(step, t0, t1, dw, events)`` over sub-intervals split at jump times.

        ``events`` lists the ``(time, mark_index)`` pairs occurring at ``t1``.
        """
        s = self.stream(stream)
        times = self.grid.times()
        k = 0
        for n in range(self.grid.steps):
            t0, t1 = times[n], times[n + 1]
            ev = []
            while k < len(s) and s.times[k] <= t1:
                ev.append((float(s.times[k]), int(s.marks[k])))
                k += 1
            cuts = sorted({t for t, _ in ev if t < t1})
            dws = self.split_increment(n, [c - t0 for c in cuts])
            ends = cuts + [t1]
            start = t0
            for end, dw in zip(ends, dws):
                yield n, start, end, dw, [e for e in ev if e[0] == end]
                start = end


def sample_noise(grid, modes, seed, path=0, nu=None, pi2=None):
    jumps, marks = {}, {}
    for name, ms in (("N", nu), ("M", pi2)):
        if ms is not None:
            marks[name] = ms
            jumps[name] = sample_jumps(grid, ms, seed, path, name)
    return NoiseRealization(grid, sample_wiener(grid, modes, seed, path), jumps, marks, seed, path)


def dump_csv(noise, path_or_buf=None):
    """Write the jump events plus a textual header sufficient for replay.

    Wiener increments are not written; :func:`load_csv` regenerates them from
    the recorded seed, path index and mode count.
    """
    buf = io.StringIO()
    buf.write(f"# seed={noise.seed}\n# path={noise.path}\n# modes={noise.modes}\n")
    buf.write(f"# T={noise.grid.T!r}\n# steps={noise.grid.steps}\n# fine_steps={noise.fine_steps}\n")
    for name, ms in sorted(noise.marks.items()):
        buf.write(f"# marks {name}=" + ";".join(f"{lab}:{float(w)!r}" for lab, w in ms) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stream", "time", "mark"])
    for name in sorted(noise.jumps):
        s = noise.jumps[name]
        for t, m in zip(s.times, s.marks):
            w.writerow([name, repr(float(t)), int(m)])
    text = buf.getvalue()
    if path_or_buf is None:
        return text
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
    return text


def load_csv(source):
    if hasattr(source, "read"):
        text = source.read()
    elif "\n" in str(source):
        text = source
    else:
        with open(source) as fh:
            text = fh.read()
    header, rows = {}, []
    marks = {}
    for line in text.splitlines():
        if line.startswith("# marks "):
            name, entry = line[8:].split("=", 1)
            pairs = [p.split(":") for p in entry.split(";") if p]
            labels = [int(l) if l.lstrip("-").isdigit() else l for l, _ in pairs]
            marks[name] = MarkSpace.atoms([float(w) for _, w in pairs], labels)
        elif line.startswith("# "):
            k, v = line[2:].split("=", 1)
            header[k] = v
        elif line and not line.startswith("stream,"):
            rows.append(next(csv.reader([line])))
    fine = TimeGrid(float(header["T"]), int(header["fine_steps"]))
    seed, path, modes = int(header["seed"]), int(header["path"]), int(header["modes"])
    jumps = {name: JumpStream.empty() for name in marks}
    for name in {r[0] for r in rows}:
        sel = [r for r in rows if r[0] == name]
        jumps[name] = JumpStream(np.array([float(r[1]) for r in sel]), np.array([int(r[2]) for r in sel]))
    noise = NoiseRealization(fine, sample_wiener(fine, modes, seed, path), jumps, marks, seed, path)
    steps = int(header["steps"])
    return noise if steps == fine.steps else noise.coarsen(fine.steps // steps)
