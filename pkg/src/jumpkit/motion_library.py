"""Warm-start library: a grid of solved jumps, persisted as plain text.

Replanning from scratch costs hundreds of generations; replanning from
the stored solution of the nearest previously solved target costs a
handful.  The library is built offline over a target grid, saved as a
human-readable manifest plus a fixed-width record file, and queried
online by nearest target within a radius.

Determinism contract: a build is a pure function of (grid, modes,
config, robot, master seed).  Every grid cell derives its own RNG from
the master seed and its ordinal, so worker count, scheduling order, and
checkpoint resumes never change the result bytes.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .grf_profile import OPT_DIMS, OptVector
from .jump_plane import PlaneError
from .jump_sim import DEFAULT_DT, simulate_jump
from .optimizer import DEConfig, OptimizationFailed, optimize
from .robot_model import RobotParams

INDEX_NAME = "premotion.index"
RECORD_NAME = "premotion.dat"
INDEX_MAGIC = "# premotion index v1"

# Two targets closer than this are the same cell; storing both would
# make nearest-neighbor results depend on insertion order.
DEDUPE_RADIUS = 1e-6

LOOKUP_RADIUS = 0.05

_FLOAT_FMT = "%24.17g"


class LibraryFormatError(ValueError):
    """Raised when a library file fails parsing or validation."""


def _fmt_floats(values) -> str:
    return " ".join(_FLOAT_FMT % v for v in np.asarray(values, float).ravel())


@dataclass(frozen=True)
class MotionLibraryEntry:
    """One solved jump: where it lands and the vector that got it there."""

    entry_id: int
    target: np.ndarray
    yaw: float
    mode: str
    values: np.ndarray
    fitness: float
    generations: int
    obstacle: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.target, float)
        v = np.asarray(self.values, float)
        if t.shape != (3,) or not np.isfinite(t).all():
            raise ValueError("target must be a finite 3-vector")
        if self.mode not in OPT_DIMS:
            raise ValueError(f"unknown mode {self.mode!r}")
        if v.shape != (OPT_DIMS[self.mode],) or not np.isfinite(v).all():
            raise ValueError(f"{self.mode} entry needs {OPT_DIMS[self.mode]} values")
        if self.obstacle is not None:
            o = np.asarray(self.obstacle, float)
            if o.shape != (12,) or not np.isfinite(o).all():
                raise ValueError("obstacle record must be 12 finite numbers")
            object.__setattr__(self, "obstacle", o)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "values", v)

    @property
    def vector(self) -> OptVector:
        return OptVector(self.mode, self.values)

    def record_line(self) -> str:
        obs = "1 " + _fmt_floats(self.obstacle) if self.obstacle is not None else "0"
        return (
            f"{self.entry_id:8d} {self.mode:<8s} "
            f"{_fmt_floats(self.target)} {_FLOAT_FMT % self.yaw} "
            f"{_FLOAT_FMT % self.fitness} {self.generations:8d} "
            f"{self.values.size:4d} {_fmt_floats(self.values)} {obs}"
        )

    @classmethod
    def from_record(cls, line: str, where: str) -> "MotionLibraryEntry":
        parts = line.split()
        try:
            entry_id = int(parts[0])
            mode = parts[1]
            if mode not in OPT_DIMS:
                raise ValueError(f"unknown mode {mode!r}")
            target = np.array([float(p) for p in parts[2:5]])
            yaw = float(parts[5])
            fitness = float(parts[6])
            generations = int(parts[7])
            dim = int(parts[8])
            if dim != OPT_DIMS[mode]:
                raise ValueError(f"mode {mode!r} expects {OPT_DIMS[mode]} values, record says {dim}")
            values = np.array([float(p) for p in parts[9 : 9 + dim]])
            if values.size != dim:
                raise ValueError("record ends before its stated value count")
            rest = parts[9 + dim :]
            if not rest or rest[0] not in ("0", "1"):
                raise ValueError("missing obstacle flag")
            obstacle = None
            if rest[0] == "1":
                if len(rest) != 13:
                    raise ValueError("obstacle flag 1 requires 12 numbers")
                obstacle = np.array([float(p) for p in rest[1:13]])
            elif len(rest) != 1:
                raise ValueError("trailing fields after obstacle flag 0")
        except (ValueError, IndexError) as exc:
            raise LibraryFormatError(f"{where}: bad record: {exc}") from None
        return cls(entry_id, target, yaw, mode, values, fitness, generations, obstacle)


@dataclass(frozen=True)
class BuildFailure:
    """A grid cell the solver could not close; kept for the manifest."""

    ordinal: int
    target: np.ndarray
    mode: str
    reason: str


class MotionLibrary:
    """Immutable set of solved jumps with per-mode nearest-target search."""

    def __init__(self, entries, failures=()):
        self.entries = tuple(entries)
        self.failures = tuple(failures)
        self._trees: dict = {}
        self._by_mode: dict = {}
        for e in self.entries:
            self._by_mode.setdefault(e.mode, []).append(e)
        for mode, group in self._by_mode.items():
            pts = np.array([e.target for e in group])
            tree = cKDTree(pts)
            pairs = tree.query_pairs(DEDUPE_RADIUS)
            if pairs:
                i, j = sorted(pairs)[0]
                raise LibraryFormatError(
                    f"entries {group[i].entry_id} and {group[j].entry_id} "
                    f"share a {mode} target within {DEDUPE_RADIUS:g} m"
                )
            self._trees[mode] = (tree, group)

    def __len__(self) -> int:
        return len(self.entries)

    def modes(self) -> tuple:
        return tuple(sorted(self._by_mode))

    def lookup(self, p_tg, mode: str = "omni", r: float = LOOKUP_RADIUS):
        """Nearest same-mode entry within r of the target, else None."""
        got = self._trees.get(mode)
        if got is None:
            return None
        tree, group = got
        dist, idx = tree.query(np.asarray(p_tg, float), k=1)
        if not np.isfinite(dist) or dist >= r:
            return None
        return group[int(idx)]

    def stats(self) -> dict:
        per_mode = {m: len(g) for m, g in self._by_mode.items()}
        out = {"entries": len(self.entries), "failures": len(self.failures), "per_mode": per_mode}
        if self.entries:
            pts = np.array([e.target for e in self.entries])
            out["target_min"] = pts.min(axis=0)
            out["target_max"] = pts.max(axis=0)
            out["median_generations"] = float(np.median([e.generations for e in self.entries]))
        return out

    # -- persistence ---------------------------------------------------

    def save(self, directory) -> tuple:
        os.makedirs(directory, exist_ok=True)
        dat_path = os.path.join(directory, RECORD_NAME)
        idx_path = os.path.join(directory, INDEX_NAME)
        dat = "".join(e.record_line() + "\n" for e in self.entries).encode()
        with open(dat_path, "wb") as fh:
            fh.write(dat)
        digest = hashlib.sha256(dat).hexdigest()
        lines = [
            INDEX_MAGIC,
            "# fields: id x y z yaw mode",
            f"# records: {RECORD_NAME} sha256={digest}",
            f"# count: {len(self.entries)}",
        ]
        for e in self.entries:
            t = e.target
            lines.append(f"{e.entry_id:8d} {t[0]:12.6f} {t[1]:12.6f} {t[2]:12.6f} {e.yaw:12.6f} {e.mode}")
        for f in self.failures:
            t = f.target
            lines.append(
                f"# fail {f.ordinal} {t[0]:.6f} {t[1]:.6f} {t[2]:.6f} {f.mode} {f.reason}"
            )
        with open(idx_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        return idx_path, dat_path

    @classmethod
    def load(cls, directory) -> "MotionLibrary":
        if os.path.isdir(directory):
            idx_path = os.path.join(directory, INDEX_NAME)
            dat_path = os.path.join(directory, RECORD_NAME)
        else:
            idx_path = str(directory)
            dat_path = os.path.join(os.path.dirname(idx_path), RECORD_NAME)
        with open(idx_path) as fh:
            idx_lines = fh.read().splitlines()
        if not idx_lines or idx_lines[0] != INDEX_MAGIC:
            raise LibraryFormatError(f"{idx_path}:1: not a premotion index")
        digest = None
        count = None
        manifest_ids = []
        failures = []
        for lineno, line in enumerate(idx_lines[1:], start=2):
            if line.startswith("# records:"):
                digest = line.rsplit("sha256=", 1)[-1].strip()
            elif line.startswith("# count:"):
                try:
                    count = int(line.split(":", 1)[1])
                except ValueError:
                    raise LibraryFormatError(f"{idx_path}:{lineno}: bad count") from None
            elif line.startswith("# fail "):
                bits = line.split(None, 7)
                try:
                    failures.append(
                        BuildFailure(
                            int(bits[2]),
                            np.array([float(bits[3]), float(bits[4]), float(bits[5])]),
                            bits[6],
                            bits[7] if len(bits) > 7 else "",
                        )
                    )
                except (ValueError, IndexError):
                    raise LibraryFormatError(f"{idx_path}:{lineno}: bad failure line") from None
            elif line.startswith("#") or not line.strip():
                continue
            else:
                try:
                    manifest_ids.append(int(line.split()[0]))
                except (ValueError, IndexError):
                    raise LibraryFormatError(f"{idx_path}:{lineno}: bad entry line") from None
        if digest is None or count is None:
            raise LibraryFormatError(f"{idx_path}: missing records checksum or count header")
        if count != len(manifest_ids):
            raise LibraryFormatError(
                f"{idx_path}: header count {count} but {len(manifest_ids)} entry lines"
            )
        with open(dat_path, "rb") as fh:
            dat = fh.read()
        entries = []
        lines = dat.decode(errors="replace").splitlines()
        for k, line in enumerate(lines):
            entries.append(MotionLibraryEntry.from_record(line, f"{dat_path}:{k + 1}"))
        if len(entries) != count:
            raise LibraryFormatError(
                f"{dat_path}: truncated after record {len(entries)} of {count}"
            )
        actual = hashlib.sha256(dat).hexdigest()
        if actual != digest:
            raise LibraryFormatError(f"{dat_path}: checksum mismatch against {idx_path}")
        for eid, e in zip(manifest_ids, entries):
            if eid != e.entry_id:
                raise LibraryFormatError(
                    f"{dat_path}: record id {e.entry_id} does not match manifest id {eid}"
                )
        for e in entries:
            if not e.fitness < 1e4:
                raise LibraryFormatError(
                    f"{dat_path}: entry {e.entry_id} stored with infeasible fitness {e.fitness:g}"
                )
        return cls(entries, failures)

    def recheck(self, params: RobotParams, dt: float = DEFAULT_DT) -> list:
        """Re-simulate every entry; return the ids that are no longer feasible.

        A stored vector encodes only the decision variables, so any drift
        in the dynamics or constraint code shows up here.
        """
        from .jump_plane import build_plane, sagittal_plane

        stale = []
        for e in self.entries:
            if e.mode == "humanoid":
                spec = sagittal_plane(e.target[[0, 2]])
            else:
                spec = build_plane(e.target, params.default_stance_feet())
            out = simulate_jump(e.vector, spec, params, dt)
            if not out.feasible:
                stale.append(e.entry_id)
        return stale


def grid_targets(box, step: float) -> np.ndarray:
    """Uniform lattice over an axis-aligned target box, C order.

    The lattice anchors at each lower bound; upper bounds are included
    when they land on the step within a small tolerance.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    axes = []
    for lo, hi in box:
        if hi < lo:
            raise ValueError("box upper bound below lower bound")
        axes.append(np.arange(lo, hi + 1e-9, step))
    return np.array([p for p in product(*axes)])


def _cell_seed(master_seed: int, ordinal: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(ordinal,)))


# Module-level so ProcessPoolExecutor can pickle it.
def _solve_cell(args):
    ordinal, target, mode, params, config, master_seed, dt = args
    rng = _cell_seed(master_seed, ordinal)
    goal = target[[0, 2]] if mode == "humanoid" else target
    try:
        res = optimize(goal, params, mode, seed=rng, config=config, dt=dt)
    except OptimizationFailed as exc:
        return ordinal, mode, None, f"infeasible: fitness {exc.result.fitness:.3g}"
    except PlaneError as exc:
        return ordinal, mode, None, f"no plane: {exc}"
    return ordinal, mode, (res.vector.values.copy(), res.fitness, res.generations), ""


def _parse_checkpoint(path) -> dict:
    done: dict = {}
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            # A crash can leave a torn final line; count only records that
            # carry their full payload.
            if len(parts) < 4:
                continue
            try:
                ordinal = int(parts[1])
                mode = parts[2]
                if parts[0] == "ok":
                    dim = OPT_DIMS.get(mode)
                    if dim is None:
                        continue
                    vals = np.array([float(p) for p in parts[3 : 3 + dim]])
                    if vals.size != dim or len(parts) < 3 + dim + 2:
                        continue
                    fit = float(parts[3 + dim])
                    gens = int(parts[4 + dim])
                    done[(ordinal, mode)] = (vals, fit, gens, "")
                elif parts[0] == "fail":
                    done[(ordinal, mode)] = (None, None, None, " ".join(parts[3:]))
            except ValueError:
                continue
    return done


def build_library(
    box,
    step: float,
    params: RobotParams,
    modes=("omni",),
    config: DEConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    checkpoint=None,
    dt: float = DEFAULT_DT,
) -> MotionLibrary:
    """Solve every grid target cold and collect the feasible results.

    Each (mode, cell) pair gets an independent seed derived from the
    master seed and the cell ordinal, so results are identical no matter
    how the work is scheduled.  With a checkpoint path, finished cells
    are appended as they complete and skipped on the next run.
    """
    config = config or DEConfig.online()
    targets = grid_targets(box, step)
    jobs = []
    for mode in modes:
        for ordinal, target in enumerate(targets):
            jobs.append((ordinal, target, mode))
    done = _parse_checkpoint(checkpoint) if checkpoint else {}
    pending = [(o, t, m) for (o, t, m) in jobs if (o, m) not in done]

    ck = open(checkpoint, "a") if checkpoint else None
    try:
        def record(ordinal, mode, payload, reason):
            done[(ordinal, mode)] = (
                (payload[0], payload[1], payload[2], "") if payload else (None, None, None, reason)
            )
            if ck is None:
                return
            if payload:
                vals, fit, gens = payload
                ck.write(f"ok {ordinal} {mode} {_fmt_floats(vals)} {_FLOAT_FMT % fit} {gens}\n")
            else:
                ck.write(f"fail {ordinal} {mode} {reason}\n")
            ck.flush()

        work = [(o, t, m, params, config, seed, dt) for (o, t, m) in pending]
        if workers > 1 and work:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for ordinal, mode, payload, reason in pool.map(_solve_cell, work, chunksize=1):
                    record(ordinal, mode, payload, reason)
        else:
            for args in work:
                ordinal, mode, payload, reason = _solve_cell(args)
                record(ordinal, mode, payload, reason)
    finally:
        if ck is not None:
            ck.close()

    entries = []
    failures = []
    next_id = 0
    kept: dict = {}
    for mode in modes:
        for ordinal, target in enumerate(targets):
            vals, fit, gens, reason = done[(ordinal, mode)]
            if vals is None:
                failures.append(BuildFailure(ordinal, target, mode, reason))
                continue
            # Within-run dedupe: identical targets can only enter once.
            key = (mode, tuple(np.round(target / DEDUPE_RADIUS).astype(np.int64)))
            if key in kept:
                continue
            kept[key] = True
            entries.append(
                MotionLibraryEntry(next_id, target, 0.0, mode, vals, float(fit), int(gens))
            )
            next_id += 1
    return MotionLibrary(entries, failures)
