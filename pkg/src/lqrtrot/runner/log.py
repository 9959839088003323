"""Tick logs written by a background thread."""
from __future__ import annotations

import queue
import threading
from pathlib import Path

import numpy as np

LOG_VERSION = 1
HEADER_TAG = "# lqrtrot-log"
FOOT_ORDER = ("LF", "RF", "LH", "RH")


def tick_columns(nj: int = 12) -> list:
    cols = ["tick", "t", "ts", "vx_cmd", "vy_cmd", "wz_cmd"]
    cols += [f"base_{k}" for k in ("x", "y", "z", "roll", "pitch", "yaw",
                                   "vx", "vy", "vz", "wx", "wy", "wz")]
    cols += [f"des_{k}" for k in ("x", "y", "z", "roll", "pitch", "yaw",
                                  "vx", "vy", "vz", "wx", "wy", "wz")]
    cols += [f"com_{k}" for k in ("x", "y", "z", "vx", "vy", "vz")]
    cols += ["zmp_x", "zmp_y"]
    cols += [f"stance_{f}" for f in FOOT_ORDER]
    cols += [f"contact_{f}" for f in FOOT_ORDER]
    cols += [f"fz_{f}" for f in FOOT_ORDER]
    cols += [f"tau_{j}" for j in range(nj)]
    cols += ["care_residual", "cl_max_real", "qp_feasible", "qp_iterations", "gain_held"]
    return cols


def format_row(values) -> str:
    """Shortest round-trip formatting, so reruns compare byte for byte."""
    return ",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))
                    for v in values)


class LogWriter:
    """CSV writer fed through a bounded queue.

    ``put`` never blocks the control loop; rows are dropped (and counted)
    when the queue is full.
    """

    def __init__(self, path, columns, meta: dict | None = None, maxsize: int = 100000):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self.dropped = 0
        self.rows = 0
        self._fh = open(self.path, "w", newline="")
        self._fh.write(f"{HEADER_TAG} v{LOG_VERSION}\n")
        for k, v in (meta or {}).items():
            self._fh.write(f"# {k}: {v}\n")
        self._fh.write(",".join(columns) + "\n")
        self._thread = threading.Thread(target=self._run, name="log-writer", daemon=True)
        self._thread.start()

    def put(self, line: str) -> None:
        try:
            self._q.put_nowait(line)
        except queue.Full:
            self.dropped += 1

    def _run(self):
        while True:
            line = self._q.get()
            if line is None:
                break
            self._fh.write(line + "\n")
            self.rows += 1

    def close(self) -> None:
        if self._thread.is_alive():
            self._q.put(None)
            self._thread.join()
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LogSchemaError(ValueError):
    """Log file has an unknown or missing version tag."""


def read_log(path):
    """Return ``(meta, columns, data)`` with ``data`` a float array (rows x cols)."""
    path = Path(path)
    meta = {}
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith(HEADER_TAG):
            raise LogSchemaError(f"{path}: not a tick log")
        version = first[len(HEADER_TAG):].strip()
        if version != f"v{LOG_VERSION}":
            raise LogSchemaError(f"{path}: log version {version}, expected v{LOG_VERSION}")
        line = fh.readline()
        while line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
            line = fh.readline()
        columns = line.strip().split(",")
        rows = [ln for ln in fh.read().splitlines() if ln]
    data = np.array([[float(x) for x in r.split(",")] for r in rows]) if rows else \
        np.zeros((0, len(columns)))
    return meta, columns, data


def write_gains(path, ticks, gains) -> None:
    """Gain snapshots, one matrix per block, each preceded by its tick."""
    with open(path, "w") as fh:
        fh.write(f"{HEADER_TAG}-gains v{LOG_VERSION}\n")
        for k, K in zip(ticks, gains):
            fh.write(f"# tick {k} shape {K.shape[0]} {K.shape[1]}\n")
            for row in K:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_gains(path):
    ticks, mats, cur = [], [], None
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"{HEADER_TAG}-gains v{LOG_VERSION}":
            raise LogSchemaError(f"{path}: unknown gains file header {first!r}")
        for line in fh:
            if line.startswith("# tick"):
                parts = line.split()
                ticks.append(int(parts[2]))
                cur = []
                mats.append(cur)
            elif line.strip():
                cur.append([float(x) for x in line.split()])
    return ticks, [np.array(m) for m in mats]
