"""Plot data from run logs: columnar text files plus a gnuplot script."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .log import LogSchemaError, read_gains, read_log

VELOCITY_COLUMNS = ("t", "com_vx", "com_vy", "com_vz", "des_vx", "des_vy", "vx_cmd", "vy_cmd")
EULER_COLUMNS = ("t", "base_roll", "base_pitch", "base_yaw", "des_roll", "des_pitch", "des_yaw")

GNUPLOT_SCRIPT = """\
# gnuplot script for one lqrtrot run; usage: gnuplot plots.gp
set terminal pngcairo size 900,500
set grid
set xlabel "time [s]"

set output "velocity.png"
set ylabel "CoM velocity [m/s]"
plot "velocity.dat" using 1:2 with lines title "v_x", \\
     "velocity.dat" using 1:3 with lines title "v_y", \\
     "velocity.dat" using 1:7 with lines dashtype 2 title "v_x command", \\
     "velocity.dat" using 1:8 with lines dashtype 2 title "v_y command"

set output "euler.png"
set ylabel "base angle [rad]"
plot "euler.dat" using 1:2 with lines title "roll", \\
     "euler.dat" using 1:3 with lines title "pitch", \\
     "euler.dat" using 1:4 with lines title "yaw"
"""

HEATMAP_SCRIPT = """
set output "gains.png"
set xlabel "state index"
set ylabel "input index"
set yrange [] reverse
set view map
plot "gain_heatmap.dat" matrix with image title "|K|"
"""


def _select(columns, data, names, path):
    missing = [n for n in names if n not in columns]
    if missing:
        raise LogSchemaError(f"{path}: log lacks columns {', '.join(missing)}")
    return data[:, [columns.index(n) for n in names]]


def _write_table(path, names, arr):
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in arr:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def gain_heatmap(gains_path, tick: int | None = None) -> tuple:
    """``(tick, |K|)`` for the requested snapshot, or the last one."""
    ticks, mats = read_gains(gains_path)
    if not mats:
        raise LogSchemaError(f"{gains_path}: no gain snapshots")
    i = len(mats) - 1 if tick is None else ticks.index(tick)
    return ticks[i], np.abs(mats[i])


def emit_plots(log_path, out_dir=None, gains_path=None) -> dict:
    """Write ``velocity.dat``, ``euler.dat``, ``gain_heatmap.dat`` and ``plots.gp``.

    ``out_dir`` defaults to the log's directory and ``gains_path`` to the
    ``gains.txt`` next to the log; the heatmap is skipped when that file is
    absent (a PD or standing run).  Returns the written paths by name.
    """
    log_path = Path(log_path)
    out = Path(out_dir) if out_dir is not None else log_path.parent
    out.mkdir(parents=True, exist_ok=True)
    _, columns, data = read_log(log_path)
    written = {}
    for name, cols in (("velocity", VELOCITY_COLUMNS), ("euler", EULER_COLUMNS)):
        p = out / f"{name}.dat"
        _write_table(p, cols, _select(columns, data, cols, log_path))
        written[name] = p
    script = GNUPLOT_SCRIPT
    gp = Path(gains_path) if gains_path is not None else log_path.parent / "gains.txt"
    if gp.exists() and read_gains(gp)[1]:
        _, H = gain_heatmap(gp)
        if H.size:
            p = out / "gain_heatmap.dat"
            np.savetxt(p, H, header="rows: inputs (base then joints), columns: base state")
            written["gain_heatmap"] = p
            script += HEATMAP_SCRIPT
    p = out / "plots.gp"
    p.write_text(script)
    written["script"] = p
    return written
