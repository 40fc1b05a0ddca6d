"""Emit standalone matplotlib scripts that redraw a run from its artifacts."""
from __future__ import annotations

import os

_GRID_SCRIPT = '''"""Density snapshots of run {name!r}; reads only files in this run directory."""
import json
import os

import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
RUN = os.path.dirname(HERE)


def read_grid(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.index(b"\\nEND\\n") + 5
    head = dict(line.split(" ", 1) for line in blob[:end].decode("ascii").splitlines()[1:-1])
    nx, ny = int(head["nx"]), int(head["ny"])
    L = float(head["extent"].split()[1])
    return np.frombuffer(blob[end:], dtype="<f8").reshape(nx, ny), L, float(head.get("time", "nan"))


manifest = json.load(open(os.path.join(RUN, "manifest.json")))
T = manifest["derived"]["T_PO"]
kinds = {kinds!r}
files = sorted(f for f in manifest["artifacts"] if f.endswith(".grid"))
n_t = len(manifest["derived"]["times_absolute"])
fig, axes = plt.subplots(len(kinds), n_t, figsize=(2.6 * n_t, 2.6 * len(kinds)), squeeze=False)
for r, kind in enumerate(kinds):
    for c in range(n_t):
        ax = axes[r, c]
        path = os.path.join(RUN, "grids", f"{{kind}}_{{c:02d}}.grid")
        if not os.path.exists(path):
            ax.axis("off")
            continue
        v, L, t = read_grid(path)
        ax.imshow(v.T, origin="lower", extent=(0, L, 0, L), cmap="viridis")
        ax.set_title(f"{{kind}} t/T = {{t / T:.3g}}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{name}_grids.png"), dpi=150)
'''

_TRAJ_SCRIPT = '''"""Trajectories of run {name!r}; reads only files in this run directory."""
import json
import os

import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
RUN = os.path.dirname(HERE)

manifest = json.load(open(os.path.join(RUN, "manifest.json")))
L = manifest["scenario"]["billiard"]["L"]
T = manifest["derived"]["T_PO"]
fig, ax = plt.subplots(figsize=(5, 5))
poly = os.path.join(RUN, "po_polyline.csv")
if os.path.exists(poly):
    p = np.loadtxt(poly, delimiter=",", skiprows=1, ndmin=2)
    ax.plot(p[:, 0], p[:, 1], color="0.6", lw=2.5, label="periodic orbit")
colors = ["tab:red", "tab:blue", "tab:green", "tab:purple"]
for k, f in enumerate(sorted(a for a in manifest["artifacts"] if a.startswith("trajectories"))):
    d = np.loadtxt(os.path.join(RUN, f), delimiter=",", skiprows=1, ndmin=2)
    ax.plot(d[:, 1], d[:, 2], lw=0.6, color=colors[k % len(colors)], label=os.path.basename(f))
    ax.plot(d[0, 1], d[0, 2], "o", color=colors[k % len(colors)])
ax.set_xlim(0, L)
ax.set_ylim(0, L)
ax.set_aspect("equal")
ax.legend(fontsize=7, loc="upper right")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "{name}_trajectories.png"), dpi=150)
'''


def write_plot_scripts(out_dir, manifest):
    """Write the scripts relevant to the artifacts present; returns their
    paths relative to ``out_dir``."""
    name = manifest["scenario"]["name"]
    arts = manifest["artifacts"]
    pdir = os.path.join(out_dir, "plots")
    os.makedirs(pdir, exist_ok=True)
    written = []
    kinds = [k for k in ("quantum", "classical", "histogram")
             if any(a.startswith(f"grids/{k}_") and a.endswith(".grid") for a in arts)]
    if kinds:
        path = os.path.join(pdir, "plot_grids.py")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_GRID_SCRIPT.format(name=name, kinds=kinds))
        written.append(os.path.relpath(path, out_dir))
    if any(a.startswith("trajectories") for a in arts):
        path = os.path.join(pdir, "plot_trajectories.py")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_TRAJ_SCRIPT.format(name=name))
        written.append(os.path.relpath(path, out_dir))
    return written
