"""
From disaster records to next-N-year examples
=============================================

Build a small synthetic world, bin its events into 1 degree cells, and turn
each (cell, year) into a feature row with a "flood in the next N years" label.
"""

import tempfile

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from floodlens import featstat
from floodlens.dataset import build_examples, filter_grids
from floodlens.geogrid import cell_of_id
from floodlens.ingest import parse_events
from floodlens.synthetic import make_world

###############################################################################
# A world of 30 cells over 2004-2018. Every cell has at least two floods.

world = make_world(n_grids=30, years=(2004, 2018), seed=1)
paths = world.write(tempfile.mkdtemp())
table = parse_events(paths["disasters"], paths["damage"], window=world.window)
print(len(table.events), "events,", len(table.rejects), "rejected")

###############################################################################
# Events carry their cell id. Cells are indexed south to north, west to east.

gid = table.events[0].grid
print(table.events[0].lat, table.events[0].lon, "->", gid, "->", cell_of_id(gid))

###############################################################################
# 24 yearly statistics per cell (count, any, damage for eight disaster types)
# plus the year itself.

rows = featstat.feature_matrix(table, sorted(filter_grids(table)), range(2004, 2019))
feats = {(r.grid, r.year): r for r in rows}
row = feats[(gid, 2010)]
for name, value in zip(featstat.FEATURE_NAMES, row.vector()):
    if value:
        print(f"{name:>28s} {value:g}")

###############################################################################
# Examples for a 2-year horizon. The last two years have no complete label
# window, so they are dropped.

data = build_examples(table, sorted(filter_grids(table)), 2, world.window, feats)
print(data.X.shape, "positive rate %.2f" % data.y.mean())

###############################################################################
# The persistence rule (this year's flood predicts the next N years) already
# carries signal. Positive rate split by the current-year flood flag:

current = data.current_flood
for flag in (0, 1):
    print("flood this year =", flag, " P(flood in next 2y) = %.2f" % data.y[current == flag].mean())

###############################################################################
# Flood years per cell.

fig, ax = plt.subplots(figsize=(6, 4))
grids = sorted(filter_grids(table))
years = table.flood_years()
for i, g in enumerate(grids):
    ax.plot(sorted(set(years[g])), [i] * len(set(years[g])), "s", ms=4, c="tab:blue")
ax.set_xlabel("year")
ax.set_ylabel("cell")
ax.set_yticks([])
fig.tight_layout()
fig.savefig("flood_years.png", dpi=80)
