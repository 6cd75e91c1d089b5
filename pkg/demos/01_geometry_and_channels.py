"""Grid, steering vectors and channels for one UAV position.

Run: python3 demos/01_geometry_and_channels.py
"""

import numpy as np

from aisac.experiment import desk_scale
from aisac.scenario import build_grid, channel_set, steering_vector

cfg = desk_scale(seed=0)
grid = build_grid(cfg)
print(f"{grid.size} cells, pitch {grid.cell_pitch_x:.1f} m x {grid.cell_pitch_y:.1f} m")
start, finish = grid.index_of(cfg.start), grid.index_of(cfg.finish)
print(f"start cell {start}, finish cell {finish}, {grid.hop_distances(finish)[start]} moves apart")
print("neighbours of cell 27:", grid.adjacency[27])

# broadside and endfire responses of a 4-element array
print("a(pi/2) =", np.round(steering_vector(np.pi / 2, 4), 3))
print("a(0)    =", np.round(steering_vector(0.0, 4), 3))

ch = channel_set(grid.center(27), cfg)
for k, (d, h) in enumerate(zip(ch.d_ue, ch.h)):
    print(f"UE {k}: distance {d:7.1f} m, |h| per entry {abs(h[0]):.3e}")
for j, G in enumerate(ch.G):
    s = np.linalg.svd(G, compute_uv=False)
    print(f"target {j}: sensing channel singular values {s[0]:.3e}, {s[1]:.1e} (rank one)")
