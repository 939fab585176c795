"""
Connectivity thresholds
=======================

D is the smallest interaction range (in units of the period) at which the
inclusions form one connected cluster; D0 is the smallest gap between two
inclusions.  For an ellipse the two differ and, in between, the inclusions
connect into stripes.
"""

# %%
import numpy as np

from perfhom import geometry
from perfhom.grid import Box

shapes = {
    "ball(0.25)": geometry.Ball(0.25),
    "ball(0.49)": geometry.Ball(0.49),
    "ellipse(0.4, 0.25)": geometry.Ellipse((0.4, 0.25)),
}
for name, shape in shapes.items():
    pset = geometry.PerforatedSet(shape)
    print(f"{name:20s} |K|={shape.volume:.5f}  D={geometry.compute_D(pset):.6f}  D0={geometry.compute_D0(shape):.6f}")

# %%
# Components of the ellipse lattice on the unit square for a range below D0,
# between D0 and D, and above D.

ell = geometry.PerforatedSet(geometry.Ellipse((0.4, 0.25)))
delta = 0.1
for r in (0.1, 0.3, 0.6):
    rep = geometry.components(ell, delta, r * delta, Box.unit(2))
    rows = {int(k[1]) for k in rep.indices}
    print(f"eps/delta={r}: {rep.count} components over {len(rep.indices)} inclusions "
          f"({len(rows)} rows), per period: {rep.component_count_per_period}")

# %%
# Row structure at eps/delta = 0.3: every component is a row k2 = const.
rep = geometry.components(ell, delta, 0.3 * delta, Box.unit(2))
for lab in np.unique(rep.labels)[:3]:
    ks = rep.indices[rep.labels == lab]
    print(f"component {lab}: k2 values {sorted(set(ks[:, 1].tolist()))}, {len(ks)} inclusions")
