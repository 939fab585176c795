"""
Three regimes for the same affine function
==========================================

* eps >> delta: the energy of u itself tends to |K|^2 C_phi int |grad u|^2.
* eps ~ delta: the corrected function reproduces the cell-problem prediction.
* eps << delta: inclusions decouple; piecewise constants on inclusions cost
  an energy controlled by the kernel tail beyond the inclusion gap.
"""

# %%
from perfhom import geometry, kernels, regimes
from perfhom.grid import Box

ball = geometry.Ball(0.25)
u = regimes.TestFunction.affine([1.0, 0.0])
inner = Box.cube(0.375, 0.625)


def show(report):
    for r in report.rows:
        print(f"  eps={r['epsilon']:.5g} delta={r['delta']:.5g} energy={r['energy']:.6g} "
              f"predicted={r['predicted']:.6g} rel_error={r['rel_error']:.3g}")
    print("  verdicts:", report.verdicts)


# %%
print("supercritical (delta = eps/8)")
cfg = regimes.RegimeConfig("supercritical", [(2.0**-k, 2.0**-k / 8) for k in (2, 3, 4)], ball,
                           kernels.indicator(1.0, 2), u, Box.unit(2), omega_prime=inner, delta_div=16)
show(regimes.run_sweep(cfg))

# %%
# At fixed delta/eps the relative error does not move: the discrete energy is
# invariant under the joint rescaling of eps, delta and h.  Shrinking delta/eps
# is what drives it down.
print("supercritical, shrinking delta/eps at eps = 1/8")
cfg = regimes.RegimeConfig("supercritical", [(1 / 8, 1 / 8 / r) for r in (2, 4, 8, 16)], ball,
                           kernels.indicator(1.0, 2), u, Box.unit(2), omega_prime=inner, delta_div=16)
show(regimes.run_sweep(cfg))

# %%
print("critical (eps = delta)")
cfg = regimes.RegimeConfig("critical", [(1 / 8, 1 / 8), (1 / 16, 1 / 16)], ball, kernels.indicator(1.0, 2), u,
                           Box.unit(2), omega_prime=Box.cube(0.25, 0.75))
show(regimes.run_sweep(cfg))

# %%
print("subcritical (exponential kernel, delta = 1/8)")
cfg = regimes.RegimeConfig("subcritical", [(r / 8, 1 / 8) for r in (1 / 2, 1 / 4, 1 / 8, 1 / 16)], ball,
                           kernels.exponential(2.0, 2), regimes.TestFunction.affine([1.0, 0.5]),
                           Box.cube(0.0, 0.5), h_fixed=1 / 256, tol_tail=1e-12)
show(regimes.run_sweep(cfg))
