"""
Nearest-neighbour constants by dimension
========================================

The mean scaled nearest-neighbour distance converges to a constant that
depends only on the dimension.  Here the closed form is compared with a
torus Monte Carlo estimate, and the gap between the two cube constants is
tabulated.
"""

# %%
from truh.core import RngStream
from truh.constants import (ConstantsMode, closed_form_constants, delta_mst_table,
                            estimate_constants_mc)

# %%
# Closed form against simulation on the flat torus, where there are no
# boundary effects.
root = RngStream(3)
print(" d   closed   torus     se")
for d in (1, 2, 3, 5, 8):
    exact = closed_form_constants(d).zeta1
    mc = estimate_constants_mc(d, 20_000, 10, ConstantsMode.TORUS, root.child(d))
    print(f"{d:>2} {exact:8.4f} {mc.zeta1:7.4f} {mc.se_zeta1:6.4f}")

# %%
# On the unit cube the baseline-to-baseline distance is larger than the
# case-to-baseline one; their difference is the limit of the statistic
# under the null.
for d in (1, 2, 3):
    c = estimate_constants_mc(d, 20_000, 5, ConstantsMode.CUBE, root.child(100 + d))
    print(f"d={d}: zeta1={c.zeta1:.4f} zeta2={c.zeta2:.4f} Delta={c.delta_d:.4f}")

# %%
# The edge-count baseline needs the variance of MST degrees, shipped as a
# table.
print({d: round(delta_mst_table(d), 3) for d in (2, 5, 10, 30)})
