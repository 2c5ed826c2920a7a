"""Time-local generators and what they reveal about memory.

For a time-dependent GKLS evolution the generator extracted from
(d/dt Lambda) Lambda^-1 does not care where the evolution started.  For the
gamma-waiting semi-Markov map it does, and propagators built from different
initial times disagree: the map is not divisible.
"""
import warnings

import numpy as np

from qjumpmaps import (TimeGrid, composition_defect, extract_tcl, lift, propagator_t0_defect, roundtrip_defect,
                       series, tcl_t0_defect)
from qjumpmaps.models import model_dephasing_inhom, model_semi_markov

g = TimeGrid.span(0, 2, 512)
budget = 10 * g.h ** 2
t0s = [0, 64, 128, 256]
cases = {
    "dephasing, gamma(t) = 1 + 0.5 sin 2t": model_dephasing_inhom(),
    "semi-Markov, gamma2 waiting": model_semi_markov("gamma2", 1.0),
}
print(f"grid h = {g.h}, budget 10 h^2 = {budget:.2e}")
for label, desc in cases.items():
    res = series(desc.jump_model(g), columns=None if desc.homogeneous else t0s)
    F = res.lifted_total(t0s)
    print(f"\n{label}")
    print(f"  composition defect      {composition_defect(F):.2e}")
    print(f"  TCL t0 dependence       {tcl_t0_defect(F, t0s):.2e}")
    print(f"  propagator t0 defect    {propagator_t0_defect(F, t0s):.2e}")
    print(f"  roundtrip from t0 = 0   {roundtrip_defect(F, 0):.2e}")
    tcl = extract_tcl(F, 0)
    print(f"  largest condition number {np.nanmax(tcl.condition_log):.2e}")

# fast depolarization drives Lambda towards a rank-one map; ill-conditioned nodes are skipped
desc = model_semi_markov("exponential", 8.0)
F = lift(series(desc.jump_model(TimeGrid.span(0, 2, 400))).total)
with warnings.catch_warnings(record=True) as w:
    warnings.simplefilter("always")
    tcl = extract_tcl(F, 0, cond_max=1e4)
print(f"\nfast depolarization: {int((~tcl.valid).sum())} nodes skipped, first at index {tcl.first_invalid}")
for x in w:
    print("  warning:", x.message)
