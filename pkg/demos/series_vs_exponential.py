"""Amplitude damping built jump by jump.

The free evolution keeps the no-jump part, the jump operator moves |1> to |0>.
Summing the series reproduces exp(tL) to quadrature accuracy, and because a
second decay is impossible the series stops after one jump.
"""
import numpy as np

from qjumpmaps import TimeGrid, laplace_check, series
from qjumpmaps.models import model_amplitude_damping

desc = model_amplitude_damping(1.0)
for n in (128, 256, 512, 1024):
    g = TimeGrid.span(0, 2, n)
    res = series(desc.jump_model(g))
    ref = np.array([desc.exact(t) for t in g.nodes])
    err = np.max(np.linalg.norm(res.total.values - ref, 2, axis=(1, 2)))
    print(f"h = 1/{n // 2:<4d} terms = {res.n_terms}  sup error = {err:.3e}")

g = TimeGrid.span(0, 2, 1024)
res = series(desc.jump_model(g))
print("term sup-norms:", ", ".join(f"{t.sup_norm():.3e}" for t in res.terms))
rho1 = np.array([0, 0, 0, 1.0])
print(f"excited population at t = 1: {(res.total.values[512] @ rho1)[3].real:.6f} (exp(-1) = {np.exp(-1):.6f})")

# the resolvent identity in Laplace space needs a long window
g = TimeGrid.span(0, 20, 20 * 128)
m = desc.jump_model(g)
for s, d in zip((1.0, 2.0), laplace_check(series(m, keep_terms=False), m, [1.0, 2.0])):
    print(f"Laplace resolvent defect at s = {s}: {d:.2e}")
