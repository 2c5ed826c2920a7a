"""A semi-Markov process: memory in the waiting time.

Jumps apply the depolarizing channel after a gamma-distributed waiting time,
so the map has a genuine memory kernel.  The same map is computed three ways:
the jump series, the memory-kernel Volterra equation, and the closed form.
Making the rate depend on the time of the last jump gives an inhomogeneous
model with no closed-form kernel.
"""
import numpy as np

from qjumpmaps import OneParamFamily, TimeGrid, lift, new_me_residual, series, solve_volterra, z_from_free
from qjumpmaps.kernel_solver import reconvolution_residual
from qjumpmaps.models import model_semi_markov


def sup(x):
    return np.max(np.linalg.norm(x, 2, axis=(-2, -1)))


for kq in (None, 0.1):
    desc = model_semi_markov("gamma2", 1.0, kappa_quad=kq)
    print(f"\n{desc.regime} model, parameters {desc.parameters}")
    prev = None
    for n in (64, 128, 256):
        g = TimeGrid.span(0, 1, n)
        m = desc.jump_model(g)
        tot = series(m).lifted_total()
        sol = solve_volterra(m.kernel())
        if not sol.full:
            sol = lift(OneParamFamily(g, sol.column(0)))
        exact = np.array([[desc.exact(t, s) if i >= j else np.zeros((4, 4))
                           for j, s in enumerate(g.nodes)] for i, t in enumerate(g.nodes)])
        r = new_me_residual(tot, m.free, m.phi_kernel())
        order = "" if prev is None else f" (order {np.log2(prev / r):.2f})"
        prev = r
        print(f"  h = 1/{n:<3d} series-Volterra {sup(tot.entries() - sol.entries()):.2e}"
              f"  series-exact {sup(tot.entries() - exact[tot.mask()]):.2e}  kernel-equation residual {r:.2e}{order}")

# recover Z from the free evolution alone and check it reproduces d/dt free
g = TimeGrid.span(0, 1, 128)
m = model_semi_markov("gamma2", 1.0).jump_model(g)
free = lift(m.free)
Z = z_from_free(free)
k = 1.0 * np.exp(-2 * (g.nodes[:, None] - g.nodes[None, :]))
print("\nZ recovered from the free evolution:")
print(f"  reconvolution residual {reconvolution_residual(free, Z):.2e}")
print(f"  |delta part| max {np.max(np.abs(Z.delta)):.2e}, regular part vs k(t - s) id:"
      f" {np.max(np.abs(Z.regular.values[..., 0, 0] - k)[np.tri(g.N, dtype=bool)]):.2e}")
