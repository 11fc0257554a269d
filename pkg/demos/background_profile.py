"""Subsonic Fanno profile: Mach growth toward choking and conserved invariants."""
import numpy as np

from fannoflow.background import choking_length_from_ode, integrate_background, max_length
from fannoflow.gas import GasModel


def main():
    gas = GasModel(gamma=1.4, mu=0.01)
    M0 = 0.5
    L_max = max_length(M0, gas)
    print(f"choking length for M0={M0}: {L_max:.4f} (ODE event {choking_length_from_ode(M0, gas):.4f})")
    for frac in (0.25, 0.5, 0.9, 0.99):
        prof = integrate_background(M0, frac * L_max, gas, n_steps=2000, p_exit=1.0)
        print(f"  L = {frac:4.2f} L_max: exit Mach {prof.M[-1]:.4f}, exit pressure {prof.p[-1]:.3f}")
    prof = integrate_background(M0, 0.9 * L_max, gas, n_steps=2000, p_exit=1.0)
    for name, drift in prof.invariants().items():
        print(f"  {name}: {drift:.2e}")
    print("velocity rises monotonically:", bool(np.all(np.diff(prof.u) > 0)))


if __name__ == "__main__":
    main()
