"""Characteristics of a weakly swirling velocity field and damped transport along them."""
import numpy as np

from fannoflow.spectral import DuctSpec
from fannoflow.transport import march, trace_characteristics


def main():
    spec = DuctSpec.from_steps(1.0, 100, 32, 8)
    x0, X1, X2 = spec.mesh()
    u0 = np.broadcast_to(1.0 + 0.05 * np.cos(X1), spec.shape)
    u1 = np.broadcast_to(0.02 * np.sin(X2) * (1 + x0), spec.shape)
    u2 = np.broadcast_to(0.02 * np.cos(X1 + x0), spec.shape)
    cmap = trace_characteristics((u0, u1, u2), spec)
    bound = spec.length / u0.min() * np.sqrt(u1**2 + u2**2).max()
    print(f"max tangential displacement {cmap.max_displacement:.4e} (bound {bound:.4e})")
    inlet = np.sin(X1[0]) * np.cos(X2[0])
    I = march(cmap, np.zeros(spec.shape), 0.2, inlet, spec=spec)
    print(f"inlet amplitude {np.abs(inlet).max():.4f}, exit amplitude {np.abs(I[-1]).max():.4f}, "
          f"exp(-0.2 L) = {np.exp(-0.2):.4f}")


if __name__ == "__main__":
    main()
