"""Picard iteration for a small exit-pressure perturbation, at three amplitudes."""
import numpy as np

from fannoflow.background import integrate_background
from fannoflow.gas import GasModel
from fannoflow.iteration import BoundaryData, IterationConfig, SolverContext, euler_residual, reconstruct, solve_fixed_point
from fannoflow.spectral import DuctSpec


def main():
    gas = GasModel(gamma=1.4, mu=0.1)
    n = 100
    ctx = SolverContext(integrate_background(0.5, 1.0, gas, n_steps=n, p_exit=1.0), gas, DuctSpec.from_steps(1.0, n, 32, 8))
    X1, _ = ctx.spec.cross_section()
    for eps in (1e-3, 5e-4, 2.5e-4):
        bd = BoundaryData.from_deviations(ctx, dp1=eps * np.cos(X1))
        U, rep = solve_fixed_point(bd, ctx, IterationConfig(eps=eps))
        _, norms = euler_residual(reconstruct(U, ctx), gas, ctx.spec)
        worst = max(v["max"] for v in norms.values())
        print(f"eps {eps:.2e}: {rep.iters} iterations, contraction {max(rep.ratio_estimates):.2e}, "
              f"|U|/eps {rep.solution_norm / eps:.3f}, Euler residual {worst:.2e}")


if __name__ == "__main__":
    main()
