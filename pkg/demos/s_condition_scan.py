"""Per-mode solvability scan over friction strength."""
import numpy as np

from fannoflow.background import FannoFlow
from fannoflow.elliptic import assemble_coefficients, check_s_condition, sub_threshold_intervals, sweep_mu
from fannoflow.gas import GasModel
from fannoflow.spectral import DuctSpec


def coefficients_for(mu, x, M0=0.5):
    gas = GasModel(gamma=1.4, mu=mu)
    return assemble_coefficients(FannoFlow.through(gas, M0, 1.0, 1.0).sample(x), gas)


def main():
    mode_cut = 16
    x = DuctSpec.from_steps(1.0, 500, 32, mode_cut).x0
    report = check_s_condition(coefficients_for(0.0, x), mode_cut=mode_cut)
    print(f"mu = 0: {report.verdict}, min |theta| = {report.min_abs_vartheta:.3e}")
    mus = np.linspace(0.001, 0.1, 100)
    reports = sweep_mu(lambda mu: coefficients_for(mu, x), mus, mode_cut=mode_cut)
    for mu, r in list(zip(mus, reports))[::20]:
        print(f"mu = {mu:.3f}: {r.verdict}, min |theta| = {r.min_abs_vartheta:.3e}")
    intervals = sub_threshold_intervals(mus, reports)
    print("sub-threshold intervals:", intervals or "none")


if __name__ == "__main__":
    main()
