"""The target histogram's shape matters more than its size.

Two desk-scale experiments with censored exchange on a 10x10 grid:

  * sparsity: alphabet M = 60 but mass uniform on only M* of the bins;
    sparser targets are learned faster at the same alphabet size.
  * skew: two bins hold 0.38 each and the rest share 0.24; growing the
    alphabet barely changes the (L2) convergence because small bins
    contribute little squared error.

Usage: python demos/demo_initial_distributions.py
"""

from socialsampling.config import ExperimentConfig, Skewed, UniformSupport, parse_topology_compact
from socialsampling.harness import sweep


def main():
    print("sparsity sweep: uniform target on M* of 60 bins")
    cfg = ExperimentConfig(
        topology=parse_topology_compact("grid:10x10"),
        alphabet=60,
        initial=UniformSupport(None),
        variant="censored_exchange",
        schedule="harmonic",
        schedule_c=1.0,
        horizon=10_000,
        trials=6,
        base_seed=4,
        sweep_axis="support",
        sweep_values=("2", "5", "10", "15"),
    )
    print(f"  {'support M*':>10s} {'initial mse':>12s} {'final mse':>12s}")
    for res in sweep(cfg, threads=2):
        print(f"  {res.label[7:]:>10s} {res.mse_mean[0]:12.3e} {res.mse_mean[-1]:12.3e}")

    print("\nskew sweep: (0.38, 0.38, 0.24/(M-2), ...) for growing M")
    cfg = ExperimentConfig(
        topology=parse_topology_compact("grid:10x10"),
        alphabet=5,
        initial=Skewed(),
        variant="censored_exchange",
        schedule="harmonic",
        schedule_c=1.0,
        horizon=10_000,
        trials=6,
        base_seed=4,
        sweep_axis="alphabet",
        sweep_values=("5", "12", "26"),
    )
    print(f"  {'alphabet M':>10s} {'initial mse':>12s} {'final mse':>12s}")
    for res in sweep(cfg, threads=2):
        print(f"  {res.label[1:]:>10s} {res.mse_mean[0]:12.3e} {res.mse_mean[-1]:12.3e}")

    print("\nthe skewed targets converge at nearly the same speed for every M,")
    print("while the uniform ones slow down as the support widens.")


if __name__ == "__main__":
    main()
