"""Oriented Bernoulli percolation on a line window crossed with levels.

Each level-l edge ((i, l), (j, l+1)) with j in {i-1, i, i+1} opens
independently with probability p.  Because the edge states are read as
"uniform < p" from seeds shared across the whole sweep, the open cluster
grows monotonically with p path by path, and the survival frequency is
exactly 0 at p = 0 and exactly 1 at p = 1.  This is the sanity instrument
behind cap-sweep comparisons: a block-to-block renewal structure with two
phases.
"""

import brwlab as bl


def main():
    horizon, replicas = 150, 300
    print(f"origin-cluster survival to level {horizon} ({replicas} replicas):")
    for p in (0.0, 0.3, 0.5, 0.6, 0.7, 0.85, 1.0):
        cfg = bl.PercolationConfig(p=p, horizon=horizon)
        res = bl.oriented_percolation(cfg, replicas, seed=23)
        print(f"  p={p:4.2f}: survival {res.frequency:5.3f} "
              f"[{res.ci[0]:.3f}, {res.ci[1]:.3f}], "
              f"mean axis revisits {res.revisit_mean:7.2f}")

    # one-sided window
    cfg = bl.PercolationConfig(p=0.8, horizon=horizon, base="n")
    res = bl.oriented_percolation(cfg, replicas, seed=23)
    print(f"\none-sided window at p=0.80: survival {res.frequency:.3f}, "
          f"mean revisits {res.revisit_mean:.2f}")


if __name__ == "__main__":
    main()
