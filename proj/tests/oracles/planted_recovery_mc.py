"""Monte-Carlo estimate of planted-expert AP at a given shift.

Independent of the C++ engine: numpy noise, sklearn-free AP with
pessimistic ties. Used to pin the recovery gate before building.
"""
import argparse
import numpy as np


def ap_pessimistic(scores, labels):
    # sort by score desc, negatives first inside ties
    order = np.lexsort((labels, -scores))
    lab = labels[order]
    tp = np.cumsum(lab)
    ranks = np.arange(1, len(lab) + 1)
    return float(np.sum((tp / ranks)[lab == 1]) / lab.sum())


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--shift", type=float, default=4.0)
    p.add_argument("--experts", type=int, default=50)
    p.add_argument("--pos", type=int, default=400)
    p.add_argument("--neg", type=int, default=1000)
    p.add_argument("--noise-neurons", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=20)
    a = p.parse_args()
    labels = np.r_[np.ones(a.pos, int), np.zeros(a.neg, int)]
    min_planted, max_noise = 1.0, 0.0
    for s in range(a.seeds):
        rng = np.random.default_rng(s)
        for _ in range(a.experts):
            x = rng.standard_normal(a.pos + a.neg)
            x[: a.pos] += a.shift
            min_planted = min(min_planted, ap_pessimistic(x, labels))
        for _ in range(a.noise_neurons // a.seeds):
            x = rng.standard_normal(a.pos + a.neg)
            max_noise = max(max_noise, ap_pessimistic(x, labels))
    print(f"shift={a.shift} min planted AP={min_planted:.4f} max noise AP={max_noise:.4f}")


if __name__ == "__main__":
    main()
