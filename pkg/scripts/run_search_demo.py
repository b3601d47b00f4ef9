"""Random-search demo: journaled, resumable, with a synthetic objective.

The objective scores a config by how close its learning rate is to 1e-3
and mildly rewards longer training, standing in for a real dev-set score.
"""

import argparse

from adipipe.schedules import run_search


def objective(cfg):
    return -abs(cfg.learning_rate - 1e-3) + 1e-9 * cfg.max_steps


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--budget", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--journal", required=True)
    parser.add_argument("--resume", action="store_true")
    args = parser.parse_args()

    ranked = run_search(objective, args.budget, args.seed,
                        journal_path=args.journal, resume=args.resume)
    print(f"{'rank':>4} {'index':>5} {'score':>12} {'lr':>10} {'batch':>5} {'steps':>6} {'dur':>6}")
    for rank, entry in enumerate(ranked[:10], start=1):
        c = entry.config
        print(f"{rank:>4} {entry.index:>5} {entry.score:>12.6g} {c.learning_rate:>10.3g} "
              f"{c.batch_size:>5} {c.max_steps:>6} {c.duration_s:>6.2f}")


if __name__ == "__main__":
    main()
