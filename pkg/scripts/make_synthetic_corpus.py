"""Generate a synthetic frame-feature corpus for pipeline exercises.

Writes <out>/features/*.fmx, <out>/manifest.jsonl (labeled train/test) and
<out>/pool.jsonl (unlabeled, country-tagged records for the silver-label
loop).
"""

import argparse

from adipipe.synthetic import DEFAULT_CLASSES, make_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--classes", default=",".join(DEFAULT_CLASSES),
                        help="comma-separated country codes")
    parser.add_argument("--per-class", type=int, default=200)
    parser.add_argument("--pool-per-class", type=int, default=50)
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    classes = tuple(args.classes.split(","))
    manifest, pool = make_corpus(args.out, classes=classes, per_class=args.per_class,
                                 dim=args.dim, pool_per_class=args.pool_per_class,
                                 seed=args.seed)
    print(f"wrote {len(manifest)} labeled + {len(pool)} pool utterances under {args.out}")


if __name__ == "__main__":
    main()
