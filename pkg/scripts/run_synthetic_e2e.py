"""End-to-end pipeline exercise on a synthetic corpus.

Runs quantize -> bag -> train -> predict -> eval on labeled data, then the
silver-label loop (predict pool -> bucket -> assemble -> retrain -> eval)
for one self-training setting.
"""

import argparse
import sys
import time

from adipipe import cli
from adipipe.synthetic import make_corpus


def run(args_list):
    rc = cli.main(args_list)
    if rc != 0:
        sys.exit(rc)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--k", type=int, default=32)
    parser.add_argument("--per-class", type=int, default=200)
    parser.add_argument("--setting", default="high",
                        choices=("surrogate", "low", "medium", "high"))
    parser.add_argument("--seed", type=int, default=20)
    args = parser.parse_args()

    corpus = f"{args.workdir}/corpus"
    run_dir = f"{args.workdir}/run"
    seed = str(args.seed)
    start = time.monotonic()

    make_corpus(corpus, per_class=args.per_class, pool_per_class=args.per_class // 4,
                seed=args.seed)

    run(["quantize", "train", "--manifest", f"{corpus}/manifest.jsonl",
         "--features-dir", f"{corpus}/features", "--k", str(args.k), "--seed", seed,
         "--split", "train", "--out", f"{run_dir}/codebook"])
    for name in ("manifest", "pool"):
        run(["quantize", "assign", "--manifest", f"{corpus}/{name}.jsonl",
             "--features-dir", f"{corpus}/features", "--codebook", f"{run_dir}/codebook",
             "--out", f"{run_dir}/labels"])
        run(["bag", "--manifest", f"{corpus}/{name}.jsonl", "--labels-dir", f"{run_dir}/labels",
             "--codebook", f"{run_dir}/codebook", "--out", f"{run_dir}/bags_{name}"])

    run(["train", "--bags", f"{run_dir}/bags_manifest", "--split", "train",
         "--batch-size", "64", "--learning-rate", "1.0", "--epochs", "100",
         "--seed", seed, "--out", f"{run_dir}/model"])
    run(["predict", "--model", f"{run_dir}/model", "--bags", f"{run_dir}/bags_manifest",
         "--out", f"{run_dir}/pred.jsonl"])
    run(["eval", "--gold", f"{corpus}/manifest.jsonl", "--pred", f"{run_dir}/pred.jsonl",
         "--split", "test", "--name", "base", "--out", f"{run_dir}/report_base.jsonl"])

    # silver-label loop
    run(["predict", "--model", f"{run_dir}/model", "--bags", f"{run_dir}/bags_pool",
         "--out", f"{run_dir}/pool_pred.jsonl"])
    run(["bucket", "--pred", f"{run_dir}/pool_pred.jsonl",
         "--out", f"{run_dir}/pool_bucketed.jsonl"])
    run(["assemble", "--base", f"{corpus}/manifest.jsonl",
         "--pool", f"{run_dir}/pool_bucketed.jsonl", "--setting", args.setting,
         "--out", f"{run_dir}/selftrain.jsonl"])
    run(["train", "--bags", f"{run_dir}/bags_manifest", "--bags", f"{run_dir}/bags_pool",
         "--manifest", f"{run_dir}/selftrain.jsonl", "--split", "train",
         "--batch-size", "64", "--learning-rate", "1.0", "--epochs", "100",
         "--seed", seed, "--out", f"{run_dir}/model_selftrain"])
    run(["predict", "--model", f"{run_dir}/model_selftrain", "--bags", f"{run_dir}/bags_manifest",
         "--out", f"{run_dir}/pred_selftrain.jsonl"])
    run(["eval", "--gold", f"{corpus}/manifest.jsonl", "--pred", f"{run_dir}/pred_selftrain.jsonl",
         "--split", "test", "--name", f"selftrain-{args.setting}",
         "--out", f"{run_dir}/report_selftrain.jsonl"])

    print(f"done in {time.monotonic() - start:.1f}s; reports under {run_dir}/")


if __name__ == "__main__":
    main()
