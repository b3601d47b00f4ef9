"""Bridge entry point: turn a directory of WAV files into pipeline inputs."""

import argparse
import logging
import sys
from pathlib import Path

from .bridge import BridgeJob, run_job
from .features import DEFAULT_LAYER, DEFAULT_MODEL
from .vad import VadSettings


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adibridge", description=__doc__.splitlines()[0])
    parser.add_argument("--audio-dir", required=True, help="directory of .wav files")
    parser.add_argument("--out-features", required=True)
    parser.add_argument("--out-manifest", required=True)
    parser.add_argument("--model", default=DEFAULT_MODEL)
    parser.add_argument("--layer", type=int, default=DEFAULT_LAYER)
    parser.add_argument("--min-duration", type=float, default=3.0)
    parser.add_argument("--vad-threshold", type=float, default=0.01)
    parser.add_argument("--chunk-frames", type=int, default=0,
                        help="force chunked extraction with this many frames per chunk")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    paths = sorted(Path(args.audio_dir).glob("*.wav"))
    if not paths:
        print(f"error: no .wav files under {args.audio_dir}", file=sys.stderr)
        return 3

    job = BridgeJob(
        audio_paths=paths,
        out_features_dir=args.out_features,
        out_manifest_path=args.out_manifest,
        model=args.model,
        layer=args.layer,
        vad=VadSettings(rms_threshold=args.vad_threshold, min_duration_s=args.min_duration),
        chunk_frames=args.chunk_frames,
    )
    result = run_job(job)
    print(f"{len(result.rows)} utterances -> {args.out_features}; "
          f"{len(result.skipped_files)} files skipped, "
          f"{len(result.flagged_utterances)} utterances flagged")
    return 0


if __name__ == "__main__":
    sys.exit(main())
