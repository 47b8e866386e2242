"""Re-record the committed test cassettes from the scripted responders.

Run after changing prompt wording: fingerprints hash the prompts, so stale
cassettes make replay tests miss.
"""

import argparse
import os

from kgplan.demo import record_fixture_cassettes

DEFAULT_OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures", "cassettes")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=DEFAULT_OUT)
    args = ap.parse_args()
    for name, cassette in record_fixture_cassettes().items():
        path = os.path.join(args.out, f"{name}.jsonl")
        cassette.save(path)
        print(f"{path}: {len(cassette)} entries")


if __name__ == "__main__":
    main()
