#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Test generator: echoes each prompt back as the generated output."""
import argparse
import json
import sys


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--weights", required=True)
    parser.add_argument("--prompts", required=True)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    with open(args.prompts, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            json.dump({"id": record["id"], "output": record["prompt"]}, sys.stdout)
            sys.stdout.write("\n")


if __name__ == "__main__":
    main()
