#!/usr/bin/env python3
"""Emit a fully populated experiment config with every default spelled out.

Useful as a starting point: edit the copy instead of memorizing the
schema.  Null-valued knobs (centers, bayes_spec, duffy_order) stay null
until you need them.
"""
import argparse
import json
import sys

from parabem import cli


def _defaults(node):
    if cli._is_leaf(node):
        return node["default"]
    return {key: _defaults(sub) for key, sub in node.items()}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None,
                        help="path to write; stdout when omitted")
    args = parser.parse_args(argv)
    text = json.dumps(_defaults(cli.CONFIG_SCHEMA), indent=2, sort_keys=True)
    if args.out is None:
        print(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
