"""Stand-alone line-delimited JSON policy used by the wire protocol tests.

Modes:
    linear   -- action = scale * state[:m]
    sleep    -- waits `delay` seconds before answering the first act request
    garbage  -- replies with a non-JSON line
    silent   -- never replies
    badshape -- replies with an action of the wrong length
    inf      -- replies with a non-finite action entry
"""

import argparse
import json
import sys
import time


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--mode", default="linear")
    parser.add_argument("--scale", type=float, default=-0.5)
    parser.add_argument("--m", type=int, default=1)
    parser.add_argument("--delay", type=float, default=2.0)
    args = parser.parse_args()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if msg.get("type") == "reset":
            continue
        if msg.get("type") != "act":
            continue
        if args.mode == "silent":
            continue
        if args.mode == "sleep":
            time.sleep(args.delay)
        if args.mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        state = msg["state"]
        action = [args.scale * x for x in state[: args.m]]
        if args.mode == "badshape":
            action = action + [0.0]
        if args.mode == "inf":
            action = [float("inf")] * args.m
        reply = {"v": 1, "type": "action", "action": action}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
