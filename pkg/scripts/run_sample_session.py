#!/usr/bin/env python3
"""Run the canonical disambiguation session and print the full message trace.

Shows the whole arc: the ambiguous command fans out, both view-port leaves
claim it, the contradiction surfaces, the user answers, the answer is
memorized, and the rerun routes directly.
"""

import argparse

from agentmesh.mapdemo import build_demo_topology


def show(events):
    for e in events:
        m = e.message
        flag = " DEAD" if e.dead_letter else ""
        print(f"{e.step:4d}  {m.performative.value:14s} {m.sender:20s} -> {m.recipients[0]:20s} {m.content}{flag}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--user", default="u1")
    parser.add_argument("--seed", type=int, default=None, help="seeded-random scheduling")
    args = parser.parse_args()

    demo = build_demo_topology(seed=args.seed)
    funnel = demo.funnel(args.user)
    rt = demo.runtime

    print(f"== setup ({demo.setup_trace_length} events elided)")
    funnel.say("move it closer")
    show(rt.run_until_quiescent())
    print(f"== user answers the question")
    funnel.answer("Magnification")
    show(rt.run_until_quiescent())
    print(f"== map state now {demo.map_state()}")
    print(f"== the same request again (memorized for {args.user})")
    funnel.say("move it closer")
    show(rt.run_until_quiescent())
    print(f"== map state now {demo.map_state()}")
    print(f"== praise feeds rewards back along the dispatch path")
    funnel.remark("thanks")
    show(rt.run_until_quiescent())


if __name__ == "__main__":
    main()
