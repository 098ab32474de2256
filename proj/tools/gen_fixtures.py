#!/usr/bin/env python3
"""Writes the network and scenario fixtures used by the test suites.

Every network is a primary feeder hanging off the slack bus with one or more
secondary meshes fed through transformers. The output is fully determined by
the code below; SELFGRID_SEED only perturbs the random mesh family written by
``--random``.
"""

import argparse
import json
import os
import random
from pathlib import Path


class Net:
    def __init__(self, v_set=1.0):
        self.buses = [{"id": 0, "kind": "slack", "base_kv": 13.8, "level": "primary", "v_set": v_set}]
        self.branches, self.transformers, self.loads, self.dgs = [], [], [], []

    def bus(self, level="secondary"):
        bid = len(self.buses)
        kv = 13.8 if level == "primary" else 0.48
        self.buses.append({"id": bid, "kind": "pq", "base_kv": kv, "level": level})
        return bid

    def line(self, a, b, r, x):
        self.branches.append({"id": len(self.branches), "from": a, "to": b, "r": r, "x": x, "b": 0.0})

    def xf(self, primary, secondary, r=0.004, x=0.04, protector=False, tap=1.0, shift_deg=0.0):
        t = {"id": len(self.transformers), "primary": primary, "secondary": secondary, "r": r, "x": x, "tap": tap,
             "protector": protector}
        if shift_deg:
            t["shift_deg"] = shift_deg
        self.transformers.append(t)

    def load(self, bus, p, q):
        self.loads.append({"bus": bus, "p": p, "q": q})

    def dg(self, bus, mode="pfc", p=0.05, q=0.0, p_cap=0.1, q_cap=0.1, q_abs_cap=0.1):
        did = len(self.dgs)
        self.dgs.append({"id": did, "bus": bus, "mode": mode, "p": p, "q": q, "p_cap": p_cap, "q_cap": q_cap,
                         "q_abs_cap": q_abs_cap, "available": True})
        return did

    def doc(self):
        return {"s_base_mva": 1.0, "buses": self.buses, "branches": self.branches,
                "transformers": self.transformers, "loads": self.loads, "dgs": self.dgs}


def strip(net, feeds, length, r=0.01, x=0.02, rung_every=0, load=(0.03, 0.012)):
    """Secondary chain of `length` buses; feeds maps position -> primary bus.
    With rung_every > 0 a second rail is added and tied to the first every
    `rung_every` positions, making the strip a mesh."""
    rail = [net.bus() for _ in range(length)]
    for a, b in zip(rail, rail[1:]):
        net.line(a, b, r, x)
    if rung_every:
        second = [net.bus() for _ in range(0, length, rung_every)]
        for a, b in zip(second, second[1:]):
            net.line(a, b, r * rung_every, x * rung_every)
        for k, s in enumerate(second):
            net.line(rail[k * rung_every], s, r, x)
        for s in second:
            net.load(s, *load)
    for pos, primary in feeds.items():
        net.xf(primary, rail[pos])
    for b in rail:
        net.load(b, *load)
    return rail


def primary_feeder(net, n, r=0.002, x=0.006):
    prev, out = 0, []
    for _ in range(n):
        b = net.bus("primary")
        net.line(prev, b, r, x)
        out.append(b)
        prev = b
    return out


def rail_grid(v_set=0.97, length=16, every=5, heavy=4, heavy_p=0.4, base=None):
    """Multi-feed secondary strip with DGs on odd positions. DG `heavy`
    carries a large output matched by a large load on its own bus, so
    tripping it opens a local voltage dip."""
    net = base or Net(v_set=v_set)
    pf = primary_feeder(net, 3)
    feeds = {p: pf[min(2, p * 3 // length)] for p in range(0, length, every)}
    rail = strip(net, feeds, length, r=0.015, x=0.03, load=(0.04, 0.015))
    first = len(net.dgs)
    for k, pos in enumerate(range(1, length, 2)):
        big = k == heavy
        net.dg(rail[pos], p=heavy_p if big else 0.05, p_cap=heavy_p if big else 0.1, q_cap=0.2, q_abs_cap=0.2)
    net.load(rail[2 * heavy + 1], heavy_p, heavy_p * 0.3)
    return net, first


def two_singleton():
    net = Net()
    hub = net.bus()
    net.xf(0, hub, r=0.002, x=0.04)
    for _ in range(2):
        b = net.bus()
        net.line(hub, b, 0.003, 0.06)
        net.load(b, 0.1, 0.03)
        net.dg(b)
    return net


def cs1():
    return rail_grid()[0]


def cs2():
    net, _ = rail_grid()
    rail_grid(base=net)
    return net


def cs3(v_set=0.97, stub=(0.03, 0.06), heavy_p=0.3):
    """A DG on a stub bus that dominates its own bus at coarse thresholds."""
    net = Net(v_set=v_set)
    pf = primary_feeder(net, 3)
    rail = strip(net, {0: pf[0], 5: pf[1], 10: pf[2]}, 12, r=0.015, x=0.03, load=(0.04, 0.015))
    for pos in (1, 3, 7, 9, 11):
        net.dg(rail[pos], q_cap=0.2, q_abs_cap=0.2)
    tip = net.bus()
    net.line(rail[5], tip, *stub)
    net.load(tip, heavy_p, heavy_p * 0.3)
    net.dg(tip, p=heavy_p, p_cap=heavy_p, q_cap=0.2, q_abs_cap=0.2)
    return net


def mesh30():
    net = Net()
    pf = primary_feeder(net, 4)
    rail = strip(net, {0: pf[0], 7: pf[1], 13: pf[2], 19: pf[3]}, 20, r=0.012, x=0.025, rung_every=4)
    for pos in (2, 5, 9, 12, 15, 18):
        net.dg(rail[pos], p=0.06, q=0.01)
    return net


def protector():
    """Single-feed strip whose only transformer is a network protector. The
    DGs nearly cover the local load, so raising their output quickly reverses
    the transformer flow."""
    net = Net(v_set=0.975)
    pf = primary_feeder(net, 2)
    rail = strip(net, {0: pf[1]}, 6, r=0.01, x=0.02, load=(0.05, 0.02))
    net.transformers[-1].update(protector=True, r=0.01, x=0.08)
    for pos in (0, 3, 5):
        net.dg(rail[pos], mode="upf", p=0.06, p_cap=0.5)
    return net


def weak():
    net = Net(v_set=0.97)
    pf = primary_feeder(net, 2)
    rail = strip(net, {0: pf[1]}, 6, r=0.02, x=0.04, load=(0.03, 0.01))
    for pos in (2, 4):
        net.dg(rail[pos], p=0.03, p_cap=0.04, q_cap=0.01, q_abs_cap=0.01)
    return net


def random_mesh(rng, n_rail):
    net = Net(v_set=rng.uniform(0.98, 1.02))
    pf = primary_feeder(net, 3)
    feeds = {0: pf[0]}
    for primary in pf[1:]:
        feeds[rng.randrange(1, n_rail)] = primary
    rail = strip(net, feeds, n_rail, r=rng.uniform(0.005, 0.02), x=rng.uniform(0.01, 0.04),
                 rung_every=rng.choice([0, 3, 4]))
    for pos in sorted(rng.sample(range(n_rail), max(2, n_rail // 3))):
        net.dg(rail[pos], p=round(rng.uniform(0.0, 0.08), 4))
    return net


def scenario(name, events, mode="pfc", ladder=(0.4, 0.3, 0.2), **config):
    return {"name": name, "config": {"mode": mode, "ladder": list(ladder), **config}, "events": events}


def trip(rnd, dg):
    return {"round": rnd, "kind": "dg_trip", "dg": dg}


def restore(rnd, dg):
    return {"round": rnd, "kind": "dg_restore", "dg": dg}


def load_scale(rnd, bus, factor):
    return {"round": rnd, "kind": "load_scale", "bus": bus, "factor": factor}


def write(path, obj):
    path.write_text(json.dumps(obj, indent=1) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    ap.add_argument("--random", type=int, default=0, metavar="N", help="also write N random meshed networks")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, (grid, scenarios) in FIXTURES.items():
        write(args.out / f"{name}.grid.json", grid().doc())
        for sname, sc in scenarios.items():
            write(args.out / f"{name}.{sname}.scenario.json", sc)
    rng = random.Random(int(os.environ.get("SELFGRID_SEED", "0")))
    for k in range(args.random):
        write(args.out / f"random{k}.grid.json", random_mesh(rng, rng.randrange(8, 25)).doc())


FIXTURES = {
    "two_singleton": (two_singleton, {}),
    "cs1": (cs1, {
        "trip": scenario("cs1-trip", [trip(0, 4)]),
        "quiescent": scenario("cs1-quiescent", []),
    }),
    "cs2": (cs2, {
        "both": scenario("cs2-both", [trip(0, 4), trip(0, 12)]),
        "first": scenario("cs2-first", [trip(0, 4)]),
        "second": scenario("cs2-second", [trip(0, 12)]),
    }),
    "cs3": (cs3, {
        "trip_restore": scenario("cs3-trip-restore", [trip(0, 5), restore(3, 5)], ladder=(0.4, 0.2, 0.1)),
        "forced": scenario("cs3-forced", [{"round": 0, "kind": "force_epsilon", "epsilon": 0.2}, trip(1, 5)],
                           ladder=(0.4, 0.2, 0.1)),
    }),
    "mesh30": (mesh30, {
        "quiescent": scenario("mesh30-quiescent", [], ladder=(0.5, 0.4, 0.3)),
    }),
    "protector": (protector, {
        "load": scenario("protector-load", [load_scale(0, 8, 2.5)], mode="upf", ladder=(0.2, 0.1)),
    }),
    "weak": (weak, {
        "exhausted": scenario("weak-exhausted", [load_scale(0, 8, 3.0)], ladder=(0.3, 0.2)),
    }),
}


if __name__ == "__main__":
    main()
