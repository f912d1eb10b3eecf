#!/usr/bin/env python3
"""Generates the bundled 30-bus planning cases.

The topology follows the standard 30-bus test system with six generators.
Loads are concentrated in the area behind the candidate corridor so that the
planning studies exercise congestion, and line ratings on non-candidate
branches are chosen to match that load pattern.
"""

import math

# 1-based branch list: (from, to, reactance, capacity)
# Candidate lines carry their study base capacities.
BRANCHES = [
    (1, 2, 0.0575, 5.0, "1-2"),
    (1, 3, 0.1652, 32.0, None),
    (2, 4, 0.1737, 65.0, None),
    (3, 4, 0.0379, 20.0, "3-4"),
    (2, 5, 0.1983, 130.0, None),
    (2, 6, 0.1763, 65.0, None),
    (4, 6, 0.0414, 90.0, None),
    (5, 7, 0.1160, 70.0, None),
    (6, 7, 0.0820, 130.0, None),
    (6, 8, 0.0420, 32.0, None),
    (6, 9, 0.2080, 60.0, None),
    (6, 10, 0.5560, 40.0, "6-10"),
    (9, 11, 0.2080, 65.0, None),
    (9, 10, 0.1100, 32.0, "9-10"),
    (4, 12, 0.2560, 10.0, "4-12"),
    (12, 13, 0.1400, 65.0, None),
    (12, 14, 0.2559, 65.0, None),
    (12, 15, 0.1304, 65.0, None),
    (12, 16, 0.1987, 90.0, None),
    (14, 15, 0.1997, 65.0, None),
    (16, 17, 0.1923, 65.0, None),
    (15, 18, 0.2185, 65.0, None),
    (18, 19, 0.1292, 65.0, None),
    (19, 20, 0.0680, 12.0, None),
    (10, 20, 0.2090, 12.0, None),
    (10, 17, 0.0845, 12.0, None),
    (10, 21, 0.0749, 60.0, None),
    (10, 22, 0.1499, 80.0, None),
    (21, 22, 0.0236, 60.0, None),
    (15, 23, 0.2020, 200.0, None),
    (22, 24, 0.1790, 16.0, None),
    (23, 24, 0.2700, 32.0, None),
    (24, 25, 0.3292, 16.0, None),
    (25, 26, 0.3800, 16.0, None),
    (25, 27, 0.2087, 16.0, None),
    (28, 27, 0.3960, 10.0, "27-28"),
    (27, 29, 0.4153, 16.0, None),
    (27, 30, 0.6027, 16.0, None),
    (29, 30, 0.4533, 16.0, None),
    (8, 28, 0.2000, 32.0, None),
    (6, 28, 0.0599, 32.0, None),
]

# 1-based bus loads, MW at the base point of the profile.
LOADS = {
    5: 2.0,
    7: 2.0,
    8: 2.0,
    9: 5.0,
    10: 12.0,
    12: 58.0,
    14: 39.0,
    15: 48.4,
    16: 28.0,
    17: 18.0,
    18: 15.0,
    19: 10.0,
    20: 10.0,
    21: 20.0,
    24: 9.0,
    25: 2.0,
    26: 1.0,
    29: 1.0,
    30: 1.0,
}

# 1-based generator data: (bus, p_max, cost, strategic)
GENERATORS = [
    (1, 110.0, 52.0, False),
    (2, 80.0, 50.0, True),
    (2, 60.0, 76.5, False),
    (4, 60.0, 58.0, False),
    (13, 40.0, 55.0, False),
    (22, 180.0, 68.0, False),
    (23, 240.0, 50.0, True),
    (27, 55.0, 50.0, True),
]

EXPANSION_COST = 100_000.0

CAND_SUSCEPTANCE = {
    "1-2": 7.0,
    "3-4": 7.0,
    "6-10": 7.0,
    "9-10": 7.0,
    "4-12": 60.0,
    "27-28": 6.0,
}

# susceptances decoupled from the rating rule, keyed by 1-based endpoints:
# weakly coupled ties into the load region, plus the 1-3 corridor whose
# rating was raised without changing the 1-2/1-3 flow split
SUSCEPTANCE_OVERRIDE = {
    (1, 3): 2.5,
    (10, 17): 0.4,
    (10, 20): 0.4,
    (19, 20): 0.4,
}


def profile():
    # two identical days of 24 hourly factors with a daytime peak
    shape = []
    for h in range(24):
        if 4 <= h <= 18:
            v = 0.9 - 0.2 * math.cos(math.pi * (h - 4) / 14.0)
        else:
            v = 0.9 + 0.2 * math.cos(math.pi * ((h - 18) % 24) / 10.0)
        shape.append(round(v, 6))
    return shape + shape


def emit(path, candidates):
    out = []
    out.append("# 30-bus planning and bidding study case.")
    out.append("# Buses are 0-based; line names use the 1-based source numbering.")
    out.append("")
    out.append("slack_bus = 0")
    for b in range(1, 31):
        out.append("")
        out.append("[[buses]]")
        out.append(f"id = {b - 1}")
        out.append(f"demand_base = {LOADS.get(b, 0.0)}")
    for f, t, x, cap, name in BRANCHES:
        out.append("")
        out.append("[[lines]]")
        out.append(f"from_bus = {f - 1}")
        out.append(f"to_bus = {t - 1}")
        # susceptance tracks rating so flow splits follow the strong
        # corridors; candidates use their post-expansion scale
        b = CAND_SUSCEPTANCE.get(name, SUSCEPTANCE_OVERRIDE.get((f, t), cap / 10.0))
        out.append(f"susceptance = {round(b, 6)}")
        out.append(f"base_capacity = {cap}")
        out.append(f"expansion_cost = {EXPANSION_COST}")
        if name is not None:
            out.append(f'name = "{name}"')
        if name is not None and name in candidates:
            out.append("candidate = true")
    for bus, pmax, cost, strategic in GENERATORS:
        out.append("")
        out.append("[[generators]]")
        out.append(f"bus = {bus - 1}")
        out.append(f"p_max = {pmax}")
        out.append(f"marginal_cost = {cost}")
        if strategic:
            out.append("strategic = true")
    out.append("")
    out.append("[profile]")
    out.append(f"shape = {profile()}")
    out.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(out))


ALL = ["1-2", "3-4", "6-10", "9-10", "4-12", "27-28"]
emit("cases/ieee30.case", ALL)
emit("cases/ieee30_twoline.case", ["4-12", "27-28"])
total = sum(LOADS.values())
print("base load", total, "peak", round(total * 1.1, 3))
