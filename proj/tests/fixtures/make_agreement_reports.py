"""Writes agreement/config_{A,B,C}.jsonl: three analyzer configurations over the same 52 attempts."""
import json
import pathlib
import random

HERE = pathlib.Path(__file__).parent / "agreement"
HERE.mkdir(exist_ok=True)

PROBLEMS = [("p1064", 10), ("p16", 3), ("p48", 4), ("p129", 7), ("p220", 10), ("p413", 9), ("p722", 9)]
TOTALS = {
    "A": {"mathematical": 70, "logical": 41, "executional": 35, "factual": 17},
    "B": {"mathematical": 83, "logical": 32, "executional": 36, "factual": 16},
    "C": {"mathematical": 80, "logical": 26, "executional": 23, "factual": 26},
}
LABELS = {
    "mathematical": ["sign error", "algebra error", "missing factor", "mathematical"],
    "logical": ["unjustified assumption", "reasoning error", "logical"],
    "executional": ["code bug", "hardcoded value", "executional"],
    "factual": ["wrong identity", "wrong formula", "factual"],
}
attempts = [(pid, i) for pid, n in PROBLEMS for i in range(n)]
assert len(attempts) == 52

for seed, (name, totals) in enumerate(TOTALS.items()):
    rng = random.Random(seed)
    pool = [c for c, n in totals.items() for _ in range(n)]
    rng.shuffle(pool)
    findings = {a: [] for a in attempts}
    for k, cat in enumerate(pool):
        a = attempts[k % len(attempts)]
        findings[a].append({
            "label": rng.choice(LABELS[cat]),
            "severity": "major" if rng.random() < 0.6 else rng.choice(["minor", "critical"]),
            "step": str(rng.randint(1, 12)),
            "note": "",
        })
    with open(HERE / f"config_{name}.jsonl", "w") as out:
        for pid, idx in attempts:
            fs = findings[(pid, idx)]
            primary = None
            for cat, labels in LABELS.items():
                if fs and fs[0]["label"] in labels:
                    primary = cat
            out.write(json.dumps({"problem_id": pid, "attempt_idx": idx, "findings": fs,
                                  "primary_category": primary, "prompt_version": "1"}) + "\n")
print("ok")
