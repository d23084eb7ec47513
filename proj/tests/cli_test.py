#!/usr/bin/env python3
# Copyright 2026 The DRIM Authors.
#
# This source code is licensed under the Apache License, Version 2.0 license
# found in the LICENSE file in the root directory of this source tree.
"""End-to-end checks of the drim executable: exit codes, determinism, outputs.

Usage: cli_test.py <drim binary> <work dir>
"""
import json
import os
import shutil
import subprocess
import sys

DRIM = sys.argv[1]
WORK = sys.argv[2]
failures = []


def drim(*args):
    return subprocess.run([DRIM, *args], capture_output=True, text=True)


def expect(name, cond, detail=""):
    print("%s %s%s" % ("ok  " if cond else "FAIL", name, (" : " + detail) if detail and not cond else ""))
    if not cond:
        failures.append(name)


def path(*parts):
    return os.path.join(WORK, *parts)


shutil.rmtree(WORK, ignore_errors=True)
os.makedirs(WORK)

r = drim("synth", "--out", path("raw"), "--users", "120", "--items-per-cluster", "40", "--seed", "2")
expect("synth exits 0", r.returncode == 0, r.stderr)
r = drim("prepare", "--data", path("raw", "interactions.tsv"), "--out", path("ds"),
         "--min-item", "1", "--min-user", "1")
expect("prepare exits 0", r.returncode == 0, r.stderr)

with open(path("train.cfg"), "w") as f:
    f.write("# small run\ndim = 8\nk = 2\nepochs = 3\nbatch = 32\nseed = 1\n")

train_args = ["train", "--data", path("ds"), "--config", path("train.cfg"), "--seed", "7"]
a = drim(*train_args, "--checkpoint", path("a.ckpt"))
b = drim(*train_args, "--checkpoint", path("b.ckpt"))
expect("train exits 0", a.returncode == 0 and b.returncode == 0, a.stderr + b.stderr)
losses_a = [l for l in a.stdout.splitlines() if l.startswith("epoch")]
losses_b = [l for l in b.stdout.splitlines() if l.startswith("epoch")]
strip = lambda lines: [l.split(" time ")[0] for l in lines]
expect("train prints one line per epoch", len(losses_a) == 3)
expect("repeated train gives identical losses", strip(losses_a) == strip(losses_b))
with open(path("a.ckpt"), "rb") as fa, open(path("b.ckpt"), "rb") as fb:
    expect("repeated train gives identical checkpoints", fa.read() == fb.read())
expect("flag overrides config file", "config seed=7" in a.stdout and "config dim=8" in a.stdout)

r = drim("eval", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--n", "50,100",
         "--jsonl", path("report.jsonl"))
expect("eval exits 0", r.returncode == 0, r.stderr)
keys = dict(l.split(": ", 1) for l in r.stdout.splitlines())
expect("eval reports HR@50 and HR@100", "HR@50" in keys and "HR@100" in keys, r.stdout)
expect("eval reports MostPopular", "MostPopular HR@50" in keys)
expect("history exclusion on by default", keys.get("exclude_history") == "on")
with open(path("report.jsonl")) as f:
    records = [json.loads(l) for l in f]
expect("jsonl report parses", any(rec.get("model") == "drim" and rec.get("n") == 50 for rec in records))
r = drim("eval", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--n", "50", "--exclude-history", "off")
expect("exclusion can be turned off", "exclude_history: off" in r.stdout)

r = drim("retrieve", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--out", path("rec.tsv"), "--n", "5")
expect("retrieve exits 0", r.returncode == 0, r.stderr)
with open(path("rec.tsv")) as f:
    rows = [l.rstrip("\n").split("\t") for l in f]
expect("retrieve writes n rows per user", len(rows) == 5 * 120 and all(len(x) == 4 for x in rows))
expect("ranks start at 1", rows[0][2] == "1" and rows[4][2] == "5")
expect("scores are non-increasing", all(float(rows[i][3]) >= float(rows[i + 1][3]) for i in range(4)))
with open(path("users.txt"), "w") as f:
    f.write("user3\nuser9\n")
r = drim("retrieve", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--out", path("rec2.tsv"),
         "--n", "3", "--users", path("users.txt"), "--backend", "approx")
with open(path("rec2.tsv")) as f:
    users = [l.split("\t")[0] for l in f]
expect("retrieve honours a user list", users == ["user3"] * 3 + ["user9"] * 3, r.stderr)

r = drim("export", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--out", path("e.tsv"), "--limit", "1")
with open(path("e.tsv")) as f:
    lines = f.read().splitlines()
expect("export writes K rows of d components", len(lines) == 2 and all(len(l.split("\t")[2].split(",")) == 8 for l in lines))

r = drim("check-grad", "--seed", "7")
expect("check-grad exits 0", r.returncode == 0, r.stdout + r.stderr)
expect("check-grad prints the max relative error", "max_rel_error:" in r.stdout)

r = drim("sweep", "--data", path("ds"), "--out", path("sweep"), "--config", path("train.cfg"),
         "--separator", "mean", "--epochs", "1", "--lambdas", "0.1,1", "--n", "50")
expect("sweep exits 0", r.returncode == 0, r.stderr)
rows = r.stdout.splitlines()
expect("sweep prints baseline, grid and MostPopular rows", len(rows) == 5 and rows[1].startswith("none\t0")
       and rows[2].startswith("mean\t0.1") and rows[-1].startswith("most_popular"), r.stdout)

# Exit codes.
expect("no subcommand is a usage error", drim().returncode == 1)
expect("unknown flag is a usage error", drim("train", "--bogus").returncode == 1)
expect("bad separator is a usage error",
       drim("train", "--data", path("ds"), "--checkpoint", path("x.ckpt"), "--separator", "angle").returncode == 1)
expect("bad --n is a usage error",
       drim("eval", "--data", path("ds"), "--checkpoint", path("a.ckpt"), "--n", "0").returncode == 1)
expect("missing dataset is a data error",
       drim("train", "--data", path("missing"), "--checkpoint", path("x.ckpt")).returncode == 2)
with open(path("junk.ckpt"), "wb") as f:
    f.write(b"not a checkpoint")
expect("corrupt checkpoint is a data error",
       drim("eval", "--data", path("ds"), "--checkpoint", path("junk.ckpt")).returncode == 2)
with open(path("bad.tsv"), "w") as f:
    f.write("u\ti\tnoon\n")
r = drim("prepare", "--data", path("bad.tsv"), "--out", path("bad"))
expect("malformed input is a data error naming the line", r.returncode == 2 and "bad.tsv:1:" in r.stderr, r.stderr)
r = drim("check-grad", "--seed", "7", "--tol", "1e-300")
expect("gradient check above tolerance exits 3", r.returncode == 3, "rc=%d" % r.returncode)

print("%d failure(s)" % len(failures))
sys.exit(1 if failures else 0)
