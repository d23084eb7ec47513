#!/usr/bin/env python3
# Copyright 2026 The DRIM Authors.
#
# This source code is licensed under the Apache License, Version 2.0 license
# found in the LICENSE file in the root directory of this source tree.
"""Reload oracle: decode a checkpoint byte by byte, redo the user-side forward
pass in numpy and compare against `drim export`.

Usage: check_export.py <drim binary> <work dir>
"""
import os
import struct
import subprocess
import sys

import numpy as np


def run(*args):
    subprocess.run(args, check=True, stdout=subprocess.DEVNULL)


def read_checkpoint(path):
    with open(path, "rb") as f:
        buf = f.read()
    pos = 0

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from("<" + fmt, buf, pos)
        pos += struct.calcsize("<" + fmt)
        return vals

    assert buf[:8] == b"DRIMCKPT"
    pos = 8
    (version,) = take("I")
    assert version == 1
    dim, k = take("II")
    item_rows, profile_rows = take("QQ")
    (clen,) = take("I")
    text = buf[pos:pos + clen].decode()
    pos += clen
    config = dict(line.split("=", 1) for line in text.splitlines() if line)
    (count,) = take("I")
    mats = {}
    for _ in range(count):
        (nlen,) = take("I")
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        rows, cols = take("QQ")
        vals = take("%dd" % (rows * cols))
        mats[name] = np.array(vals).reshape(rows, cols)
    assert pos == len(buf)
    assert mats["item_embeddings"].shape == (item_rows, dim)
    assert mats["profile_embeddings"].shape[0] == profile_rows
    assert int(config["k"]) == k
    return config, mats


def squash(z):
    r = np.linalg.norm(z)
    return np.zeros_like(z) if r < 1e-12 else (r * r / (1 + r * r)) * z / r


def forward(hist, feats, config, mats):
    k = int(config["k"])
    iters = int(config["routing_iters"])
    assert config["routing_init"] == "zeros"
    h = mats["item_embeddings"][hist]
    u = h @ mats["bilinear"].T
    c = np.zeros((len(hist), k))
    for it in range(iters):
        b = np.exp(c - c.max(axis=1, keepdims=True))
        b /= b.sum(axis=1, keepdims=True)
        z = b.T @ u
        v = np.array([squash(row) for row in z])
        if it + 1 < iters:
            c = u @ v.T
    if mats["profile_embeddings"].shape[0] == 0:
        return v
    p = mats["profile_embeddings"][feats].sum(axis=0)
    out = []
    for row in v:
        x = np.concatenate([row, p])
        hid = np.maximum(mats["fusion_w1"] @ x + mats["fusion_b1"][:, 0], 0.0)
        out.append(mats["fusion_w2"] @ hid + mats["fusion_b2"][:, 0])
    return np.array(out)


def main():
    drim, work = sys.argv[1], sys.argv[2]
    os.makedirs(work, exist_ok=True)
    raw = os.path.join(work, "raw")
    ds = os.path.join(work, "ds")
    run(drim, "synth", "--out", raw, "--users", "60", "--items-per-cluster", "30", "--seed", "3")
    with open(os.path.join(work, "profile.tsv"), "w") as f:
        for u in range(60):
            f.write("user%d\tgroup%d\n" % (u, u % 3))
            if u % 2:
                f.write("user%d\todd\n" % u)
    run(drim, "prepare", "--data", os.path.join(raw, "interactions.tsv"), "--out", ds,
        "--min-item", "1", "--min-user", "1", "--profile", os.path.join(work, "profile.tsv"))
    ckpt = os.path.join(work, "m.ckpt")
    run(drim, "train", "--data", ds, "--checkpoint", ckpt, "--k", "3", "--dim", "8",
        "--max-len", "6", "--epochs", "2", "--batch", "16", "--routing-init", "zeros",
        "--separator", "mean")
    out = os.path.join(work, "export.tsv")
    run(drim, "export", "--data", ds, "--checkpoint", ckpt, "--out", out)

    config, mats = read_checkpoint(ckpt)
    max_len = int(config["max_len"])
    users = {}
    with open(os.path.join(ds, "users.tsv")) as f:
        for line in f:
            idx, uid = line.rstrip("\n").split("\t")
            users[uid] = int(idx)
    seqs = {}
    with open(os.path.join(ds, "sequences.tsv")) as f:
        for line in f:
            u, split, items = line.rstrip("\n").split("\t")
            seqs[int(u)] = [int(x) for x in items.split(",")][:int(split)]
    profiles = {}
    with open(os.path.join(ds, "profiles.tsv")) as f:
        for line in f:
            u, feats = line.rstrip("\n").split("\t")
            profiles[int(u)] = [int(x) for x in feats.split(",")] if feats else []

    exported = {}
    with open(out) as f:
        for line in f:
            uid, k, comps = line.rstrip("\n").split("\t")
            exported.setdefault(uid, {})[int(k)] = np.array([float(x) for x in comps.split(",")])

    assert len(exported) == len(seqs), (len(exported), len(seqs))
    worst = 0.0
    for uid, rows in exported.items():
        u = users[uid]
        expect = forward(seqs[u][-max_len:], profiles.get(u, []), config, mats)
        got = np.array([rows[k] for k in range(len(rows))])
        assert got.shape == expect.shape
        worst = max(worst, float(np.abs(got - expect).max()))
    print("users %d max_abs_diff %.3e" % (len(exported), worst))
    if worst > 1e-9:
        sys.exit(1)


if __name__ == "__main__":
    main()
