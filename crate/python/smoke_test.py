#!/usr/bin/env python3
"""Smoke test for the unimask_py extension module.

Build the module first, then run this script from the repository root:

    cargo build -p unimask-py
    python3 python/smoke_test.py

The script copies the cdylib next to itself under the importable name if
needed, then exercises the vocabulary, sequence builders and the diffusion
math through the Python surface.
"""

import math
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_module() -> None:
    here = Path(__file__).resolve().parent
    target = here / "unimask_py.so"
    candidates = [
        ROOT / "target" / "debug" / "libunimask_py.so",
        ROOT / "target" / "release" / "libunimask_py.so",
    ]
    built = [c for c in candidates if c.exists()]
    if not built:
        sys.exit("build the extension first: cargo build -p unimask-py")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    if not target.exists() or target.stat().st_mtime < newest.stat().st_mtime:
        shutil.copy2(newest, target)
    sys.path.insert(0, str(here))


locate_module()
import unimask_py as um  # noqa: E402


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main() -> None:
    # vocabulary layout: 64 text chars, 8 specials, K image ids
    v = um.Vocabulary(16)
    assert v.total() == 64 + 8 + 16
    assert v.text_size() == 64
    assert v.image_size() == 16
    assert v.image_value(v.image_id(7)) == 7
    ids = v.encode_text("hello world")
    assert v.decode_text(ids) == "hello world"
    try:
        v.encode_text("nope?")
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-alphabet text must raise")

    # sequence building and the attention grid
    grid = [v.image_id(i % 16) for i in range(16)]
    seq = um.Sequence.t2i(v.encode_text("cat"), grid, v)
    assert len(seq) == 5 + 3 + 16
    assert seq.roles() == "ks" + "t" * 3 + "ss" + "i" * 16 + "s"
    rows = seq.attention_grid()
    assert len(rows) == len(seq)
    # text is causal: the first text position cannot see the second
    assert rows[2][3] == "0"
    # image positions see everything up to and including their own segment,
    # but not the later [EOI]
    assert rows[-2] == "1" * (len(seq) - 1) + "0"

    mmu = um.Sequence.mmu(grid, v.encode_text("who."), v.encode_text("cat"), v)
    # supervision covers the answer and closing terminator only
    assert sum(mmu.loss_mask()) == 3 + 1

    # mask schedule boundaries
    approx(um.gamma("cosine", 0.0), 1.0)
    approx(um.gamma("cosine", 1.0), 0.0)
    approx(um.gamma("linear", 0.25), 0.75)

    # transition algebra: composed rows are stochastic, the first-order single-matrix form
    # leaves a beta/(K+1) deficit
    k = 4
    q = um.transition_matrix(0.3, 0.2, k)
    for row in q[:-1]:
        approx(sum(row), 1.0)
    lit = um.transition_matrix(0.3, 0.2, k, first_order=True)
    approx(sum(lit[0]), 1.0 - 0.2 / (k + 1))

    # marginals and posteriors stay distributions
    alphas, betas = [0.3, 0.2], [0.1, 0.2]
    marg = um.marginal_probs(1, alphas, betas, 2, k)
    approx(sum(marg), 1.0, 1e-10)
    post = um.posterior_probs(1, 1, alphas, betas, 2, k)
    approx(sum(post), 1.0, 1e-10)
    assert all(p >= 0 for p in marg + post)

    # corruption is seed-deterministic and only ever absorbs into K
    tokens = list(range(k)) * 3
    out1 = um.corrupt_tokens(tokens, [0.5, 0.5], 2, k, seed=9)
    out2 = um.corrupt_tokens(tokens, [0.5, 0.5], 2, k, seed=9)
    assert out1 == out2
    assert all(o == t or o == k for o, t in zip(out1, tokens))

    # guided logit combination: w=0 is the identity
    cond = [[0.5, -1.0], [2.0, 0.25]]
    uncond = [[0.0, 1.0], [1.0, 1.0]]
    assert um.cfg_combine(cond, uncond, 0.0) == cond
    mixed = um.cfg_combine(cond, uncond, 2.0)
    approx(mixed[0][0], 3.0 * 0.5 - 2.0 * 0.0)

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
