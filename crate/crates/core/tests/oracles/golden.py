"""Independent reference values for the seed-7 fixture.

Reads the CCIE stores and manifest written by `cci fixtures --seed 7`, then
recomputes in numpy:

* the RT summary at tau in {0.5, 1} for both methods, using each image's
  first ground-truth rationale;
* greedy renormalized search at tau = 100 with M = |ground truth|, and the
  RR/RW/WR/WW aggregate of those predictions;
* the same aggregate re-scored from a predictions file, if one is given.

Usage: python3 golden.py DATA_DIR [PREDICTIONS_JSONL]
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np


def load_store(path):
    raw = Path(path).read_bytes()
    magic, version, role, dim, count = struct.unpack_from("<4sBBII", raw, 0)
    assert magic == b"CCIE" and version == 1, path
    off = 14
    names = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", raw, off)
        off += 2
        names.append(raw[off : off + n].decode("utf-8"))
        off += n
    vecs = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=off)
    assert off + 4 * count * dim == len(raw), path
    vecs = vecs.reshape(count, dim).astype(np.float64)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return role, names, vecs


def softmax(z, tau):
    z = tau * np.asarray(z)
    e = np.exp(z - z.max())
    return e / e.sum()


def cci_logits(x, conds, cats):
    basis = np.column_stack([x] + list(conds))
    d = basis.sum(axis=1)
    d /= np.linalg.norm(d)
    coef, *_ = np.linalg.lstsq(basis, cats.T, rcond=None)
    par = basis @ coef
    return par.T @ d


def rt_cells(data, manifest, taus):
    _, cn, C = data["categories"]
    _, rn, R = data["rationales"]
    _, pn, P = data["prompts"]
    _, inames, X = data["images"]
    ci = {n: i for i, n in enumerate(cn)}
    ri = {n: i for i, n in enumerate(rn)}
    xi = {n: i for i, n in enumerate(inames)}
    grid = np.zeros((len(cn), len(rn), C.shape[1]))
    for k, name in enumerate(pn):
        c, r = name.split("\0")
        grid[ci[c], ri[r]] = P[k]
    out = {}
    for tau in taus:
        rts = {"cci": [], "because": []}
        for rec in manifest:
            x = X[xi[rec["image"]]]
            c, r = ci[rec["category"]], ri[rec["rationales"][0]]
            p_c = softmax(C @ x, tau)[c]
            p_r = softmax(R @ x, tau)[r]
            c_given_r = softmax(cci_logits(x, [R[r]], C), tau)[c]
            r_given_c = softmax(cci_logits(x, [C[c]], R), tau)[r]
            rts["cci"].append(p_c * r_given_c / (p_r * c_given_r))
            c_given_r = softmax(grid[:, r, :] @ x, tau)[c]
            r_given_c = softmax(grid[c, :, :] @ x, tau)[r]
            rts["because"].append(p_c * r_given_c / (p_r * c_given_r))
        for method, v in rts.items():
            out[f"{tau}/{method}"] = {"mean": float(np.mean(v)), "median": float(np.median(v))}
    return out


def greedy(x, C, R, m, tau):
    chosen = []
    cat = None
    for _ in range(m):
        remaining = [j for j in range(len(R)) if j not in chosen]
        prior = softmax(R[remaining] @ x, tau)
        best = None
        for p, j in zip(prior, remaining):
            probs = softmax(cci_logits(x, [R[k] for k in chosen + [j]], C), tau)
            c = int(np.argmax(probs))
            joint = p * probs[c]
            if best is None or joint > best[0]:
                best = (joint, j, c)
        chosen.append(best[1])
        cat = best[2]
    return cat, chosen


def score(preds, manifest):
    truth = {r["image"]: r for r in manifest}
    rows = []
    for p in preds:
        t = truth[p["image"]]
        acc = len(set(p["rationales"]) & set(t["rationales"])) / len(t["rationales"])
        right = p["category"] == t["category"]
        rows.append([right * acc, right * (1 - acc), (not right) * acc, (not right) * (1 - acc)])
    m = np.mean(np.array(rows, dtype=np.float64), axis=0) * 100
    return dict(zip(["rr", "rw", "wr", "ww"], map(float, m)))


def main():
    root = Path(sys.argv[1])
    data = {k: load_store(root / f"{k}.ccie") for k in ["images", "categories", "rationales", "prompts"]}
    manifest = [json.loads(l) for l in (root / "manifest.jsonl").read_text().splitlines() if l.strip()]
    result = {"rt": rt_cells(data, manifest, [0.5, 1.0])}

    _, cn, C = data["categories"]
    _, rn, R = data["rationales"]
    _, inames, X = data["images"]
    xi = {n: i for i, n in enumerate(inames)}
    preds = []
    for rec in manifest:
        c, chosen = greedy(X[xi[rec["image"]]], C, R, len(rec["rationales"]), 100.0)
        preds.append({"image": rec["image"], "category": cn[c], "rationales": [rn[j] for j in chosen]})
    result["greedy_eval"] = score(preds, manifest)
    result["greedy_predictions"] = {p["image"]: [p["category"]] + p["rationales"] for p in preds}

    if len(sys.argv) > 2:
        emitted = [json.loads(l) for l in Path(sys.argv[2]).read_text().splitlines() if l.strip()]
        result["rescored_eval"] = score(emitted, manifest)
    json.dump(result, sys.stdout, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
