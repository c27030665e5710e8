"""Regenerates the evaluation fixture and its expected scores.

The scoring here is a deliberately naive re-derivation: every distinct
confidence is used as a cut-off, every frame is re-matched from scratch at
that cut-off, and the miss rate at a reference FPPI is the smallest miss
rate among cut-offs whose FPPI does not exceed it.

    python3 oracle.py   # rewrites manifest.tsv, detections.tsv, expected.tsv
"""
import math
import os
import random

from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))
W, H = 320, 256
IOU = 0.5
MIN_H = 50
REFS = [10 ** (-2 + 2 * i / 8) for i in range(9)]


def iou(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    if inter <= 0:
        return 0.0
    return inter / (aw * ah + bw * bh - inter)


def match(dets, gts, ignore):
    order = sorted(range(len(dets)), key=lambda i: -dets[i][4])
    used = set()
    tp = fp = 0
    for d in order:
        best, best_v = None, -1.0
        for g, gt in enumerate(gts):
            if g in used:
                continue
            v = iou(dets[d][:4], gt)
            if v >= IOU and v > best_v:
                best, best_v = g, v
        if best is not None:
            used.add(best)
            tp += 1
        elif any(iou(dets[d][:4], ig) >= IOU for ig in ignore):
            pass
        else:
            fp += 1
    return tp, fp


def lamr(frames):
    n_gt = sum(len(f["gt"]) for f in frames)
    if n_gt == 0:
        return None
    cuts = sorted({d[4] for f in frames for d in f["dets"]}, reverse=True)
    points = [(0.0, 1.0)]
    for c in cuts:
        tp = fp = 0
        for f in frames:
            kept = [d for d in f["dets"] if d[4] >= c]
            a, b = match(kept, f["gt"], f["ign"])
            tp += a
            fp += b
        points.append((fp / len(frames), (n_gt - tp) / n_gt))
    logs = []
    for r in REFS:
        mr = min([m for (f, m) in points if f <= r], default=1.0)
        logs.append(math.log(max(mr, 1e-10)))
    return math.exp(sum(logs) / len(logs)), points


def main():
    rng = random.Random(7)
    Image.new("RGB", (W, H)).save(os.path.join(HERE, "visible.png"))
    Image.new("I;16", (W, H)).save(os.path.join(HERE, "thermal.png"))
    frames = []
    for i in range(8):
        tod = "day" if i % 3 != 2 else "night"
        boxes = []
        for _ in range(rng.randint(0 if i == 5 else 1, 6)):
            h = rng.randint(30, 140)
            w = max(8, h * 2 // 5)
            x = rng.randint(0, W - w)
            y = rng.randint(0, H - h)
            boxes.append((x, y, w, h, 1 if rng.random() < 0.2 else 0))
        dets = []
        for b in boxes:
            for _ in range(rng.randint(0, 2)):
                j = rng.choice([1, 3, 6, 12])
                dets.append((b[0] + rng.randint(-j, j), b[1] + rng.randint(-j, j),
                             b[2] + rng.randint(-j // 2, j // 2) + 1, b[3] + rng.randint(-j, j) + 1,
                             round(rng.uniform(0.05, 1.0), 2)))
        for _ in range(rng.randint(0, 4)):
            h = rng.randint(30, 120)
            dets.append((rng.randint(0, W - 40), rng.randint(0, H - h), h * 2 // 5, h,
                         round(rng.uniform(0.05, 0.9), 2)))
        frames.append({"id": f"fx{i:02d}", "tod": tod, "boxes": boxes, "dets": dets})

    with open(os.path.join(HERE, "manifest.tsv"), "w") as f:
        f.write("# evaluation fixture: 8 frames, regenerated by oracle.py\n")
        for i, fr in enumerate(frames):
            bx = ";".join(",".join(str(v) for v in b) for b in fr["boxes"])
            f.write(f"{fr['id']}\t{i}\t{fr['tod']}\tvisible.png\tthermal.png\t{bx}\n")
    with open(os.path.join(HERE, "detections.tsv"), "w") as f:
        for fr in frames:
            for d in fr["dets"]:
                f.write(f"{fr['id']}\t{d[0]}\t{d[1]}\t{d[2]}\t{d[3]}\t{d[4]}\n")

    for fr in frames:
        fr["gt"] = [b[:4] for b in fr["boxes"] if b[3] >= MIN_H and not b[4]]
        fr["ign"] = [b[:4] for b in fr["boxes"] if not (b[3] >= MIN_H and not b[4])]
    with open(os.path.join(HERE, "expected.tsv"), "w") as f:
        f.write("# subset\tlamr\n")
        for name, sel in [("all", frames),
                          ("day", [x for x in frames if x["tod"] == "day"]),
                          ("night", [x for x in frames if x["tod"] == "night"])]:
            res = lamr(sel)
            f.write(f"{name}\t{'n/a' if res is None else repr(res[0])}\n")
        f.write("# per-frame tp fp fn with every detection kept\n")
        for fr in frames:
            tp, fp = match(fr["dets"], fr["gt"], fr["ign"])
            f.write(f"{fr['id']}\t{tp}\t{fp}\t{len(fr['gt']) - tp}\n")


if __name__ == "__main__":
    main()
