#!/usr/bin/env python3
# Copyright (C) 2026 The SFLD Toolkit Authors
# SPDX-License-Identifier: Apache-2.0
"""Feature command for the vit-large-14 backend.

Reads an SFLDIMG1 file (normalized HWC float32 crops), runs the CLIP
ViT-L/14 visual encoder and writes the 768-d image embeddings as SFLDFEA1.

    clip_features.py --weights ViT-L-14.pt --input in.img --output out.fea

Needs torch and the `clip` package (github.com/openai/CLIP). The weights
file is the JIT or state-dict checkpoint that clip.load accepts as a path.
"""

import argparse
import struct
import sys

import numpy as np


def read_images(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != b"SFLDIMG1":
        sys.exit(f"{path}: not an SFLDIMG1 file")
    n, h, w = struct.unpack("<3I", data[8:20])
    pixels = np.frombuffer(data, dtype="<f4", offset=20)
    if pixels.size != n * h * w * 3:
        sys.exit(f"{path}: expected {n * h * w * 3} values, found {pixels.size}")
    return pixels.reshape(n, h, w, 3)


def write_features(path, feats):
    feats = np.ascontiguousarray(feats, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"SFLDFEA1")
        f.write(struct.pack("<2I", feats.shape[0], feats.shape[1]))
        f.write(feats.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weights", required=True)
    ap.add_argument("--input", required=True)
    ap.add_argument("--output", required=True)
    ap.add_argument("--batch-size", type=int, default=64)
    args = ap.parse_args()

    import clip
    import torch

    device = "cuda" if torch.cuda.is_available() else "cpu"
    model, _ = clip.load(args.weights, device=device, jit=False)
    model.eval()

    # Input is already normalized with the CLIP mean/std, so no preprocess here.
    images = read_images(args.input)
    out = []
    with torch.no_grad():
        for i in range(0, len(images), args.batch_size):
            batch = torch.from_numpy(images[i : i + args.batch_size].copy()).permute(0, 3, 1, 2)
            emb = model.encode_image(batch.to(device, dtype=model.dtype))
            out.append(emb.float().cpu().numpy())
    feats = np.concatenate(out) if out else np.zeros((0, 768), dtype=np.float32)
    write_features(args.output, feats)


if __name__ == "__main__":
    main()
