#!/usr/bin/env python3
"""Convert a hyperspectral cube and its ground truth into rsddl's binary format.

Inputs may be .mat (the usual Indian Pines / Pavia University downloads) or .npy.
The cube must be height x width x bands; ground truth height x width with 0 for
unlabelled pixels.

    python3 scripts/to_rsddl_hsi.py PaviaU.mat PaviaU_gt.mat -o paviau
    # writes paviau.hsi and paviau.gt
"""

import argparse
import sys

import numpy as np


def load_array(path, key):
    if path.endswith(".npy"):
        return np.load(path)
    from scipy.io import loadmat

    mat = {k: v for k, v in loadmat(path).items() if not k.startswith("__")}
    if key is not None:
        return mat[key]
    arrays = [v for v in mat.values() if isinstance(v, np.ndarray) and v.ndim >= 2]
    if len(arrays) != 1:
        sys.exit(f"{path}: {len(arrays)} candidate arrays ({', '.join(mat)}), pick one with --cube-key/--gt-key")
    return arrays[0]


def write(cube, gt, prefix):
    h, w, b = cube.shape
    with open(prefix + ".hsi", "wb") as f:
        f.write(f"RSDDL-HSI 1 {h} {w} {b}\n".encode())
        f.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())
    with open(prefix + ".gt", "wb") as f:
        f.write(f"RSDDL-GT 1 {h} {w}\n".encode())
        f.write(np.ascontiguousarray(gt, dtype="<u4").tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("cube")
    ap.add_argument("ground_truth")
    ap.add_argument("-o", "--out", required=True, help="output prefix")
    ap.add_argument("--cube-key")
    ap.add_argument("--gt-key")
    args = ap.parse_args()

    cube = load_array(args.cube, args.cube_key)
    gt = load_array(args.ground_truth, args.gt_key)
    if cube.ndim != 3:
        sys.exit(f"cube has shape {cube.shape}, expected height x width x bands")
    if gt.shape != cube.shape[:2]:
        sys.exit(f"ground truth shape {gt.shape} does not match cube {cube.shape[:2]}")
    if not np.isfinite(cube).all():
        sys.exit("cube contains non-finite values")
    if (gt < 0).any():
        sys.exit("ground truth has negative class ids")
    write(cube, gt, args.out)
    labelled = int((gt > 0).sum())
    print(f"{args.out}.hsi: {cube.shape}, {labelled} labelled pixels in {len(np.unique(gt[gt > 0]))} classes")


if __name__ == "__main__":
    main()
