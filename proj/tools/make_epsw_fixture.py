#!/usr/bin/env python3
"""Write a small randomly initialized UNet as an EPSW container.

The network is evaluated here with torch to record check vectors, so the C++
loader can be tested against an independent implementation of every op.

    python3 tools/make_epsw_fixture.py --n 8 --out tests/data/tiny_unet_n8.epsw
"""

import argparse
import json
import math
import struct

import numpy as np
import torch
import torch.nn.functional as F


def timestep_embedding(t, dim, max_period=10000.0, flip_sin_to_cos=True, freq_shift=0.0):
    half = dim // 2
    exponent = -math.log(max_period) * torch.arange(half, dtype=torch.float32) / (half - freq_shift)
    arg = t[:, None].float() * torch.exp(exponent)[None, :]
    emb = torch.cat([torch.sin(arg), torch.cos(arg)], dim=-1)
    if flip_sin_to_cos:
        emb = torch.cat([emb[:, half:], emb[:, :half]], dim=-1)
    return emb


class Builder:
    def __init__(self, gen):
        self.gen = gen
        self.tensors = {}
        self.ops = []

    def param(self, name, shape, scale):
        self.tensors[name] = torch.randn(*shape, generator=self.gen) * scale
        return name

    def conv(self, name, cin, cout, inp, out, k=3):
        w = self.param(name + ".weight", (cout, cin, k, k), 1.0 / math.sqrt(cin * k * k))
        b = self.param(name + ".bias", (cout,), 0.1)
        self.ops.append({"op": "conv2d", "in": inp, "out": out, "weight": w, "bias": b,
                         "stride": 1, "padding": k // 2})

    def norm(self, name, c, groups, inp, out):
        w = name + ".weight"
        b = name + ".bias"
        self.tensors[w] = 1.0 + 0.1 * torch.randn(c, generator=self.gen)
        self.tensors[b] = 0.1 * torch.randn(c, generator=self.gen)
        self.ops.append({"op": "group_norm", "in": inp, "out": out, "groups": groups,
                         "weight": w, "bias": b, "eps": 1e-5})

    def linear(self, name, fin, fout, inp, out):
        w = self.param(name + ".weight", (fout, fin), 1.0 / math.sqrt(fin))
        b = self.param(name + ".bias", (fout,), 0.1)
        self.ops.append({"op": "linear", "in": inp, "out": out, "weight": w, "bias": b})

    def op(self, kind, **kw):
        self.ops.append({"op": kind, **kw})


def build(gen, width=8, temb_dim=16):
    b = Builder(gen)
    w1, w2 = width, 2 * width
    b.op("timestep_embedding", out="t0", dim=temb_dim, max_period=10000.0, flip_sin_to_cos=True, freq_shift=0.0)
    b.linear("time.l1", temb_dim, 4 * width, "t0", "t1")
    b.op("silu", **{"in": "t1", "out": "t2"})
    b.linear("time.l2", 4 * width, 4 * width, "t2", "temb")
    b.op("silu", **{"in": "temb", "out": "temb_act"})

    b.conv("conv_in", 1, w1, "x", "h0")
    b.linear("down0.temb", 4 * width, w1, "temb_act", "p0")
    b.op("add_channel", **{"in": "h0", "vec": "p0", "out": "h0t"})
    b.norm("down0.norm", w1, 2, "h0t", "h0n")
    b.op("silu", **{"in": "h0n", "out": "h0s"})
    b.conv("down0.conv", w1, w1, "h0s", "h0c")
    b.op("add", a="h0c", b="h0", out="d0")

    b.op("avg_pool2", **{"in": "d0", "out": "q1"})
    b.conv("down1.conv", w1, w2, "q1", "h1")
    b.norm("down1.norm", w2, 4, "h1", "h1n")
    b.op("silu", **{"in": "h1n", "out": "d1"})

    b.op("avg_pool2", **{"in": "d1", "out": "q2"})
    b.conv("mid.conv", w2, w2, "q2", "m0")
    b.linear("mid.temb", 4 * width, w2, "temb_act", "p2")
    b.op("add_channel", **{"in": "m0", "vec": "p2", "out": "m1"})
    b.op("silu", **{"in": "m1", "out": "m"})

    b.op("upsample_nearest2", **{"in": "m", "out": "u1u"})
    b.op("concat", inputs=["u1u", "d1"], out="u1c")
    b.conv("up1.conv", 2 * w2, w2, "u1c", "u1h")
    b.norm("up1.norm", w2, 4, "u1h", "u1n")
    b.op("silu", **{"in": "u1n", "out": "u1"})

    b.op("upsample_nearest2", **{"in": "u1", "out": "u0u"})
    b.op("concat", inputs=["u0u", "d0"], out="u0c")
    b.conv("up0.conv", w2 + w1, w1, "u0c", "u0h")
    b.norm("up0.norm", w1, 2, "u0h", "u0n")
    b.op("silu", **{"in": "u0n", "out": "u0"})
    b.conv("conv_out", w1, 1, "u0", "output")
    return b


def evaluate(ops, tensors, x, t_net):
    buf = {"x": x}
    batch = x.shape[0]
    for op in ops:
        kind = op["op"]
        if kind == "conv2d":
            r = F.conv2d(buf[op["in"]], tensors[op["weight"]], tensors.get(op.get("bias")),
                         stride=op["stride"], padding=op["padding"])
        elif kind == "group_norm":
            r = F.group_norm(buf[op["in"]], op["groups"], tensors[op["weight"]], tensors[op["bias"]], op["eps"])
        elif kind == "silu":
            r = F.silu(buf[op["in"]])
        elif kind == "timestep_embedding":
            t = torch.full((batch,), float(t_net))
            r = timestep_embedding(t, op["dim"], op["max_period"], op["flip_sin_to_cos"], op["freq_shift"])
        elif kind == "linear":
            r = F.linear(buf[op["in"]], tensors[op["weight"]], tensors.get(op.get("bias")))
        elif kind == "add_channel":
            r = buf[op["in"]] + buf[op["vec"]][:, :, None, None]
        elif kind == "add":
            r = buf[op["a"]] + buf[op["b"]]
        elif kind == "concat":
            r = torch.cat([buf[k] for k in op["inputs"]], dim=1)
        elif kind == "avg_pool2":
            r = F.avg_pool2d(buf[op["in"]], 2)
        elif kind == "upsample_nearest2":
            r = F.interpolate(buf[op["in"]], scale_factor=2, mode="nearest")
        else:
            raise ValueError(kind)
        buf[op["out"]] = r
    return buf["output"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--beta-start", type=float, default=1e-4)
    ap.add_argument("--beta-end", type=float, default=0.02)
    ap.add_argument("--hurst", type=float, default=1.0 / 3.0)
    ap.add_argument("--mu", type=float, default=2.0)
    ap.add_argument("--sigma", type=float, default=1.5)
    ap.add_argument("--checks", type=int, default=8)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    if args.n % 4:
        raise SystemExit("--n must be divisible by 4 (two pooling levels)")

    gen = torch.Generator().manual_seed(args.seed)
    b = build(gen)
    names = list(b.tensors)
    offset = 0
    entries, blobs = [], []
    for name in names:
        arr = b.tensors[name].to(torch.float32).contiguous().numpy()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset})
        blob = arr.astype("<f4").tobytes()
        blobs.append(blob)
        offset += len(blob)

    betas = np.linspace(args.beta_start, args.beta_end, args.T, dtype=np.float64)
    offset_t = -1
    checks = []
    with torch.no_grad():
        for k in range(args.checks):
            x = torch.randn(1, 1, args.n, args.n, generator=gen)
            t = int(torch.randint(1, args.T + 1, (1,), generator=gen)) if k > 1 else (1 if k == 0 else args.T)
            y = evaluate(b.ops, b.tensors, x, t + offset_t)
            checks.append({"input": [float(v) for v in x.flatten()], "t": t,
                           "output": [float(v) for v in y.flatten()]})

    manifest = {
        "architecture": {"image_size": args.n, "output": "output", "timestep_offset": offset_t, "ops": b.ops},
        "tensors": entries,
        "schedule": {"T": args.T, "betas": [float(v) for v in betas]},
        "normalization": {"mu": args.mu, "sigma": args.sigma, "hurst": args.hurst, "n": args.n, "step_scale": 1.0},
        "check_vectors": checks,
        "provenance": {"generator": "make_epsw_fixture.py", "seed": args.seed, "torch": torch.__version__},
    }
    text = json.dumps(manifest, separators=(",", ":")).encode()
    with open(args.out, "wb") as f:
        f.write(b"EPSW" + struct.pack("<II", 1, len(text)) + text + b"".join(blobs))


if __name__ == "__main__":
    main()
