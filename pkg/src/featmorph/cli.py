"""Command-line entry point: configuration, image I/O, solver runs, outputs."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import energy, features, grid, multilevel, optimizer
from .errors import ConfigurationError, MorphError


@dataclass
class SolverConfig:
    """Everything one run needs; defaults follow the reference parameter set."""

    mode: str = "rgb"
    image_a: str = ""
    image_b: str = ""
    output_dir: str = "out"
    features_a: str | None = None
    features_b: str | None = None
    k_steps: int = 15
    delta: float = 1.0
    levels: int = 5
    beta: float = 1.0 / math.sqrt(2.0)
    iterations: int = 250
    sigma: float = 0.5
    rho: float = 2.0
    xi1: float = 1000.0
    xi2: float = 1e-6
    mu: float | None = None
    lam: float | None = None
    eta: float | None = None
    warm_iterations: int = 50

    def resolved(self) -> "SolverConfig":
        """Fill mode-dependent defaults for any parameter left unset."""
        if self.mode not in ("rgb", "deep"):
            raise ConfigurationError(f"mode must be 'rgb' or 'deep', got {self.mode!r}")
        out = SolverConfig(**self.__dict__)
        if out.mu is None:
            out.mu = 0.025 if out.mode == "rgb" else 0.002
        if out.lam is None:
            out.lam = 0.1 if out.mode == "rgb" else 0.002
        if out.eta is None:
            out.eta = 1.0 if out.mode == "rgb" else 1e-6
        if out.mode == "deep" and (not out.features_a or not out.features_b):
            raise ConfigurationError("deep mode requires --features-a and --features-b")
        return out

    def params_dict(self) -> dict:
        return {
            "mode": self.mode,
            "K": self.k_steps,
            "delta": self.delta,
            "L": self.levels,
            "beta": self.beta,
            "J": self.iterations,
            "sigma": self.sigma,
            "rho": self.rho,
            "xi1": self.xi1,
            "xi2": self.xi2,
            "mu": self.mu,
            "lambda": self.lam,
            "eta": self.eta,
        }


def load_image_rgb(path) -> np.ndarray:
    """Decode to (3, h, w) float64 in [0, 1]; 8-bit values are used as-is."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def save_image_rgb(path, image: np.ndarray) -> None:
    arr = np.clip(image, 0.0, 1.0).transpose(1, 2, 0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8), mode="RGB").save(path)


def save_image_gray(path, channel: np.ndarray) -> None:
    arr = np.clip(channel, 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8), mode="L").save(path)


def pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Center-pad (3, h, w) by edge replication to the next multiple.

    Returns the padded image and (top, bottom, left, right) pad widths.
    """
    h, w = image.shape[1:]
    new_h = -(-h // multiple) * multiple
    new_w = -(-w // multiple) * multiple
    top = (new_h - h) // 2
    bottom = new_h - h - top
    left = (new_w - w) // 2
    right = new_w - w - left
    padded = np.pad(image, ((0, 0), (top, bottom), (left, right)), mode="edge")
    return padded, (top, bottom, left, right)


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=0)


def colorize_displacement(phi: np.ndarray) -> np.ndarray:
    """Hue encodes displacement direction, brightness its relative magnitude."""
    dims = grid.dims_of(phi[..., 0])
    d = phi - grid.identity_map(dims)
    mag = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)
    peak = mag.max()
    # Peaks far below pixel resolution are numerical noise; render them black
    # instead of amplifying them to full brightness.
    value = mag / peak if peak > 1e-6 else np.zeros_like(mag)
    hue = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi) / (2.0 * np.pi)
    return _hsv_to_rgb(hue, np.ones_like(hue), value)


def run(config: SolverConfig) -> dict:
    """Execute a solve and write all artifacts; returns the summary dict."""
    cfg = config.resolved()
    u_a = load_image_rgb(cfg.image_a)
    u_b = load_image_rgb(cfg.image_b)
    if u_a.shape != u_b.shape:
        raise ConfigurationError(
            f"inputs must share dimensions, got {u_a.shape[1:]} and {u_b.shape[1:]}"
        )
    multiple = 2 ** (cfg.levels - 1)
    u_a, padding = pad_to_multiple(u_a, multiple)
    u_b, _ = pad_to_multiple(u_b, multiple)

    elastic = energy.ElasticParams(mu=cfg.mu, lam=cfg.lam)
    aniso = energy.AnisotropyParams(sigma=cfg.sigma, rho=cfg.rho, xi1=cfg.xi1, xi2=cfg.xi2)
    params = optimizer.IpalmParams(beta=cfg.beta, iterations=cfg.iterations, delta=cfg.delta)

    if cfg.mode == "rgb":
        result = multilevel.solve_rgb(
            u_a, u_b, cfg.k_steps, cfg.levels, elastic, aniso, params
        )
    else:
        finest = grid.GridDims(u_a.shape[2], u_a.shape[1])
        schedule = multilevel.build_schedule(finest, cfg.levels, 0)
        pyr_a = features.load_pyramid_dir(cfg.features_a, schedule.dims)
        pyr_b = features.load_pyramid_dir(cfg.features_b, schedule.dims)
        for lvl, (ta, tb) in enumerate(zip(pyr_a, pyr_b)):
            if ta.shape != tb.shape:
                raise ConfigurationError(
                    f"pyramids disagree at level {lvl}: {ta.shape} vs {tb.shape}"
                )
        result = multilevel.solve_deep(
            u_a, u_b, pyr_a, pyr_b, cfg.k_steps, cfg.levels, elastic, aniso, params,
            eta=cfg.eta, warm_iterations=cfg.warm_iterations,
        )

    os.makedirs(cfg.output_dir, exist_ok=True)
    state = result.state
    frames = []
    for k, f in enumerate(state.fs):
        name = f"frame_{k:03d}.png"
        save_image_rgb(os.path.join(cfg.output_dir, name), f[:3] / cfg.eta)
        frames.append(name)
    for k, a in enumerate(state.anis, start=1):
        save_image_gray(os.path.join(cfg.output_dir, f"anisotropy_{k:03d}.png"), a - cfg.xi2)
    for k, phi in enumerate(state.phis, start=1):
        save_image_rgb(
            os.path.join(cfg.output_dir, f"displacement_{k:03d}.png"),
            colorize_displacement(phi),
        )

    with open(os.path.join(cfg.output_dir, "trace.jsonl"), "w") as fh:
        for lvl, trace in enumerate(result.level_traces):
            for rec in trace:
                row = {"level": lvl}
                row.update(rec.as_dict())
                fh.write(json.dumps(row) + "\n")

    final = result.level_traces[-1][-1] if result.level_traces[-1] else None
    summary = {
        "params": cfg.params_dict(),
        "grid": {"width": u_a.shape[2], "height": u_a.shape[1]},
        "padding": {"top": padding[0], "bottom": padding[1], "left": padding[2], "right": padding[3]},
        "final_energy": final.energy if final else None,
        "reg_k": list(final.reg_k) if final else [],
        "mismatch_k": list(final.mis_k) if final else [],
        "max_displacement": result.displacement_max,
        "frames": frames,
    }
    with open(os.path.join(cfg.output_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featmorph",
        description="Compute a geodesic morphing sequence between two images.",
    )
    parser.add_argument("image_a")
    parser.add_argument("image_b")
    parser.add_argument("output_dir")
    parser.add_argument("--mode", choices=("rgb", "deep"), default="rgb")
    parser.add_argument("--k", dest="k_steps", type=int, default=15, help="number of transition steps")
    parser.add_argument("--delta", type=float, default=1.0, help="blending penalty weight")
    parser.add_argument("--levels", type=int, default=5, help="multilevel depth")
    parser.add_argument("--iters", dest="iterations", type=int, default=250, help="sweeps per level")
    parser.add_argument("--beta", type=float, default=1.0 / math.sqrt(2.0), help="inertia weight")
    parser.add_argument("--mu", type=float, default=None, help="strain weight (mode default if omitted)")
    parser.add_argument("--lambda", dest="lam", type=float, default=None, help="barrier weight (mode default if omitted)")
    parser.add_argument("--eta", type=float, default=None, help="RGB channel scale (mode default if omitted)")
    parser.add_argument("--sigma", type=float, default=0.5, help="inner blur scale, pixels")
    parser.add_argument("--rho", type=float, default=2.0, help="outer blur scale, pixels")
    parser.add_argument("--xi1", type=float, default=1000.0, help="edge contrast scale")
    parser.add_argument("--xi2", type=float, default=1e-6, help="anisotropy floor")
    parser.add_argument("--features-a", default=None, help="pyramid directory for image A (deep mode)")
    parser.add_argument("--features-b", default=None, help="pyramid directory for image B (deep mode)")
    parser.add_argument("--warm-iters", dest="warm_iterations", type=int, default=50,
                        help="feature-only sweeps after each prolongation (deep mode)")
    return parser


def config_from_args(argv=None) -> SolverConfig:
    args = build_parser().parse_args(argv)
    return SolverConfig(**vars(args))


def main(argv=None) -> int:
    try:
        summary = run(config_from_args(argv))
    except (MorphError, OSError) as exc:
        print(f"featmorph: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"final_energy": summary["final_energy"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
