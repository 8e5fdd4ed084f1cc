"""Command-line experiment runner.

Configuration is a flat key=value text file plus --set overrides (later
wins).  Every output CSV embeds the config hash; reruns with the same config
and seed are byte-identical regardless of thread count (workers compute
disjoint units whose results are assembled in a fixed order).

Exit codes: 2 validation failure, 3 budget exceeded, 4 numerical tolerance
failure (the failing check is named on stderr).
"""
import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .distance import make_builtin
from .riesz import RieszSpec, riesz_mean_torus, subordination_residual
from .spectral import (ContainerError, GridFunction, SpectralField, TorusGrid,
                       read_container, synthesize, write_container)

__all__ = ["ExperimentConfig", "ResultSet", "run", "cache_field", "load_field", "main"]

EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_TOLERANCE = 4

KINDS = ("riesz-eval", "strong-mean", "sharpness-scan", "kernel-scan",
         "atom-scan", "decomp-check", "whitney", "subordination-check")


@dataclass
class ExperimentConfig:
    kind: str
    distance: str = "euclidean"
    power: int = 2
    d: int = 2
    n: int = 32
    box_period: float = 64.0
    lam: float = 0.5
    p: float = 1.0
    q: float = 2.0
    t: float = 2.0
    T_min: float = 2.0
    T_max: float = 512.0
    j_min: int = 4
    j_max: int = 9
    eps: float = 0.125
    seed: int = 0
    threads: int = 1
    out_dir: str = "results"
    max_nodes: int = 2 ** 26
    max_cubes: int = 2 ** 20

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.d < 1 or self.n < 4:
            raise ValueError("bad grid parameters")
        if self.lam <= -1:
            raise ValueError("index must exceed -1")
        if not (1.0 <= self.p <= 2.0) and self.kind != "atom-scan":
            raise ValueError("p must lie in [1, 2]")
        if self.q < 1.0:
            raise ValueError("q must be >= 1")
        if self.j_min > self.j_max:
            raise ValueError("empty ring index range")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.T_min <= 0 or self.T_max < self.T_min:
            raise ValueError("bad horizon range")

    def config_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items()
                   if k not in ("threads", "out_dir")}
        canon = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config_file(path) -> Dict[str, str]:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(kind, file_pairs: Dict[str, str], overrides: List[str],
                 out_dir=None, threads=None, seed=None) -> ExperimentConfig:
    cfg = ExperimentConfig(kind=kind)
    pairs = dict(file_pairs)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    for key, value in pairs.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        caster = type(current) if current is not None else str
        setattr(cfg, key, caster(value) if caster is not bool
                else value.lower() in ("1", "true", "yes"))
    if out_dir is not None:
        cfg.out_dir = out_dir
    if threads is not None:
        cfg.threads = threads
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# deterministic CSV / manifest output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows, config_hash=None):
    """Atomic CSV write: UTF-8, comma-separated, '.' decimal, LF endings.
    When a config hash is given it is recorded in every row (last column)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if config_hash is not None:
        header = list(header) + ["config"]
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                cells = [_fmt(v) for v in row]
                if config_hash is not None:
                    cells.append(config_hash)
                fh.write(",".join(cells) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ResultSet:
    csv_paths: List[str]
    manifest_path: str
    config_hash: str


def _write_manifest(cfg: ExperimentConfig, csv_paths, wall_time, diagnostics):
    manifest = {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "wall_time_s": round(wall_time, 3),
        "config": asdict(cfg),
        "csv_files": [str(Path(p).name) for p in csv_paths],
        "diagnostics": diagnostics,
    }
    path = Path(cfg.out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return str(path)


def _parallel_map(fn, items, threads):
    """Map preserving input order; work is split across threads but results
    are assembled by index, so output does not depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# field cache
# ---------------------------------------------------------------------------

def cache_field(key: str, obj, cache_dir="cache"):
    path = Path(cache_dir) / f"{key}.slab"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(write_container(obj))
    os.replace(tmp, path)
    return str(path)


def load_field(key: str, cache_dir="cache"):
    blob = Path(Path(cache_dir) / f"{key}.slab").read_bytes()
    return read_container(blob)


# ---------------------------------------------------------------------------
# experiment pipelines
# ---------------------------------------------------------------------------

def _random_field(cfg: ExperimentConfig, L=None, decay=4.0) -> SpectralField:
    rng = np.random.default_rng(np.random.Philox(cfg.seed))
    L = cfg.n // 2 - 1 if L is None else L
    shape = (2 * L + 1,) * cfg.d
    ax = np.arange(-L, L + 1)
    mesh = np.meshgrid(*([ax] * cfg.d), indexing="ij")
    r2 = sum(m.astype(float) ** 2 for m in mesh)
    amp = np.exp(-r2 / (2.0 * decay ** 2))
    coeffs = amp * np.exp(2j * np.pi * rng.uniform(size=shape))
    return SpectralField(mode="torus", d=cfg.d, L=L, coeffs=coeffs)


def _spec(cfg: ExperimentConfig) -> RieszSpec:
    rho = make_builtin(cfg.distance, cfg.d,
                       m=cfg.power if cfg.distance == "smooth_power_mean" else None)
    return RieszSpec(lam=cfg.lam, rho=rho, p=cfg.p, q=cfg.q)


def _run_riesz_eval(cfg):
    spec = _spec(cfg)
    L = cfg.n // 2 - 1
    coeffs = np.zeros((2 * L + 1,) * cfg.d, dtype=complex)
    idx = list([L] * cfg.d)
    idx[0] = L + 1                     # the first unit frequency
    coeffs[tuple(idx)] = 1.0
    c = SpectralField(mode="torus", d=cfg.d, L=L, coeffs=coeffs)
    out = riesz_mean_torus(c, cfg.t, spec)
    rows = []
    lat = out.lattice().reshape(-1, cfg.d)
    flat_in = c.coeffs.reshape(-1)
    flat_out = out.coeffs.reshape(-1)
    live = flat_in != 0
    for vec, vin, vout in zip(lat[live], flat_in[live], flat_out[live]):
        rows.append((*[int(v) for v in vec], cfg.t, cfg.lam,
                     vout.real, vout.imag))
    header = [f"l{i}" for i in range(cfg.d)] + ["t", "lam", "value_re", "value_im"]
    path = Path(cfg.out_dir) / "riesz_eval.csv"
    write_csv(path, header, rows, cfg.config_hash())
    return [str(path)], {"modes": int(live.sum())}


def _run_strong_mean(cfg):
    from .strong import sup_strong_mean
    spec = _spec(cfg)
    c = _random_field(cfg)
    grid = TorusGrid(d=cfg.d, n=cfg.n)
    n_oct = int(np.log2(cfg.T_max / cfg.T_min))
    ladder = cfg.T_min * 2.0 ** np.arange(n_oct + 1)
    sup, prof = sup_strong_mean(c, "riesz", spec, grid, ladder, cfg.q,
                                return_profile=True)
    header = ["x_index"] + [f"x{i}" for i in range(cfg.d)] + \
        ["T", "G_q", "quadrature_cells", "quadrature_nodes"]
    path = Path(cfg.out_dir) / "strong_mean.csv"
    write_csv(path, header, prof.csv_rows(grid), cfg.config_hash())
    return [str(path)], {"ladder": [float(T) for T in ladder]}


def _run_sharpness(cfg):
    from .sharpness import sharpness_scan
    n_oct = int(np.log2(cfg.T_max / cfg.T_min))
    ladder = cfg.T_min * 2.0 ** np.arange(n_oct + 1)
    res = sharpness_scan(cfg.d, cfg.p, cfg.q, cfg.lam, T_ladder=ladder,
                         eps=cfg.eps)
    header = ["T", "Q", "log2T", "log2Q", "fitted_slope", "predicted_slope",
              "residual"]
    path = Path(cfg.out_dir) / "sharpness_scan.csv"
    write_csv(path, header, res.rows(), cfg.config_hash())
    return [str(path)], {"fitted_slope": res.fitted_slope,
                         "predicted_slope": res.predicted_slope}


def _run_kernel_scan(cfg):
    from .decomp import KernelTile, RingSystem, kernel_eval, make_cap_system
    spec = _spec(cfg)
    rings = RingSystem(lam=cfg.lam, j_max=cfg.j_max + 2)
    rows = []
    amps = []
    js = list(range(cfg.j_min, cfg.j_max + 1))

    def one(j):
        caps = make_cap_system(j, spec.rho)
        tile = KernelTile(j=j, nu=0, caps=caps, rings=rings)
        best = 0.0
        probes = [np.zeros(2)]
        for r in (0.4, 0.8, 1.2):
            probes.extend([r * caps.directions[0], -r * caps.directions[0]])
        local_rows = []
        for x in probes:
            v = kernel_eval(tile, x)
            best = max(best, abs(v))
            local_rows.append((j, 0, *x, v.real, v.imag, 0.0, 0.0))
        return best, local_rows

    results = _parallel_map(one, js, cfg.threads)
    for best, local in results:
        amps.append(best)
        rows.extend(local)
    slope = float(np.polyfit(js, np.log2(amps), 1)[0])
    header = ["j", "nu", "x0", "x1", "re", "im", "bound_value", "ratio"]
    path = Path(cfg.out_dir) / "kernel_scan.csv"
    write_csv(path, header, rows, cfg.config_hash())
    return [str(path)], {"amplitude_slope": slope}


def _run_atom_scan(cfg):
    from .atoms import atom_scaling_scan
    res = atom_scaling_scan(cfg.p, 2, d=2, j_range=range(cfg.j_min, cfg.j_max + 1),
                            lam=cfg.lam, seed=cfg.seed)
    header = ["j", "p", "M", "lp_value", "log2_lp", "predicted_slope",
              "fitted_slope"]
    path = Path(cfg.out_dir) / "atom_scan.csv"
    write_csv(path, header, res.rows(), cfg.config_hash())
    return [str(path)], {"fitted_slope": res.fitted_slope,
                         "predicted_slope": res.predicted_slope}


def _run_decomp_check(cfg):
    from .decomp import RingSystem, make_cap_system
    spec = _spec(cfg)
    rings = RingSystem(lam=cfg.lam, j_max=max(cfg.j_max, 8))
    recon = rings.reconstruction_residual()
    if recon > 1e-8:
        raise ToleranceFailure(f"ring reconstruction residual {recon:.2e} > 1e-8")
    rows = []
    for j in range(max(2, cfg.j_min), cfg.j_max + 1):
        caps = make_cap_system(j, spec.rho)
        ratio = caps.count * 2.0 ** (-j * (spec.rho.d - 1) / 2.0)
        sep = caps.min_separation() / 2.0 ** (-j / 2.0)
        rows.append((j, caps.count, ratio, sep, caps.max_overlap(),
                     caps.partition_residual()))
    header = ["j", "count", "count_ratio", "separation_constant",
              "max_overlap", "partition_residual"]
    path = Path(cfg.out_dir) / "decomp_check.csv"
    write_csv(path, header, rows, cfg.config_hash())
    return [str(path)], {"ring_reconstruction": recon}


def _run_whitney(cfg):
    from .decomp import whitney_decompose
    rng = np.random.default_rng(np.random.Philox(cfg.seed))
    n = cfg.n
    rows = []
    for trial in range(10):
        mask = np.zeros((n, n), dtype=bool)
        for _ in range(6):
            cx, cy = rng.integers(0, n, 2)
            r = rng.integers(2, max(3, n // 4))
            X, Y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            mask |= ((X - cx) % n - n // 2) ** 2 + ((Y - cy) % n - n // 2) ** 2 < r * r
        if mask.all() or not mask.any():
            continue
        cubes = whitney_decompose(mask)
        if len(cubes) > cfg.max_cubes:
            raise BudgetExceeded(f"{len(cubes)} cubes exceed the configured cap")
        covered = sum(w.size ** 2 for w in cubes)
        rows.append((trial, len(cubes), covered, int(mask.sum())))
    header = ["trial", "cubes", "covered_cells", "mask_cells"]
    path = Path(cfg.out_dir) / "whitney.csv"
    write_csv(path, header, rows, cfg.config_hash())
    return [str(path)], {"trials": len(rows)}


def _run_subordination(cfg):
    spec = _spec(cfg)
    rng = np.random.default_rng(np.random.Philox(cfg.seed))
    xi = rng.normal(size=(50, cfg.d))
    xi *= (rng.uniform(0.05, 1.2, size=50) / np.maximum(spec.rho(xi), 1e-12) ** spec.rho.b)[:, None]
    resid, quad = subordination_residual(spec, N=4, M=6, xi_samples=xi)
    if resid > 1e-6:
        raise ToleranceFailure(f"subordination residual {resid:.2e} > 1e-6")
    path = Path(cfg.out_dir) / "subordination.csv"
    write_csv(path, ["max_residual", "two_level_quadrature_diff"],
              [(resid, quad)], cfg.config_hash())
    return [str(path)], {"max_residual": resid}


class ToleranceFailure(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    pass


_PIPELINES = {
    "riesz-eval": _run_riesz_eval,
    "strong-mean": _run_strong_mean,
    "sharpness-scan": _run_sharpness,
    "kernel-scan": _run_kernel_scan,
    "atom-scan": _run_atom_scan,
    "decomp-check": _run_decomp_check,
    "whitney": _run_whitney,
    "subordination-check": _run_subordination,
}


def run(cfg: ExperimentConfig) -> ResultSet:
    cfg.validate()
    t0 = time.perf_counter()
    csv_paths, diagnostics = _PIPELINES[cfg.kind](cfg)
    manifest = _write_manifest(cfg, csv_paths, time.perf_counter() - t0,
                               diagnostics)
    return ResultSet(csv_paths=csv_paths, manifest_path=manifest,
                     config_hash=cfg.config_hash())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="summlab",
        description="desk-scale summability experiments")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; later wins)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        pairs = parse_config_file(args.config) if args.config else {}
        cfg = build_config(args.kind, pairs, args.set, out_dir=args.out,
                           threads=args.threads, seed=args.seed)
    except (ValueError, OSError) as exc:
        print(f"summlab: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        result = run(cfg)
    except BudgetExceeded as exc:
        print(f"summlab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError,) as exc:
        if "budget" in str(exc).lower():
            print(f"summlab: budget exceeded: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        print(f"summlab: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ToleranceFailure, RuntimeError) as exc:
        print(f"summlab: tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    for p in result.csv_paths:
        print(p)
    print(result.manifest_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
