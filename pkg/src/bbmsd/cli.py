"""Command-line front end.

Configuration is a key=value text file (``--config``) plus ``--set key=value``
overrides. Every result embeds a hash of the effective configuration and the
seed, and identical inputs give identical output bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from .bbcode import CodeError, PRESETS
from .compiler import CompileError, CompileOptions, compile_protocol
from .compressor import CompressionError, compress, verify_equivalence
from .noise import NoiseTableError
from .protocol import (
    SHIPPED,
    ProtocolError,
    enumerate_faults,
    footprint,
    format_protocol,
    load_protocol,
    shipped_protocol,
    verify_triorthogonal,
)
from .resources import (
    BASELINES,
    FactoryConfig,
    ResourceError,
    estimate,
    noise_model,
    prepare_protocol,
    resolve_code,
    resolve_protocol,
    sweep,
    table_one_grid,
)
from .simulator import SimulationError, simulate

VALIDATION_ERRORS = (ProtocolError, CodeError, CompileError, CompressionError, ResourceError,
                     NoiseTableError, SimulationError, FileNotFoundError, ValueError)
THREADS_ENV = "BBMSD_THREADS"


class ConfigError(ValueError):
    pass


# configuration -------------------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(name: str, raw: str):
    types = {f.name: f.type for f in fields(FactoryConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}; known: {', '.join(sorted(types))}")
    t = str(types[name])
    raw = raw.strip()
    if "None" in t and raw.lower() in ("none", "auto", ""):
        return None
    try:
        if t.startswith("bool"):
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name} ({t})") from None
    return raw


def parse_pairs(lines) -> dict[str, str]:
    out = {}
    for n, line in enumerate(lines, 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {n}: expected key=value, got {line.strip()!r}")
        key, val = s.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_config(path: str | None, overrides: list[str]) -> FactoryConfig:
    pairs: dict[str, str] = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path} not found")
        pairs.update(parse_pairs(p.read_text().splitlines()))
    pairs.update(parse_pairs(overrides))
    values = {k: _convert(k, v) for k, v in pairs.items()}
    return validate_config(FactoryConfig(**values))


def validate_config(cfg: FactoryConfig) -> FactoryConfig:
    if cfg.code not in PRESETS and not Path(cfg.code).exists():
        raise ConfigError(f"code {cfg.code!r} is neither a preset nor an existing file")
    resolve_protocol(cfg.protocol)
    if cfg.tracks not in (1, 2):
        raise ConfigError("tracks must be 1 or 2")
    for name in ("p_phys", "p_in", "lam"):
        v = getattr(cfg, name)
        if not 0 <= v <= 1:
            raise ConfigError(f"{name} must lie in [0, 1]")
    return cfg


def config_hash(cfg: FactoryConfig) -> str:
    text = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _emit(obj: dict, cfg: FactoryConfig | None, out: str | None) -> None:
    if cfg is not None:
        obj = {"config_hash": config_hash(cfg), "seed": cfg.seed, **obj}
    text = json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    return str(x)


# commands ------------------------------------------------------------------------

def cmd_verify(args) -> int:
    G = resolve_protocol_nocheck(args.protocol)
    report = verify_triorthogonal(G)
    print(f"{args.protocol}: m={G.m} n={G.n} k={G.k} kind={G.kind}")
    print(report)
    return 0 if report.valid else 1


def resolve_protocol_nocheck(ref: str):
    if ref in SHIPPED:
        return shipped_protocol(ref)
    if not Path(ref).exists():
        raise ResourceError(f"protocol {ref!r} not found")
    return load_protocol(ref, validate=False)


def cmd_analyze(args) -> int:
    G = resolve_protocol(args.protocol)
    poly = enumerate_faults(G, args.w_max)
    prof = footprint(G)
    _emit({
        "protocol": args.protocol, "m": G.m, "n": G.n, "k": G.k, "kind": G.kind,
        "t": poly.t, "c": poly.c, "w_max": poly.w_max,
        "counts": {str(w): list(v) for w, v in sorted(poly.counts.items())},
        "footprint": prof.peak, "profile": prof.sizes,
    }, None, args.out)
    return 0


def cmd_compile(args) -> int:
    cfg = load_config(args.config, args.set)
    code = resolve_code(cfg.code)
    G, comp = prepare_protocol(cfg, code)
    opts = CompileOptions(scheme=cfg.scheme, tracks=cfg.tracks, recycle=cfg.recycle, rounds=cfg.rounds,
                          tsp_method=cfg.tsp_method, seed=cfg.seed)
    sched = compile_protocol(G, code, opts, signs=comp.signs if comp else None)
    out = args.out or "schedule.json"
    d = sched.to_dict()
    d["config_hash"] = config_hash(cfg)
    d["seed"] = cfg.seed
    Path(out).write_text(json.dumps(d, indent=1, sort_keys=True) + "\n")
    n_rot = len(sched.natives)
    print(f"schedule written to {out}")
    print(f"rotations: {n_rot}; native after masking: {sched.native_count}/{n_rot}; "
          f"native without masking: {sched.native_unmasked_count}/{n_rot}")
    print(f"automorphism generators: {sched.expected_units('automorphism'):g}; "
          f"in-module units: {sched.expected_units('in_module'):g}; "
          f"inter-module units: {sched.expected_units('inter_module'):g}")
    print(f"config {config_hash(cfg)} seed {cfg.seed}")
    return 0


def cmd_compress(args) -> int:
    G = resolve_protocol(args.protocol)
    res = compress(G, target=args.target, budget=args.budget, seed=args.seed, restarts=args.restarts)
    rep = verify_equivalence(G, res)
    print(f"footprint {res.footprint_before} -> {res.footprint_after}")
    print(rep)
    if args.out:
        Path(args.out).write_text(format_protocol(res.g_prime))
        log = Path(args.out).with_suffix(".ops.json")
        log.write_text(json.dumps({"seed": args.seed, **res.to_dict()}, indent=1, sort_keys=True) + "\n")
        print(f"compressed protocol written to {args.out}, ops log to {log}")
    if args.target is not None and res.footprint_after > args.target:
        print(f"target {args.target} not reached")
        return 1
    return 0 if rep.passed else 1


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    code = resolve_code(cfg.code)
    G, comp = prepare_protocol(cfg, code)
    opts = CompileOptions(scheme=cfg.scheme, tracks=cfg.tracks, recycle=cfg.recycle, rounds=cfg.rounds,
                          tsp_method=cfg.tsp_method, seed=cfg.seed)
    sched = compile_protocol(G, code, opts, signs=comp.signs if comp else None)
    noise, _ = noise_model(cfg, code.name)
    if args.zero_noise:
        from .noise import NoiseModel
        noise = NoiseModel()
    rep = simulate(sched, noise, breakdown=args.breakdown)
    _emit(rep.to_dict(), cfg, args.out)
    return 0


def cmd_estimate(args) -> int:
    cfg = load_config(args.config, args.set)
    rep = estimate(cfg)
    _emit(rep.to_dict(), cfg, args.out)
    return 0


def _grid_configs(path: str | None, overrides: list[str]) -> list[FactoryConfig]:
    pairs: dict[str, str] = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"grid file {path} not found")
        pairs.update(parse_pairs(p.read_text().splitlines()))
    pairs.update(parse_pairs(overrides))
    keys = sorted(pairs)
    axes = [[_convert(k, v) for v in pairs[k].split(",")] for k in keys]
    configs = []
    for combo in itertools.product(*axes):
        configs.append(validate_config(FactoryConfig(**dict(zip(keys, combo)))))
    return configs


def cmd_sweep(args) -> int:
    if args.table1:
        configs = table_one_grid()
    elif args.grid or args.set:
        configs = _grid_configs(args.grid, args.set)
    else:
        configs = []
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    text = sweep(configs, workers=workers)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.baselines:
        for row in BASELINES:
            print("# reference " + ", ".join(f"{k}={v}" for k, v in row.items()), file=sys.stderr)
    return 0


def cmd_codeinfo(args) -> int:
    code = resolve_code(args.code)
    nat = code.native_set
    by_class = nat.count_by_class()
    _emit({
        "name": code.name, "n": code.n, "k": code.k, "physical_qubits": code.physical_qubits,
        "pivot": code.pivot, "dual": code.dual, "blocks": code.blocks,
        "physical_shifts": code.shift_count, "logical_actions": len(code.automorphisms),
        "generators": [list(g) for g in code.generators],
        "native_measurements": len(nat.recipes), "native_by_class": by_class,
    }, None, args.out)
    return 0


# entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbmsd", description="Magic state factories on bivariate bicycle codes")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("verify", help="check triorthogonality of a protocol")
    p.add_argument("protocol")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="fault polynomial and footprint of a protocol")
    p.add_argument("protocol")
    p.add_argument("--w-max", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compile", help="compile a factory schedule")
    with_config(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("compress", help="reduce the logical footprint of a protocol")
    p.add_argument("protocol")
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("simulate", help="density-matrix simulation of a factory")
    with_config(p)
    p.add_argument("--zero-noise", action="store_true")
    p.add_argument("--breakdown", action="store_true", help="attribute error to each noise source")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="resource estimate of a factory")
    with_config(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="CSV over a grid of factory configurations")
    p.add_argument("--grid", help="key=v1,v2,... file; the grid is the product of all keys")
    p.add_argument("--set", action="append", default=[], metavar="KEY=V1,V2")
    p.add_argument("--table1", action="store_true", help="the BB-code factory rows at p_phys=1e-3")
    p.add_argument("--baselines", action="store_true", help="also print surface-code reference rows")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("codeinfo", help="parameters, automorphisms and natives of a code")
    p.add_argument("code", nargs="?", default="gross")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codeinfo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
