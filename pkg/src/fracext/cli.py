"""Command-line driver: ``fracext <command> [options]``.

Every command writes its artifacts to ``--out`` and prints a JSON summary.
Each artifact embeds the full run configuration. Exit codes: 0 success,
2 contract violation (including an asserted PASS that failed), 3 bad
configuration or input.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractViolation, DomainError, FracExtError
from .geometry import FractionalParams, builtin_geometry, load_geometry_config

__all__ = ["RunConfig", "main", "build_parser", "resolve_config", "run"]

EXIT_OK, EXIT_CONTRACT, EXIT_CONFIG = 0, 2, 3

COMMANDS = ("decompose", "check-itc", "check-degenerate", "fatten", "norms", "extend", "report")


@dataclass
class RunConfig:
    command: str
    geometry: str = "cusp_touching_halfplane"
    geometry_file: str | None = None
    level: int = 8
    s: float = 0.5
    p: float = 2.0
    seed: int = 0
    mc_samples: int = 10_000
    centers: int = 200
    radii: int = 20
    threshold: float = 0.1
    fat_threshold: float = 0.02
    bias: bool = False
    on: str = "boundary"
    assert_pass: bool = False
    family: str = "hardy_power"
    alpha: float | None = None
    lemma31_pairs: int = 100_000
    golden: str | None = None
    golden_rtol: float = 1e-9
    out: str = "fracext_out"
    threads: int | None = None
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        # where the artifacts go and how many threads ran does not change them
        out.pop("out")
        out.pop("threads")
        return out

    def stamp(self) -> str:
        return "config=" + json.dumps(self.to_dict(), sort_keys=True)


_DEFAULTS = {f.name: f.default for f in dataclasses.fields(RunConfig) if f.default is not dataclasses.MISSING}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--geometry", help=f"built-in geometry (default {_DEFAULTS['geometry']})")
    common.add_argument("--geometry-file", help="geometry config JSON (name, resolution_level, bbox, window)")
    common.add_argument("--level", type=int, help=f"resolution level L (default {_DEFAULTS['level']})")
    common.add_argument("--s", type=float, help=f"smoothness s in (0, 1) (default {_DEFAULTS['s']})")
    common.add_argument("--p", type=float, help=f"integrability p > 0 (default {_DEFAULTS['p']})")
    common.add_argument("--seed", type=int, help=f"global seed (default {_DEFAULTS['seed']})")
    common.add_argument("--mc-samples", type=int, help=f"points per ball (default {_DEFAULTS['mc_samples']})")
    common.add_argument("--centers", type=int, help=f"ball centres (default {_DEFAULTS['centers']})")
    common.add_argument("--radii", type=int, help=f"radii per centre (default {_DEFAULTS['radii']})")
    common.add_argument("--threshold", type=float,
                        help=f"PASS threshold for thickness of O (default {_DEFAULTS['threshold']})")
    common.add_argument("--fat-threshold", type=float,
                        help=f"PASS threshold for the fattened domain (default {_DEFAULTS['fat_threshold']})")
    common.add_argument("--bias", action="store_true", default=None,
                        help="bias boundary centres toward the geometry's accumulation point")
    common.add_argument("--on", choices=("boundary", "N", "D"), help="boundary piece carrying the centres")
    common.add_argument("--assert-pass", action="store_true", default=None,
                        help="exit with code 2 if a thickness check FAILs")
    common.add_argument("--family", help=f"corpus family for norms/extend (default {_DEFAULTS['family']})")
    common.add_argument("--alpha", type=float, help="exponent of the hardy_power family (default s + 0.1)")
    common.add_argument("--lemma31-pairs", type=int, help=f"pairs sampled (default {_DEFAULTS['lemma31_pairs']})")
    common.add_argument("--golden", help="report.json to compare against (exit 2 on mismatch)")
    common.add_argument("--golden-rtol", type=float, help=f"relative tolerance (default {_DEFAULTS['golden_rtol']})")
    common.add_argument("--out", help=f"output directory (default {_DEFAULTS['out']})")
    common.add_argument("--threads", type=int, help="cap on worker threads")

    parser = _Parser(prog="fracext", description="Fractional Sobolev extension toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "decompose": "Whitney decomposition of bbox minus cl(N), with invariant checks",
        "check-itc": "interior thickness of O in balls centred on a boundary piece",
        "check-degenerate": "degenerate thickness in N next to the plain check",
        "fatten": "build the fattened domain, check the distance estimate and its thickness",
        "norms": "L^p, Gagliardo and Hardy norms of a corpus function",
        "extend": "extend one corpus function and compare norms",
        "report": "full pipeline over the default corpus",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def resolve_config(argv) -> RunConfig:
    """Defaults, then the --config file, then explicit flags."""
    ns = build_parser().parse_args(argv)
    values = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(_DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in loaded.items() if k != "command"})
    for key, val in vars(ns).items():
        if key in ("config", "command") or val is None:
            continue
        values[key] = val
    cfg = RunConfig(command=ns.command, **values)
    FractionalParams(cfg.s, cfg.p, 1)
    if cfg.level < 2 or cfg.level > 14:
        raise ConfigError(f"level must lie in [2, 14], got {cfg.level}")
    if cfg.mc_samples < 1000:
        raise ConfigError("mc-samples must be at least 1000")
    return cfg


# -- helpers -----------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    body = dict(payload)
    body["config"] = cfg.to_dict()
    path.write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _region(cfg: RunConfig):
    if cfg.geometry_file:
        region = load_geometry_config(cfg.geometry_file)
        cfg.geometry = region.name
        return region
    return builtin_geometry(cfg.geometry, cfg.level)


def _params(cfg: RunConfig, region) -> FractionalParams:
    return FractionalParams(cfg.s, cfg.p, region.d)


def _verdict(value: float, threshold: float) -> str:
    return "PASS" if value >= threshold else "FAIL"


def _bias(cfg, region):
    return region.accumulation_point if cfg.bias else None


# -- commands ----------------------------------------------------------------


def cmd_decompose(cfg: RunConfig, out: Path) -> dict:
    from .whitney import verify_whitney, whitney_decompose

    region = _region(cfg)
    w = whitney_decompose(region.n_cloud, region.bbox, cfg.level)
    rep = verify_whitney(w)
    w.to_csv(out / "cubes.csv", comment=cfg.stamp())
    bbox_volume = region.bbox.volume
    summary = {
        "geometry": region.describe(),
        "whitney": rep.to_dict(),
        "dropped_collar_cells": int(len(w.dropped_indices)),
        "cover_defect_fraction": rep.cover_defect_volume / bbox_volume,
        "verdict": "PASS" if rep.passed() else "FAIL",
    }
    _write_json(out / "decompose.json", summary, cfg)
    if cfg.assert_pass and not rep.passed():
        raise ContractViolation(f"Whitney invariants violated: {rep.to_dict()}")
    return summary


def cmd_check_itc(cfg: RunConfig, out: Path) -> dict:
    from .thickness import check_itc_in

    region = _region(cfg)
    F = {"boundary": region.boundary_cloud, "N": region.n_cloud, "D": region.d_cloud}[cfg.on]
    rep = check_itc_in(region, F, cfg.centers, cfg.radii, cfg.seed, cfg.mc_samples, _bias(cfg, region))
    rep.to_csv(out / "itc_samples.csv", comment=cfg.stamp())
    summary = {"geometry": region.describe(), "on": cfg.on, **rep.summary(cfg.threshold)}
    _write_json(out / "itc.json", summary, cfg)
    if cfg.assert_pass and not rep.verdict(cfg.threshold):
        raise ContractViolation(f"thickness FAIL: inf_density {rep.inf_density} < {cfg.threshold}")
    return summary


def cmd_check_degenerate(cfg: RunConfig, out: Path) -> dict:
    from .thickness import check_degenerate_itc, check_itc_in

    region = _region(cfg)
    bias = _bias(cfg, region)
    args = (cfg.centers, cfg.radii, cfg.seed, cfg.mc_samples, bias)
    deg = check_degenerate_itc(region, region.n_cloud, region.d_cloud, *args)
    plain = check_itc_in(region, region.n_cloud, *args)
    deg.to_csv(out / "degenerate_samples.csv", comment=cfg.stamp())
    plain.to_csv(out / "itc_in_N_samples.csv", comment=cfg.stamp())
    summary = {
        "geometry": region.describe(),
        "degenerate": deg.summary(cfg.threshold),
        "itc_in_N": plain.summary(cfg.threshold),
        "verdict_pair": [deg.summary(cfg.threshold)["verdict"], plain.summary(cfg.threshold)["verdict"]],
    }
    _write_json(out / "degenerate.json", summary, cfg)
    if cfg.assert_pass and not deg.verdict(cfg.threshold):
        raise ContractViolation(f"degenerate thickness FAIL: inf_density {deg.inf_density} < {cfg.threshold}")
    return summary


def _fattened(cfg, region):
    from .fattening import fatten

    return fatten(region)


def cmd_fatten(cfg: RunConfig, out: Path) -> dict:
    from .fattening import lemma31_ratio, verify_fattened_itc

    region = _region(cfg)
    fat = _fattened(cfg, region)
    lem = lemma31_ratio(fat, cfg.lemma31_pairs, cfg.seed)
    itc = verify_fattened_itc(fat, cfg.centers, cfg.radii, cfg.seed, cfg.mc_samples, _bias(cfg, region))
    fat.sigma_cubes_csv(out / "sigma.csv", comment=cfg.stamp())
    itc.to_csv(out / "fattened_itc_samples.csv", comment=cfg.stamp())
    if region.d == 2:
        fat.to_pgm(out / "fattened.pgm", comment=cfg.stamp())
    summary = {
        "geometry": region.describe(),
        "sigma_cubes": fat.n_sigma,
        "added_cubes": int(fat.contributing.sum()),
        "lemma31": lem.to_dict(),
        "fattened_itc": itc.summary(cfg.fat_threshold),
    }
    _write_json(out / "fatten.json", summary, cfg)
    if cfg.assert_pass and not itc.verdict(cfg.fat_threshold):
        raise ContractViolation(f"fattened domain thickness FAIL: {itc.inf_density} < {cfg.fat_threshold}")
    return summary


def _corpus_function(cfg, region):
    from .corpus import CorpusSpec, generate

    spec = CorpusSpec(cfg.family, _params(cfg, region), region.name, alpha=cfg.alpha)
    return spec, generate(spec, region, cfg.level)


def cmd_norms(cfg: RunConfig, out: Path) -> dict:
    from .norms import hardy_norm, lp_norm, seminorm_wsp

    region = _region(cfg)
    spec, f = _corpus_function(cfg, region)
    hardy = hardy_norm(f)
    f.to_csv(out / "function.csv", extra={"config": cfg.to_dict(), "function": spec.label})
    summary = {
        "geometry": region.describe(),
        "function": spec.label,
        "cells": len(f),
        "lp": lp_norm(f),
        "seminorm": seminorm_wsp(f),
        "hardy": hardy.to_dict(),
    }
    _write_json(out / "norms.json", summary, cfg)
    return summary


def cmd_extend(cfg: RunConfig, out: Path) -> dict:
    from .extension import extend_full, restriction_check

    region = _region(cfg)
    spec, f = _corpus_function(cfg, region)
    fat = _fattened(cfg, region)
    res = extend_full(f, fat)
    extra = {"config": cfg.to_dict(), "function": spec.label}
    f.to_csv(out / "input.csv", extra=extra)
    res.intermediate.to_csv(out / "zero_extended.csv", extra=extra)
    res.output.to_csv(out / "output.csv", extra=extra)
    summary = {
        "geometry": region.describe(),
        "function": spec.label,
        "restriction_deviation": restriction_check(res, f),
        **res.to_dict(),
    }
    _write_json(out / "extend.json", summary, cfg)
    return summary


def cmd_report(cfg: RunConfig, out: Path) -> dict:
    from .corpus import default_corpus, generate
    from .extension import extend_full, prepare_exterior, restriction_check
    from .fattening import lemma31_ratio, verify_fattened_itc
    from .thickness import check_itc_in

    region = _region(cfg)
    params = _params(cfg, region)
    bias = _bias(cfg, region)
    mc = (cfg.centers, cfg.radii, cfg.seed, cfg.mc_samples)
    itc_n = check_itc_in(region, region.n_cloud, *mc, bias)
    fat = _fattened(cfg, region)
    lem = lemma31_ratio(fat, cfg.lemma31_pairs, cfg.seed)
    fat_itc = verify_fattened_itc(fat, *mc, bias)
    plan = prepare_exterior(fat, cfg.level)
    rows = []
    for spec in default_corpus(region, params):
        f = generate(spec, region, cfg.level)
        res = extend_full(f, fat, plan)
        rows.append({
            "function": spec.label,
            "ratio": res.ratio,
            "status": res.status,
            "restriction_deviation": restriction_check(res, f),
            "hardy_divergence_suspected": res.hardy_divergence_suspected,
            **{f"in_{k}": v for k, v in res.input_norms.items()},
            **{f"out_{k}": v for k, v in res.output_norms.items()},
        })
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    with open(out / "corpus.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# {cfg.stamp()}\n")
        cols = list(rows[0])
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
    itc_n.to_csv(out / "itc_in_N_samples.csv", comment=cfg.stamp())
    fat_itc.to_csv(out / "fattened_itc_samples.csv", comment=cfg.stamp())
    fat.sigma_cubes_csv(out / "sigma.csv", comment=cfg.stamp())
    if region.d == 2:
        fat.to_pgm(out / "fattened.pgm", comment=cfg.stamp())
    summary = {
        "geometry": region.describe(),
        "itc_in_N": itc_n.summary(cfg.threshold),
        "lemma31": lem.to_dict(),
        "fattened_itc": fat_itc.summary(cfg.fat_threshold),
        "exterior_cubes": plan.n_cubes,
        "corpus_size": len(rows),
        "max_ratio": max(ratios) if ratios else None,
        "min_ratio": min(ratios) if ratios else None,
        "max_restriction_deviation": max(r["restriction_deviation"] for r in rows),
        "corpus": rows,
    }
    _write_json(out / "report.json", summary, cfg)
    if cfg.golden:
        _compare_golden(out / "report.json", Path(cfg.golden), cfg.golden_rtol)
    if cfg.assert_pass and not (itc_n.verdict(cfg.threshold) and fat_itc.verdict(cfg.fat_threshold)):
        raise ContractViolation("thickness FAIL in report run")
    return summary


def _compare_golden(produced: Path, golden: Path, rtol: float) -> None:
    try:
        ref = json.loads(golden.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read golden file {golden}: {exc}") from exc
    got = json.loads(produced.read_text(encoding="utf-8"))
    bad = []

    def walk(a, b, path):
        if isinstance(b, dict):
            if not isinstance(a, dict):
                bad.append(path)
                return
            for k in b:
                if k != "config":
                    walk(a.get(k), b[k], f"{path}.{k}")
        elif isinstance(b, list):
            if not isinstance(a, list) or len(a) != len(b):
                bad.append(path)
                return
            for n, (x, y) in enumerate(zip(a, b)):
                walk(x, y, f"{path}[{n}]")
        elif isinstance(b, float) and isinstance(a, (int, float)) and not isinstance(a, bool):
            if not math.isclose(a, b, rel_tol=rtol, abs_tol=1e-300):
                bad.append(path)
        elif a != b:
            bad.append(path)

    walk(got, ref, "$")
    if bad:
        raise ContractViolation(f"report differs from golden file at {bad[:10]}")


HANDLERS = {
    "decompose": cmd_decompose,
    "check-itc": cmd_check_itc,
    "check-degenerate": cmd_check_degenerate,
    "fatten": cmd_fatten,
    "norms": cmd_norms,
    "extend": cmd_extend,
    "report": cmd_report,
}


def run(cfg: RunConfig) -> dict:
    if cfg.threads:
        import numba

        numba.set_num_threads(max(1, min(cfg.threads, numba.config.NUMBA_NUM_THREADS)))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[cfg.command](cfg, out)


def _error(code: int, kind: str, exc: Exception, cfg: RunConfig | None) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code}
    if cfg is not None:
        payload["config"] = cfg.to_dict()
        try:
            Path(cfg.out).mkdir(parents=True, exist_ok=True)
            (Path(cfg.out) / "error.json").write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
    print(json.dumps(_clean(payload), sort_keys=True))
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    cfg = None
    try:
        if any(a in ("-h", "--help") for a in argv):
            build_parser().parse_args(argv)
        cfg = resolve_config(argv)
        summary = run(cfg)
    except ContractViolation as exc:
        return _error(EXIT_CONTRACT, "contract_violation", exc, cfg)
    except (ConfigError, DomainError) as exc:
        return _error(EXIT_CONFIG, "config_error", exc, cfg)
    except FracExtError as exc:
        return _error(EXIT_CONTRACT, "error", exc, cfg)
    except TypeError as exc:
        # unexpected keys or types from a config file
        return _error(EXIT_CONFIG, "config_error", exc, cfg)
    print(json.dumps(_clean({k: v for k, v in summary.items() if k != "corpus"}), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
