"""Command-line front door: divergences, exponent scans, the check suite and family tools.

Exit codes: 0 success, 1 check failure, 2 usage or parse error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .divergences import (
    Bracket,
    encode_float,
    measured_relent_pinched,
    neg_log2,
    neyman_pearson_simple,
    umegaki,
)
from .errors import CapExceeded, ConfigError, QSteinError
from .exponents import regularised_relent_scan
from .families import (
    StateFamily,
    axiom_audit,
    named_state,
    resolve_state,
    separable_inner,
    stabiliser_states,
)
from .harness import run_all
from .operators import DensityOperator, check_dim, load_operator

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3
SCENARIO_DIR = Path(__file__).with_name("scenarios")


# ---------------------------------------------------------------- output helpers

def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_meta(path: Path, command: str, argv, extra: dict | None = None) -> None:
    """Sidecar with the run's wall-clock time; keeps the main artifacts byte-stable."""
    meta = {"command": command, "argv": list(argv), "version": __version__,
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    if extra:
        meta.update(extra)
    path = Path(path)
    stem = path.name[:-len(path.suffix)] if path.suffix in (".json", ".csv") else path.name
    write_atomic(path.parent / f"{stem}.meta.json", dumps(meta))


def parse_eps_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--eps: {exc}") from exc
    for e in values:
        if not 0.0 < e < 1.0:
            raise ConfigError(f"--eps: {e} is outside (0, 1)")
    return values


def load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        named = SCENARIO_DIR / f"{path.name}.json" if path.suffix == "" else None
        if named is not None and named.exists():
            path = named
        else:
            raise ConfigError(f"{path}: no such file")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


# ---------------------------------------------------------------- divergence

def _load_state(ref: str) -> DensityOperator:
    if os.path.exists(ref):
        return DensityOperator.from_operator(load_operator(ref))
    if ref.startswith("@"):
        return named_state(ref[1:])
    raise ConfigError(f"{ref}: no such operator file")


def cmd_divergence(args) -> int:
    rho, sigma = _load_state(args.rho), _load_state(args.sigma)
    out: dict = {"divergence": args.name, "units": "bits"}
    if args.name == "umegaki":
        value = umegaki(rho, sigma)
        out["value"] = encode_float(value)
        print(f"umegaki = {_fmt(value)} bits")
    elif args.name == "pinched":
        value = measured_relent_pinched(rho, sigma)
        out["value"] = encode_float(value)
        print(f"measured (pinched) = {_fmt(value)} bits")
    else:
        eps = args.eps if args.eps is not None else 0.1
        res = neyman_pearson_simple(rho, sigma, eps)
        br = Bracket(neg_log2(res.beta), neg_log2(res.lower), "bits", {"beta": res.beta, "beta_dual": res.lower})
        out.update({"eps": eps, "bracket": br.to_dict(), "beta": res.beta})
        print(f"D_H^{eps:g} in [{_fmt(br.lower)}, {_fmt(br.upper)}] bits (beta = {res.beta:.12g})")
    if args.out:
        path = Path(args.out) / f"divergence-{args.name}.json"
        write_atomic(path, dumps(out))
        write_meta(path, "divergence", sys.argv[1:])
    return EXIT_OK


def _fmt(x: float) -> str:
    return str(encode_float(x)) if not math.isfinite(x) else f"{x:.12g}"


# ---------------------------------------------------------------- scan

class ScenarioConfig:
    """Validated scan scenario (JSON, ``"schema": 1``)."""

    KEYS = {"schema", "scenario", "null", "alternative", "eps", "n", "solver", "seed", "output_dir", "description"}

    def __init__(self, data: dict, base_dir: Path | None = None):
        if not isinstance(data, dict):
            raise ConfigError("<root>: scenario must be a JSON object")
        unknown = set(data) - self.KEYS
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
        if data.get("schema") != 1:
            raise ConfigError(f"schema: unsupported version {data.get('schema')!r}")
        self.base_dir = base_dir or Path.cwd()
        self.name = str(data.get("scenario", "scan"))
        self.seed = int(data.get("seed", 0))
        self.output_dir = data.get("output_dir")
        self.solver = dict(data.get("solver", {}))
        eps = data.get("eps", [])
        self.eps = [float(e) for e in (eps if isinstance(eps, list) else [eps])]
        for i, e in enumerate(self.eps):
            if not 0.0 < e < 1.0:
                raise ConfigError(f"eps[{i}]: {e} is outside (0, 1)")
        n = data.get("n", {})
        if isinstance(n, int):
            n = {"min": 1, "max": n}
        try:
            self.n_min, self.n_max = int(n.get("min", 1)), int(n.get("max", 3))
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"n: {exc}") from exc
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError("n: need 1 <= min <= max")
        try:
            self.null = StateFamily.from_dict(data["null"], self._resolve)
        except KeyError as exc:
            raise ConfigError(f"null: missing {exc}") from exc
        except (QSteinError, ValueError, TypeError) as exc:
            raise ConfigError(f"null: {exc}") from exc
        alt = data.get("alternative")
        if not isinstance(alt, dict) or "base" not in alt:
            raise ConfigError("alternative: needs a base list")
        self.mode = alt.get("mode", "iid")
        if self.mode not in ("iid", "av"):
            raise ConfigError(f"alternative.mode: {self.mode!r} is not iid|av")
        try:
            self.alt_base = [self._resolve(b) for b in alt["base"]]
        except (QSteinError, ValueError, TypeError, OSError) as exc:
            raise ConfigError(f"alternative.base: {exc}") from exc

    def _resolve(self, ref):
        if isinstance(ref, dict) and "file" in ref:
            p = Path(ref["file"])
            p = p if p.is_absolute() else self.base_dir / p
            if not p.exists():
                raise ConfigError(f"{ref['file']}: referenced state file does not exist")
            return DensityOperator.from_operator(load_operator(p))
        return resolve_state(ref)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        p = Path(path)
        data = load_json(p)
        return cls(data, p.parent if p.exists() else SCENARIO_DIR)

    def level(self, n: int) -> StateFamily:
        return self.null.at(n)


def cmd_scan(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if args.eps:
        cfg.eps = parse_eps_list(args.eps)
    if args.nmax is not None:
        cfg.n_max = int(args.nmax)
        if cfg.n_max < cfg.n_min:
            raise ConfigError("--nmax: below the scenario's minimum n")
    gap_tol = float(args.tol) if args.tol is not None else float(cfg.solver.get("gap_tol", 1e-6))
    for n in range(cfg.n_min, cfg.n_max + 1):
        try:
            check_dim(cfg.level(n).dim, f"scenario {cfg.name}")
        except CapExceeded as exc:
            raise CapExceeded(f"n={n}: {exc}") from exc
    out_dir = Path(args.out or cfg.output_dir or ".")
    solver = {k: v for k, v in cfg.solver.items() if k != "gap_tol"}
    for eps in cfg.eps or [None]:
        scan = regularised_relent_scan(cfg.level, cfg.alt_base, cfg.mode, cfg.n_max, eps=eps, n_min=cfg.n_min,
                                       scenario=cfg.name, gap_tol=gap_tol, **solver)
        scan.metadata.update({"null": cfg.null.to_dict(), "seed": cfg.seed,
                              "alternative": {"mode": cfg.mode, "base": [b.to_dict() for b in cfg.alt_base]}})
        stem = cfg.name if eps is None else f"{cfg.name}-eps{eps:g}"
        csv_path = out_dir / f"{stem}.csv"
        write_atomic(csv_path, scan.to_csv())
        write_atomic(out_dir / f"{stem}.json", dumps(_encode(scan.to_dict())))
        write_meta(out_dir / stem, "scan", sys.argv[1:], {"scenario": cfg.name})
        print(f"{stem}: {len(scan.rows)} rows -> {csv_path}")
    return EXIT_OK


def _encode(obj):
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, float):
        return encode_float(obj)
    return obj


# ---------------------------------------------------------------- check

def cmd_check(args) -> int:
    config = load_json(args.config) if args.config else None
    if args.inject_violation:
        config = dict(config or {})
        config["inject_violation"] = True
    suite = run_all(config, seed=args.seed)
    sys.stdout.write(suite.table())
    print(f"{'PASS' if suite.passed else 'FAIL'}: {sum(r.passed for r in suite.reports)}/{len(suite.reports)} checks passed")
    if args.out:
        path = Path(args.out) / "check-report.json"
        write_atomic(path, suite.to_json())
        write_meta(path, "check", sys.argv[1:], {"seed": suite.seed})
    return suite.exit_code


# ---------------------------------------------------------------- family

def _family_from_args(args) -> StateFamily:
    if args.config:
        data = load_json(args.config)
        return StateFamily.from_dict(data.get("family", data))
    kind = args.family
    if kind == "stab":
        return StateFamily.stabiliser(args.qubits)
    if kind == "sep":
        return separable_inner((2, 2), args.samples_inner, args.seed)
    base = [named_state(s) for s in (args.base or "zero,one").split(",")]
    if kind == "iid":
        return StateFamily.iid(base)
    if kind == "av":
        return StateFamily.av(base)
    if kind == "explicit":
        return StateFamily.explicit(base)
    raise ConfigError(f"family: unsupported family {kind!r}")


def cmd_family(args) -> int:
    if args.action == "enumerate":
        if args.family != "stab":
            raise ConfigError("family enumerate: only 'stab' can be enumerated")
        states = stabiliser_states(args.qubits)
        payload = dumps([s.to_dict() for s in states])
        if args.out:
            path = Path(args.out) / f"stabiliser-{args.qubits}q.json"
            write_atomic(path, payload)
            write_meta(path, "family enumerate", sys.argv[1:])
            print(f"{len(states)} stabiliser states on {args.qubits} qubit(s) -> {path}")
        else:
            sys.stdout.write(payload)
        return EXIT_OK
    fam = _family_from_args(args)
    tau = named_state(args.tau) if args.tau else DensityOperator.maximally_mixed(fam.copy_dims)
    tol = float(args.tol) if args.tol is not None else 1e-8
    report = axiom_audit(fam, tau, max_n=args.max_n, samples=args.samples, seed=args.seed, tol=tol)
    for name, ax in report.detail["axioms"].items():
        note = f" ({ax['note']})" if ax.get("note") else ""
        print(f"{name:7s} {ax['verdict']}{note}")
    print(f"overall {report.verdict}")
    if args.out:
        path = Path(args.out) / f"audit-{fam.kind}.json"
        write_atomic(path, dumps(report.to_dict()))
        write_meta(path, "family audit", sys.argv[1:], {"seed": args.seed})
    return EXIT_FAIL if report.verdict == "fail" else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qstein", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qstein {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("divergence", help="relative entropies between two operator files")
    d.add_argument("name", choices=["umegaki", "dh", "pinched"])
    d.add_argument("rho", help="operator JSON file (or @name for a named state)")
    d.add_argument("sigma", help="operator JSON file (or @name for a named state)")
    d.add_argument("--eps", type=float, default=None, help="type-I threshold for dh (default 0.1)")
    d.add_argument("--out", help="directory for the JSON result")
    d.set_defaults(func=cmd_divergence)

    s = sub.add_parser("scan", help="finite-n exponent scan of a scenario")
    s.add_argument("config", nargs="?", help="scenario JSON (or a bundled scenario name)")
    s.add_argument("--config", dest="config_flag", help="scenario JSON (alternative to the positional)")
    s.add_argument("--out", help="output directory")
    s.add_argument("--eps", help="comma-separated eps list overriding the scenario")
    s.add_argument("--nmax", type=int, help="largest n")
    s.add_argument("--tol", type=float, help="hull stationarity gap tolerance")
    s.add_argument("--seed", type=int, default=None, help="unused by deterministic scans; recorded")
    s.set_defaults(func=cmd_scan)

    c = sub.add_parser("check", help="run the inequality check suite")
    c.add_argument("--config", help="harness config JSON")
    c.add_argument("--seed", type=int, default=None, help="suite seed (default: config seed or 0)")
    c.add_argument("--out", help="directory for check-report.json")
    c.add_argument("--inject-violation", action="store_true", help="add a fabricated failing check")
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("family", help="enumerate or audit hypothesis families")
    f.add_argument("action", choices=["enumerate", "audit"])
    f.add_argument("family", choices=["stab", "sep", "iid", "av", "explicit"])
    f.add_argument("--qubits", type=int, default=1, help="qubits per copy (stab)")
    f.add_argument("--base", help="comma-separated state names for iid/av/explicit")
    f.add_argument("--config", help="family descriptor JSON")
    f.add_argument("--tau", help="reference state name (default maximally mixed)")
    f.add_argument("--max-n", type=int, default=2)
    f.add_argument("--samples", type=int, default=4)
    f.add_argument("--samples-inner", type=int, default=6, help="product samples for sep")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--tol", type=float, default=None, help="membership tolerance")
    f.add_argument("--out", help="output directory")
    f.set_defaults(func=cmd_family)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "scan":
        args.config = args.config or args.config_flag
        if not args.config:
            print("qstein scan: a scenario config is required", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except CapExceeded as exc:
        print(f"qstein: resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (QSteinError, ValueError, KeyError, OSError) as exc:
        print(f"qstein: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
