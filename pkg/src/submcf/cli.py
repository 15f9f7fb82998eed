"""Command-line scenario runner.

    submcf run CONFIG [CONFIG ...] [--jobs N]
    submcf list
    submcf audit SUBMERSION_JSON

Exit codes: 0 pass/completed, 2 failed verdict, 3 numerical error, 4 bad config.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import families
from .errors import ConfigError, GeometryError
from .flow import FlowPolicy, run_flow
from .immersions import DiscreteImmersion, PinchingCondition
from .submersions import SubmersionModel
from .verify import (
    commutation_test,
    fiber_audit_verdict,
    lift_norm_identity_test,
    mean_curvature_relation_test,
    variation_exponent_fit,
)

EXIT_OK, EXIT_FAIL, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4
SCENARIOS = ("flow", "commutation", "identity", "audit", "sweep")
IDENTITY_TESTS = ("lift_norm", "mean_curvature", "variation")


class _Config:
    """Parsed JSON plus the raw text, so errors can point at a line."""

    def __init__(self, text, source="<config>"):
        self.text = text
        self.source = source
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a JSON object", line=1)

    def line_of(self, key):
        needle = f'"{key}"'
        for i, ln in enumerate(self.text.splitlines(), start=1):
            if needle in ln:
                return i
        return 1

    def fail(self, key, msg):
        raise ConfigError(msg, line=self.line_of(key))

    def get(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"missing required key '{key}'", line=1)
            return default
        return self.data[key]


def _submersion(cfg, key="submersion"):
    desc = cfg.get(key, required=True)
    try:
        if isinstance(desc, str):
            return getattr(SubmersionModel, desc)()
        if "total" in desc:
            return SubmersionModel.from_dict(desc)
        kind = desc["kind"].lower()
        params = {k: v for k, v in desc.items() if k != "kind"}
        ctor = {"hopf": SubmersionModel.hopf, "heisenberg_proj": SubmersionModel.heisenberg_proj,
                "sasaki_proj": SubmersionModel.sasaki_proj}[kind]
        return ctor(**params)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        cfg.fail(key, f"bad submersion descriptor: {exc}")


def _policy(cfg):
    d = cfg.get("policy", required=True)
    try:
        return FlowPolicy.from_dict(d)
    except (TypeError, ValueError) as exc:
        cfg.fail("policy", f"bad policy: {exc}")


def _initial(cfg, overrides=None):
    d = cfg.get("initial", required=True)
    if not isinstance(d, dict) or "family" not in d:
        cfg.fail("initial", "initial must be an object with a 'family' key")
    name = d["family"]
    if name not in families.CATALOG:
        cfg.fail("family", f"unknown family '{name}' (see 'submcf list')")
    params = dict(d.get("params", {}))
    params.update(overrides or {})
    try:
        return families.build(name, **params)
    except (TypeError, ValueError) as exc:
        cfg.fail("params", f"bad parameters for {name}: {exc}")


def _conditions(cfg):
    out = []
    for d in cfg.get("conditions", []):
        d = dict(d)
        name = d.pop("name", None)
        if not hasattr(PinchingCondition, str(name)):
            cfg.fail("conditions", f"unknown pinching condition '{name}'")
        try:
            out.append(getattr(PinchingCondition, name)(**d))
        except (TypeError, ValueError) as exc:
            cfg.fail("conditions", f"bad pinching condition: {exc}")
    return out


def _outdir(cfg):
    out = cfg.get("output", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _write_series(path, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([f"{v:.17g}" for v in row])


def _base_curve(cfg):
    init = _initial(cfg)
    if isinstance(init, tuple):
        return init[1]
    return init


# ---------------------------------------------------------------------------
# scenarios


def _scenario_flow(cfg):
    init = _initial(cfg)
    policy = _policy(cfg)
    sub = None
    imm = init
    if isinstance(init, tuple):
        sub, _, imm = init
    trace, report = run_flow(imm, policy, sub=sub, conditions=_conditions(cfg))
    out = _outdir(cfg)
    trace.to_csv(os.path.join(out, "trace.csv"))
    report.to_json(os.path.join(out, "fate.json"))
    expected = cfg.get("expect_outcome")
    if expected is not None and expected != report.outcome.value:
        return EXIT_FAIL
    return EXIT_OK


def _scenario_commutation(cfg):
    sub = _submersion(cfg)
    base = _base_curve(cfg)
    if not isinstance(base, DiscreteImmersion) or base.space != sub.base:
        cfg.fail("initial", "commutation needs a base curve living in the submersion's base space")
    v = commutation_test(sub, base, _policy(cfg), refine=bool(cfg.get("refine", True)),
                         tol=float(cfg.get("tol", 0.05)))
    out = _outdir(cfg)
    v.to_json(os.path.join(out, "verdict.json"))
    _write_series(os.path.join(out, "distance.csv"), {"t": v.series["t"], "distance": v.series["distance"]})
    coarse = v.runs[0]
    coarse.total_trace.to_csv(os.path.join(out, "trace.csv"))
    return EXIT_OK if v.passed else EXIT_FAIL


def _scenario_identity(cfg):
    test = cfg.get("test", "lift_norm")
    if test not in IDENTITY_TESTS:
        cfg.fail("test", f"unknown identity test '{test}' (choose from {', '.join(IDENTITY_TESTS)})")
    base = _base_curve(cfg)
    if test == "variation":
        lam = cfg.get("lambda", [0.25, 0.5, 1.0, 2.0, 4.0])
        v = variation_exponent_fit(base, lam, c=base.space.params["c"])
    else:
        sub = _submersion(cfg)
        fn = lift_norm_identity_test if test == "lift_norm" else mean_curvature_relation_test
        v = fn(sub, base)
    v.to_json(os.path.join(_outdir(cfg), "verdict.json"))
    return EXIT_OK if v.passed else EXIT_FAIL


def _scenario_audit(cfg):
    descs = cfg.get("submersions", ["hopf", "heisenberg_proj", "sasaki_proj"])
    out = _outdir(cfg)
    ok = True
    for i, d in enumerate(descs):
        sub = _submersion(_Config(json.dumps({"submersion": d})), "submersion")
        v = fiber_audit_verdict(sub, n_points=int(cfg.get("n_points", 100)), seed=int(cfg.get("seed", 0)))
        v.to_json(os.path.join(out, f"audit_{i}_{sub.kind.value.lower()}.json"))
        ok &= v.passed
    return EXIT_OK if ok else EXIT_FAIL


def _scenario_sweep(cfg):
    sweep = cfg.get("sweep", required=True)
    if not isinstance(sweep, dict) or "param" not in sweep or "values" not in sweep:
        cfg.fail("sweep", "sweep needs 'param' and 'values'")
    policy = _policy(cfg)
    rows = {"value": [], "T_singular": [], "final_t": [], "final_max_A2": []}
    outcomes = []
    for val in sweep["values"]:
        init = _initial(cfg, {sweep["param"]: val})
        sub, imm = (init[0], init[2]) if isinstance(init, tuple) else (None, init)
        trace, report = run_flow(imm, policy, sub=sub)
        rows["value"].append(float(val))
        rows["T_singular"].append(report.T_singular if report.T_singular is not None else float("nan"))
        rows["final_t"].append(trace.times[-1])
        rows["final_max_A2"].append(trace.max_A2[-1])
        outcomes.append(report.outcome.value)
    out = _outdir(cfg)
    _write_series(os.path.join(out, "sweep.csv"), rows)
    with open(os.path.join(out, "outcomes.json"), "w") as fh:
        json.dump({"param": sweep["param"], "values": sweep["values"], "outcomes": outcomes}, fh, indent=2)
    return EXIT_OK


_DISPATCH = {
    "flow": _scenario_flow,
    "commutation": _scenario_commutation,
    "identity": _scenario_identity,
    "audit": _scenario_audit,
    "sweep": _scenario_sweep,
}


def run_scenario(config_path) -> int:
    """Run one JSON config; returns the process exit code."""
    try:
        with open(config_path) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"{config_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _Config(text, config_path)
        scen = cfg.get("scenario", required=True)
        if scen not in SCENARIOS:
            cfg.fail("scenario", f"unknown scenario '{scen}' (choose from {', '.join(SCENARIOS)})")
        return _DISPATCH[scen](cfg)
    except ConfigError as exc:
        print(f"{config_path}:{exc.line}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"{config_path}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def list_scenarios() -> str:
    lines = []
    for name, (_, schema, scenario) in families.CATALOG.items():
        lines.append(f"{name}")
        lines.append(f"  params:   {json.dumps(schema)}")
        lines.append(f"  scenario: {scenario}")
    return "\n".join(lines)


def catalog_json() -> str:
    return json.dumps({k: {"params": v[1], "scenario": v[2]} for k, v in families.CATALOG.items()}, indent=2)


def _audit_cmd(arg) -> int:
    try:
        if os.path.exists(arg):
            with open(arg) as fh:
                text = fh.read()
        else:
            text = arg
        cfg = _Config(json.dumps({"submersion": json.loads(text)}))
        sub = _submersion(cfg)
    except json.JSONDecodeError as exc:
        print(f"{arg}:{exc.lineno}: invalid JSON: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"{arg}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    v = fiber_audit_verdict(sub)
    print(json.dumps(v.to_dict(), indent=2))
    return EXIT_OK if v.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="submcf", description="Mean curvature flow through Riemannian submersions")
    sp = parser.add_subparsers(dest="cmd", required=True)
    p_run = sp.add_parser("run", help="run scenario configs")
    p_run.add_argument("configs", nargs="+")
    p_run.add_argument("--jobs", type=int, default=1)
    p_list = sp.add_parser("list", help="list initial-immersion families")
    p_list.add_argument("--json", action="store_true")
    p_audit = sp.add_parser("audit", help="minimal-fiber audit of a submersion descriptor")
    p_audit.add_argument("submersion")
    args = parser.parse_args(argv)

    if args.cmd == "list":
        print(catalog_json() if args.json else list_scenarios())
        return EXIT_OK
    if args.cmd == "audit":
        return _audit_cmd(args.submersion)
    if args.jobs > 1 and len(args.configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            codes = list(ex.map(run_scenario, args.configs))
    else:
        codes = [run_scenario(c) for c in args.configs]
    return max(codes)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
