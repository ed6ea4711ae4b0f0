"""Command line entry point.

    frontstab <subcommand> [--config PATH] [--out DIR] [--stages a,b] [--seed N]

Subcommands: profile, spectrum, resolvent, green, nonlinear, all, report.
Exit codes: 0 = all requested verifications pass, 1 = some verification
failed, 2 = usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config, serialize_config
from .pipeline import STAGES, StageFailure, load_manifest, run_pipeline

_SUBCOMMAND_STAGES = {
    "profile": ["profile"],
    "spectrum": ["spectral"],
    "resolvent": ["resolvent"],
    "green": ["green"],
    "nonlinear": ["nonlinear"],
    "all": list(STAGES),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="frontstab",
        description="Green-function and stability verifications for "
                    "reaction-diffusion fronts")
    parser.add_argument("command", choices=list(_SUBCOMMAND_STAGES) + ["report"])
    parser.add_argument("--config", type=Path, default=None,
                        help="INI config file (defaults used when omitted)")
    parser.add_argument("--out", type=Path, default=Path("frontstab_out"),
                        help="run directory for artifacts")
    parser.add_argument("--stages", default=None,
                        help="comma list overriding the subcommand's stages")
    parser.add_argument("--seed", type=int, default=None,
                        help="override [run] seed")
    return parser


def emit_report(manifest, out_dir):
    """Write report.md (pass/fail matrix, fitted constants, decay rates)
    and plotting scripts that consume the stage CSVs."""
    import json

    out_dir = Path(out_dir)
    lines = ["# frontstab run report", "",
             f"config hash: `{manifest['config_hash']}`",
             f"manifest hash: `{manifest['manifest_hash']}`", "",
             "## Verification matrix", "",
             "| check | status |", "|---|---|"]
    for name, ok in sorted(manifest["checks"].items()):
        lines.append(f"| {name} | {'PASS' if ok else 'FAIL'} |")
    missing = [s for s in STAGES if s not in manifest["stages"]]
    for s in missing:
        lines.append(f"| stage {s} | not run |")

    bounds_path = out_dir / "green" / "bound_fits.json"
    if bounds_path.exists():
        data = json.loads(bounds_path.read_text())
        lines += ["", "## Fitted bound constants", "",
                  "| template_id | eta0 | constants | sup_ratio | passed |",
                  "|---|---|---|---|---|"]
        for tid, fit in data["fits"].items():
            consts = ", ".join(f"{k}={v:.4g}" for k, v in fit["constants"].items())
            lines.append(f"| {fit['template_id']} | {fit['eta0']:.4g} | {consts} "
                         f"| {fit['sup_ratio']:.3f} | {fit['passed']} |")
        lines += ["", f"e-kernel constants: "
                  + ", ".join(f"{k}={v:.4g}" for k, v in data["e_bounds"].items())]
    reports_path = out_dir / "nonlinear" / "reports.json"
    if reports_path.exists():
        rep = json.loads(reports_path.read_text())
        orb = rep.get("orbital", {})
        lines += ["", "## Decay rates", "",
                  "| quantity | fitted rate | eta0 |", "|---|---|---|"]
        for p, rate in orb.get("rates", {}).items():
            lines.append(f"| L^{p} norm | {rate:.4f} | {orb.get('eta0', 0):.4f} |")
        if "alpha_tail_rate" in orb:
            lines.append(f"| alpha tail | {orb['alpha_tail_rate']:.4f} "
                         f"| {orb.get('eta0', 0):.4f} |")
    (out_dir / "report.md").write_text("\n".join(lines) + "\n")

    (out_dir / "plot_green.py").write_text(_PLOT_GREEN)
    (out_dir / "plot_nonlinear.py").write_text(_PLOT_NONLINEAR)
    return out_dir / "report.md"


_PLOT_GREEN = '''"""Heatmap of log|G_tilde| from green/green_field.csv (run separately)."""
import numpy as np
import matplotlib.pyplot as plt

data = np.genfromtxt("green/green_field.csv", delimiter=",", names=True)
y0 = np.unique(data["y"])[len(np.unique(data["y"])) // 2]
sel = data["y"] == y0
t, x, g = data["t"][sel], data["x"][sel], np.abs(data["G_tilde"][sel])
fig, ax = plt.subplots()
sc = ax.tricontourf(x, t, np.log10(g + 1e-300), levels=30)
fig.colorbar(sc, label="log10 |G~(x,t;y0)|")
ax.set_xlabel("x"); ax.set_ylabel("t"); ax.set_title(f"y0 = {y0:g}")
fig.savefig("green_heatmap.png", dpi=150)
'''

_PLOT_NONLINEAR = '''"""Phase and norm-decay curves from nonlinear/phase_series.csv."""
import numpy as np
import matplotlib.pyplot as plt

data = np.genfromtxt("nonlinear/phase_series.csv", delimiter=",", names=True)
fig, axes = plt.subplots(1, 2, figsize=(10, 4))
axes[0].plot(data["t"], data["alpha"], label="alpha(t)")
axes[0].plot(data["t"], data["alpha_fit"], "--", label="alpha_fit(t)")
axes[0].set_xlabel("t"); axes[0].legend()
axes[1].semilogy(data["t"], np.abs(data["alpha_dot"]) + 1e-300)
axes[1].set_xlabel("t"); axes[1].set_title("|alpha_dot(t)|")
fig.tight_layout(); fig.savefig("nonlinear_phases.png", dpi=150)
'''


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed

    if args.command == "report":
        try:
            manifest = load_manifest(args.out)
        except OSError as exc:
            print(f"error: no manifest in {args.out}: {exc}", file=sys.stderr)
            return 2
        path = emit_report(manifest, args.out)
        print(f"report written to {path}")
        return 0 if all(manifest["checks"].values()) else 1

    stages = (args.stages.split(",") if args.stages
              else _SUBCOMMAND_STAGES[args.command])
    try:
        manifest = run_pipeline(cfg, args.out, stages=stages)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    emit_report(manifest, args.out)
    ok = all(manifest["checks"].values())
    for name, passed in sorted(manifest["checks"].items()):
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    print(f"manifest hash: {manifest['manifest_hash']}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
