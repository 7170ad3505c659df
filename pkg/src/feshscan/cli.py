"""``feshscan`` command-line entry point.

Exit codes: 0 success, 1 engine or domain error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config

EXIT_OK, EXIT_ENGINE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, metavar="PATH", help="model config (TOML)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes for sweeps (results do not depend on it)")
    p.add_argument("--format", action="append", choices=("csv", "json", "svg"),
                   help="output formats (repeatable); default: all that apply")
    p.add_argument("--seed", type=int, help="reserved; every algorithm is deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feshscan", description=(
        "Effective scattering length, critical values and residues of a two-channel "
        "Feshbach model."))
    parser.add_argument("--version", action="version", version=f"feshscan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    helps = {
        "validate": "check the model hypotheses numerically",
        "bound-states": "bound states of the closed channel H_U",
        "one-body": "scattering length and phase shifts of the open channel H_V",
        "separable": "closed-form resonances of a rank-one coupling",
        "resonances": "critical values, residues and widths from the general solver",
        "scan": "sweep a_eff over lambda and write curve.csv / reports.json / curve.svg",
        "fit": "fit a(B) = a_inf + Delta / (B - B_res) around one pole",
        "plot": "render curve.svg from an existing curve.csv",
    }
    cmds = {}
    for name, text in helps.items():
        cmds[name] = sub.add_parser(name, help=text, description=text)
        _common(cmds[name], config_required=name != "plot")
    cmds["one-body"].add_argument("--k", type=float, action="append", metavar="K",
                                  help="momentum for a phase-shift sample (repeatable)")
    cmds["fit"].add_argument("--pole", type=int, default=0, help="index j of the pole to fit")
    cmds["fit"].add_argument("--csv", metavar="PATH", help="fit an existing curve.csv instead of sweeping")
    cmds["plot"].add_argument("--csv", metavar="PATH", required=True)
    cmds["plot"].add_argument("--field", action="store_true", help="use B on the x axis")
    return parser


def _config(args):
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    lo, hi = cfg.lambda_range
    lo = lo if args.lambda_min is None else args.lambda_min
    hi = hi if args.lambda_max is None else args.lambda_max
    points = cfg.points if args.points is None else args.points
    return dataclasses.replace(cfg, lambda_range=(lo, hi), points=points)


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _formats(args, default):
    return tuple(args.format) if args.format else default


def _stamp(cfg):
    from .scan import solver_parameters

    params = " ".join(f"{k}={v!r}" for k, v in sorted(solver_parameters(cfg).items()))
    return [f"# config_sha256: {cfg.digest()}", f"# solver: {params}"]


def cmd_validate(args):
    from .assumptions import validate_assumptions

    cfg = _config(args)
    rep = validate_assumptions(cfg)
    print("\n".join(_stamp(cfg) + rep.lines()))
    return EXIT_OK if rep.ok else EXIT_ENGINE


def cmd_bound_states(args):
    from .model import Model

    cfg = _config(args)
    m = Model(cfg)
    print("\n".join(_stamp(cfg)))
    print("j,E_j,nodes,E_fd")
    for j, s in enumerate(m.bound_states_U):
        print(f"{j},{s.energy!r},{s.node_count},{s.fd_energy!r}")
    return EXIT_OK


def cmd_one_body(args):
    from . import radial
    from .model import Model

    cfg = _config(args)
    m = Model(cfg)
    ks = args.k or [0.01, 0.1, 0.25, 0.5, 1.0]
    print("\n".join(_stamp(cfg)))
    print(f"a_V = {m.a_V!r}  (physical convention; amplitude limit A_V(0) = {-m.a_V!r})")
    print("k,delta,Re_A,Im_A")
    deltas = radial.phase_shifts(cfg.potential_V, sorted(ks), m.grid)
    for k, d in zip(sorted(ks), deltas):
        A = radial.scattering_solution(cfg.potential_V, k, m.grid).amplitude
        print(f"{k!r},{float(d)!r},{A.real!r},{A.imag!r}")
    return EXIT_OK


def _print_reports(reports):
    print("j,lambda_j,c_j,c_j_fit,p_j,sigma_min,E_res,Gamma")
    for r in reports:
        bw = r.breit_wigner
        e, g = (bw.E_res, bw.Gamma) if bw else (float("nan"), float("nan"))
        print(f"{r.index},{r.lambda_j!r},{r.c_j!r},{r.c_j_fit!r},{r.p_j!r},{r.sigma_min!r},{e!r},{g!r}")


def cmd_separable(args):
    from . import separable as sep
    from .model import Model

    cfg = _config(args)
    if cfg.coupling.kind != "separable":
        raise UsageError("the separable command needs [coupling] kind = \"separable\"")
    m = Model(cfg)
    ctx = sep.separable_context(m)
    roots = sep.separable_resonances(ctx)
    print("\n".join(_stamp(cfg)))
    print(f"beta_V = {ctx.beta_V!r}")
    print(f"<w, phi_V0> = {ctx.p0!r}")
    print("j,lambda_j,c_j,F(lambda_j)")
    rows = []
    for j, lam in enumerate(roots):
        c = sep.residue_separable(ctx, lam)
        F = sep.F_lambda(ctx, lam)[0]
        rows.append({"lambda_j": lam, "c_j": c, "c_j_amplitude": -c, "F": F, "index": j})
        print(f"{j},{lam!r},{c!r},{F!r}")
    if args.out:
        import json

        from .scan import SCHEMA, SIGN_CONVENTION, solver_parameters

        path = os.path.join(_out_dir(args), "separable.json")
        with open(path, "w") as fh:
            json.dump({"schema": SCHEMA, "config_sha256": cfg.digest(), "beta_V": ctx.beta_V,
                       "solver": solver_parameters(cfg), "sign_convention": SIGN_CONVENTION,
                       "roots": rows}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_resonances(args):
    from threadpoolctl import threadpool_limits

    from . import coupled
    from .model import Model
    from .scan import solver_parameters, write_json

    cfg = _config(args)
    with threadpool_limits(limits=1):
        reports = coupled.find_resonances_general(Model(cfg))
    print("\n".join(_stamp(cfg)))
    _print_reports(reports)
    if args.out:
        write_json(reports, os.path.join(_out_dir(args), "reports.json"), cfg.digest(),
                   solver_parameters(cfg))
    return EXIT_OK


def cmd_scan(args):
    from . import scan

    cfg = _config(args)
    curve = scan.sweep(cfg, workers=max(1, args.threads))
    written = scan.export(curve, _out_dir(args), _formats(args, ("csv", "json", "svg")))
    _print_reports(curve.reports)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_fit(args):
    from . import scan

    cfg = _config(args)
    if cfg.magnetic_map is None:
        raise UsageError("fit needs a [magnetic_map] section in the config")
    if args.csv:
        curve = scan.read_csv(args.csv)
        if curve.B is None:
            curve.B = cfg.magnetic_map.to_field(curve.lam)
    else:
        curve = scan.sweep(cfg, workers=max(1, args.threads))
    if not 0 <= args.pole < len(curve.poles):
        raise UsageError(f"--pole {args.pole} out of range: the curve has {len(curve.poles)} poles")
    fit = scan.fit_feshbach(curve, cfg, pole=args.pole)
    print("\n".join(_stamp(cfg)))
    print(f"a_inf = {fit.a_inf!r}\nDelta = {fit.Delta!r}\nB_res = {fit.B_res!r}\nrms = {fit.rms!r}")
    if args.out:
        out = _out_dir(args)
        scan.write_json(curve.reports, os.path.join(out, "fit.json"), cfg.digest(), curve.solver, fit)
    return EXIT_OK


def cmd_plot(args):
    from . import scan

    curve = scan.read_csv(args.csv)
    path = scan.write_svg(curve, os.path.join(_out_dir(args), "curve.svg"), use_field=args.field)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "bound-states": cmd_bound_states,
    "one-body": cmd_one_body,
    "separable": cmd_separable,
    "resonances": cmd_resonances,
    "scan": cmd_scan,
    "fit": cmd_fit,
    "plot": cmd_plot,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"feshscan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, OSError, RuntimeError) as exc:
        print(f"feshscan: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_ENGINE


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
