"""Command-line front end: ``spiral-euler <subcommand> [options]``.

Subcommands
    solve         solve the configured profile; writes solution.json and report.json
    field         sample fields on a (beta, phi) lattice, or with --time on a
                  polar (y, t) lattice; writes field.csv
    streamlines   export the curves phi = phi0 for each --phi0 angle
    initial-data  export B(theta) and the initial velocity on a polar lattice
    regularize    write mollified copies of a measure profile for each --sweep N
    selfcheck     run the acceptance checks and print a pass/fail table

Exit status: 0 on success, 1 when a self-check fails, 2 for configuration or
domain errors, 3 for non-convergence, 4 for degenerate states, 5 for I/O.
The thread count of the numerical libraries is capped by the environment
variable ``SPIRAL_EULER_THREADS``; numpy is imported only after it is applied.
"""

import argparse
import json
import os
import sys
import time

from .errors import ConfigError, SolutionIOError, SpiralEulerError

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS")


def apply_thread_limit(environ=os.environ):
    """Copy ``SPIRAL_EULER_THREADS`` into the BLAS/OpenMP thread variables."""
    value = environ.get("SPIRAL_EULER_THREADS")
    if not value:
        return None
    if not value.isdigit() or int(value) < 1:
        raise ConfigError(f"SPIRAL_EULER_THREADS must be a positive integer, got {value!r}")
    for name in THREAD_VARIABLES:
        environ[name] = value
    return int(value)


def _float_list(text, option, count=None):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{option} expects comma-separated numbers, got {text!r}") from exc
    if count is not None and len(values) != count:
        raise ConfigError(f"{option} expects {count} comma-separated values, got {text!r}")
    return values


def _lattice(text, default):
    """``(lo, hi, n_radial, n_angular)`` from ``--lattice``."""
    lo, hi, n_r, n_t = _float_list(text, "--lattice", 4) if text else default
    if not (0 < lo < hi) or n_r != int(n_r) or n_t != int(n_t) or n_r < 1 or n_t < 1:
        raise ConfigError(f"--lattice needs 0 < r0 < r1 and positive integer counts, got {text!r}")
    return lo, hi, int(n_r), int(n_t)


def _radii(lo, hi, count):
    import numpy as np

    return np.geomspace(lo, hi, count) if count > 1 else np.array([lo])


def _angles(count):
    import numpy as np

    return np.arange(count) * (2 * np.pi / count)


def _load_config(args):
    from .measure_io import apply_overrides, parse_config

    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    try:
        with open(args.config, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise SolutionIOError(f"cannot read config {args.config}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
    document = apply_overrides(document, args.set or [])
    params, profile = parse_config(document)
    return document, params, profile


def _output_dir(args):
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise SolutionIOError(f"cannot create output directory {args.out}: {exc}") from exc
    return args.out


def _solution(args):
    """A stored solution (``--solution``) or a fresh solve of the config."""
    if getattr(args, "solution", None):
        from .measure_io import read_solution

        return read_solution(args.solution)
    from .nonlinear import solve_nonlinear

    _, params, profile = _load_config(args)
    return solve_nonlinear(profile, params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    from .measure_io import write_json, write_solution
    from .nonlinear import solve_nonlinear

    _, params, profile = _load_config(args)
    out = _output_dir(args)
    start = time.time()
    try:
        sol, report = solve_nonlinear(profile, params)
    except SpiralEulerError as exc:
        report = getattr(exc, "report", None)
        if report is not None:
            write_json(os.path.join(out, "report.json"), _report_document(report, start))
        raise
    write_solution(sol, report, os.path.join(out, "solution.json"))
    write_json(os.path.join(out, "report.json"), _report_document(report, start))
    print(f"converged in {report.iterations} iterations, residual {report.final_residual:.3e}, "
          f"dominant condition {'holds' if report.dominant_ok else 'fails'}")
    return 0


def _report_document(report, start):
    document = report.to_dict()
    document["metadata"] = {"created_unix": round(time.time(), 3),
                            "elapsed_seconds": round(time.time() - start, 3)}
    return document


def cmd_field(args):
    import numpy as np

    from .measure_io import FIELD_COLUMNS, write_csv
    from .physical import SolutionSampler, coord_forward, sample_stream, sample_vorticity
    from .physical import self_similar_fields, velocity_from_spiral

    sol, _ = _solution(args)
    sampler = SolutionSampler(sol)
    out = _output_dir(args)
    if args.time is None:
        lo, hi, n_b, n_p = _lattice(args.lattice, (0.1, 10.0, 64, 64))
        beta, phi = np.meshgrid(_radii(lo, hi, n_b), _angles(n_p), indexing="ij")
        beta, phi = beta.ravel(), phi.ravel()
        r, theta = coord_forward(beta, phi, sampler)
        v_r, v_theta = velocity_from_spiral(beta, phi, sampler)
        columns = np.stack([beta, phi, r, theta, sample_stream(beta, phi, sampler),
                            sample_vorticity(beta, phi, sampler), v_r, v_theta], axis=1)
        write_csv(os.path.join(out, "field.csv"), FIELD_COLUMNS, columns)
        print(f"wrote {len(columns)} (beta, phi) samples")
        return 0
    lo, hi, n_r, n_t = _lattice(args.lattice, (0.5, 2.0, 32, 64))
    radius, angle = np.meshgrid(_radii(lo, hi, n_r), _angles(n_t), indexing="ij")
    y = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1).reshape(-1, 2)
    fields = self_similar_fields(y, args.time, sampler)
    columns = np.column_stack([np.full(len(y), args.time), y, fields["r"], fields["theta"],
                               fields["stream"], fields["vorticity"], fields["velocity"]])
    write_csv(os.path.join(out, "field.csv"),
              ("t", "y1", "y2", "r", "theta", "stream", "vorticity", "v1", "v2"), columns)
    print(f"wrote {len(y)} (y, t) samples at t = {args.time:g}")
    return 0


def cmd_streamlines(args):
    import numpy as np

    from .measure_io import write_csv
    from .physical import trace_streamline

    sol, _ = _solution(args)
    out = _output_dir(args)
    angles = _float_list(args.phi0, "--phi0") if args.phi0 else [0.0]
    for index, phi0 in enumerate(angles):
        line = trace_streamline(phi0, sol, count=args.points)
        rows = np.column_stack([line.beta, line.r, line.theta,
                                line.r * np.cos(line.theta), line.r * np.sin(line.theta)])
        write_csv(os.path.join(out, f"streamline_{index}.csv"),
                  ("beta", "r", "theta", "x1", "x2"), rows)
    print(f"wrote {len(angles)} streamline file(s)")
    return 0


def cmd_initial_data(args):
    import numpy as np

    from .measure_io import write_csv
    from .physical import initial_data

    _, params, profile = _load_config(args)
    out = _output_dir(args)
    data = initial_data(profile, params)
    theta = _angles(args.points)
    write_csv(os.path.join(out, "initial_profile.csv"),
              ("theta", "B", "dB", "omega_angular"),
              np.column_stack([theta, data.b_profile(theta), data.b_profile(theta, order=1),
                               data.angular_vorticity(theta)]))
    lo, hi, n_r, n_t = _lattice(args.lattice, (0.5, 2.0, 16, 64))
    radius, angle = np.meshgrid(_radii(lo, hi, n_r), _angles(n_t), indexing="ij")
    y = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1).reshape(-1, 2)
    velocity = data.velocity0(y)
    write_csv(os.path.join(out, "initial_velocity.csv"),
              ("y1", "y2", "psi0", "omega0", "v1", "v2"),
              np.column_stack([y, data.psi0(y), data.omega0(y), velocity]))
    print(f"spectral defect {data.spectral_defect():.2e}")
    return 0


def cmd_regularize(args):
    from .measure_io import MEASURE, config_document, mollify, write_json

    _, params, profile = _load_config(args)
    if profile.kind != MEASURE:
        raise ConfigError("regularize needs a measure profile", "profile.kind")
    if not args.sweep:
        raise ConfigError("regularize needs --sweep N1,N2,...")
    counts = _float_list(args.sweep, "--sweep")
    if any(n != int(n) or n < 1 for n in counts):
        raise ConfigError(f"--sweep expects positive integers, got {args.sweep!r}")
    out = _output_dir(args)
    for count in (int(n) for n in counts):
        smooth = mollify(profile, count)
        write_json(os.path.join(out, f"mollified_N{count}.json"), config_document(params, smooth))
        print(f"N={count}: mean {smooth.mean():.17g}, "
              f"perturbation {smooth.perturbation_l1():.6g} (measure {profile.perturbation_l1():.6g})")
    return 0


def cmd_selfcheck(args):
    from .selfcheck import CHECKS, run_check

    numbers = sorted(CHECKS)
    if args.checks:
        numbers = [int(v) for v in _float_list(args.checks, "--checks")]
        unknown = [n for n in numbers if n not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown check numbers {unknown}")
    failures = 0
    for number in numbers:
        result = run_check(number)
        failures += not result.passed
        print(result.line(), flush=True)
    print(f"{len(numbers) - failures}/{len(numbers)} checks passed")
    return 1 if failures else 0


COMMANDS = {
    "solve": cmd_solve,
    "field": cmd_field,
    "streamlines": cmd_streamlines,
    "initial-data": cmd_initial_data,
    "regularize": cmd_regularize,
    "selfcheck": cmd_selfcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spiral-euler",
        description="Self-similar algebraic spiral solutions of the 2-D Euler equations.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=False, help="JSON config file")
        cmd.add_argument("--out", default=".", help="output directory (default: .)")
        cmd.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="dotted config override, e.g. grid.count=4096 (repeatable)")
        return cmd

    add("solve", "solve the configured profile")
    field = add("field", "sample fields on a lattice")
    field.add_argument("--solution", help="stored solution file (skips the solve)")
    field.add_argument("--lattice", help="r0,r1,nr,nt (beta range and counts without --time)")
    field.add_argument("--time", type=float, help="sample the space-time flow at this time")
    lines = add("streamlines", "export the curves phi = phi0")
    lines.add_argument("--solution", help="stored solution file (skips the solve)")
    lines.add_argument("--phi0", help="comma-separated angles (default 0)")
    lines.add_argument("--points", type=int, default=512, help="points per curve")
    init = add("initial-data", "export the initial data")
    init.add_argument("--lattice", help="r0,r1,nr,nt polar lattice for the velocity")
    init.add_argument("--points", type=int, default=256, help="angles for B(theta)")
    reg = add("regularize", "mollify a measure profile")
    reg.add_argument("--sweep", help="comma-separated mollifier counts N")
    check = add("selfcheck", "run the acceptance checks")
    check.add_argument("--checks", help="comma-separated check numbers (default: all)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_thread_limit()
        return COMMANDS[args.command](args)
    except SpiralEulerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
