"""Command-line surface: reproducible experiments from a TOML config.

Subcommands:
    coeffs    characteristic coefficients, means, coefficient table, lambda_0
    eigen     patch vs reference dispersion CSV over macroscale phases
    simulate  patch trajectory vs full-domain oracle + divergence summary
    sweep     (K, n, b) coefficient-error sweep with figure tables
    report    render figure tables to PNG alongside the CSVs
    selftest  oracle-equivalence and invariant suite, pass/fail matrix

Every CSV carries a provenance comment (config hash + package version) and
uses full round-trip float formatting, so identical config and seed give
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from . import analysis, theory
from .config import ConfigError, RunConfig, load_config
from .lattice import (
    DiffusivityProfile,
    MicroField,
    char_poly_bruteforce,
    full_domain_simulate,
    micro_rhs,
)
from .patch import (
    CouplingSpec,
    PatchGeometry,
    conversion_series,
    run_patch_simulation,
    slow_eigenvalue,
)
from .theory import SymbolValue, g0_small_eta, lambda0_quadratic, quadratic_table


def _fmt(x: float) -> str:
    return repr(float(x))


def _provenance(config: RunConfig) -> str:
    return f"# provenance: config={config.config_hash()} gaptooth={__version__}"


def _outdir(config: RunConfig) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def _write_csv(path: str, header: str, rows, config: RunConfig):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_provenance(config) + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# coeffs
# ---------------------------------------------------------------------------


def cmd_coeffs(config: RunConfig, out) -> int:
    profile = config.require_profile()
    K = profile.period
    phases = [float(p) for p in config.experiment.get("phases", [math.pi / 8])]
    print(f"period K = {K}", file=out)
    print(f"kappa_g  = {_fmt(profile.geometric_mean)}", file=out)
    print(f"kappa_h  = {_fmt(profile.harmonic_mean)}", file=out)
    table = quadratic_table(K)
    print(f"d = {_fmt(table.d)}  d0 = {_fmt(table.d0)}  f0 = {_fmt(table.f0)}", file=out)
    for k in range(1, K // 2 + 1):
        print(
            f"k = {k}: d_k = {_fmt(table.dk[k - 1])}  f_k = {_fmt(table.fk[k - 1])}",
            file=out,
        )
    rows = []
    for phi in phases:
        symbol = SymbolValue.from_phase(phi)
        cq = [theory.char_coeff(q, profile, symbol) for q in range(K + 1)]
        print(f"phase {phi}:", file=out)
        for q, c in enumerate(cq):
            print(f"  c_{q} = {_fmt(c)}", file=out)
        try:
            lam0 = lambda0_quadratic(profile, symbol)
            lam_text = _fmt(lam0)
        except ValueError as exc:
            lam_text = f"ERROR:{exc}"
        print(f"  lambda_0 = {lam_text}", file=out)
        rows.append([_fmt(phi), lam_text.replace(",", ";")] + [_fmt(c) for c in cq])
    if config.experiment.get("csv", False):
        path = os.path.join(_outdir(config), "coeffs.csv")
        header = "phase,lambda0," + ",".join(f"c{q}" for q in range(K + 1))
        _write_csv(path, header, rows, config)
        print(f"wrote {path}", file=out)
    return 0


# ---------------------------------------------------------------------------
# eigen
# ---------------------------------------------------------------------------


def cmd_eigen(config: RunConfig, out) -> int:
    profile = config.require_profile()
    geom = config.require_geometry()
    thetas = config.experiment.get("thetas")
    if thetas is None:
        base = float(config.experiment.get("theta0", math.pi / 8))
        halvings = int(config.experiment.get("halvings", 3))
        thetas = [base / 2**m for m in range(halvings + 1)]
    use_ensemble = bool(config.experiment.get("ensemble", True))
    rows = []
    for theta in [float(t) for t in thetas]:
        symbol = SymbolValue.from_phase(theta / geom.macro_ratio)
        if theta == 0.0:
            rows.append([_fmt(0.0), _fmt(0.0), _fmt(0.0), _fmt(0.0)])
            continue
        cells = [_fmt(theta)]
        try:
            mode = slow_eigenvalue(
                profile, geom, config.coupling, theta, use_ensemble=use_ensemble
            )
            lam_patch = mode.lam.real
        except Exception as exc:  # propagate as a cell marker, keep the scan
            lam_patch = None
            cells.append(f"ERROR:{type(exc).__name__}")
        else:
            cells.append(_fmt(lam_patch))
        try:
            lam_ref = lambda0_quadratic(profile, symbol)
        except ValueError as exc:
            lam_ref = None
            cells.append(f"ERROR:{type(exc).__name__}")
        else:
            cells.append(_fmt(lam_ref))
        if lam_patch is None or lam_ref is None:
            cells.append("ERROR")
        else:
            cells.append(_fmt(lam_patch - lam_ref))
        rows.append(cells)
    path = os.path.join(_outdir(config), "eigen.csv")
    _write_csv(path, "theta,lambda_patch,lambda_reference,residual", rows, config)
    print(f"wrote {path}", file=out)
    for row in rows:
        print("  " + " ".join(row), file=out)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def simulate_comparison(config: RunConfig):
    """Run patch scheme and full-domain oracle, return (times, U_patch,
    U_oracle, divergences)."""
    profile = config.require_profile()
    geom = config.require_geometry()
    exp = config.experiment
    J = int(exp.get("patches", 8))
    duration = float(exp.get("duration", geom.H**2 / 4.0))
    macro_step = float(exp.get("macro_step", 0.5))
    spec = config.coupling
    L = J * geom.macro_ratio
    ic_file = exp.get("initial_field")
    if ic_file:
        u0 = np.loadtxt(ic_file)
        if len(u0) != L:
            raise ConfigError(
                f"experiment.initial_field has {len(u0)} sites, domain needs {L}"
            )
        U0 = np.array(
            [
                np.mean([u0[(j * geom.macro_ratio + i) % L] for i in range(-geom.b, geom.b + 1)])
                for j in range(J)
            ]
        )
    elif exp.get("ic", "sinusoid") == "constant":
        value = float(exp.get("ic_value", 1.0))
        u0 = np.full(L, value)
        U0 = np.full(J, value)
    else:
        periods = float(exp.get("wavelengths", 1))
        u0 = np.sin(2.0 * np.pi * periods * np.arange(L) / L)
        U0 = np.sin(2.0 * np.pi * periods * np.arange(J) / J)
    trajectory = run_patch_simulation(
        U0, profile, geom, spec, duration, macro_step
    )
    # full-domain oracle sampled at every macro step
    step = 0.2 * geom.h**2 / max(profile.values)
    times = [frame.time for frame in trajectory]
    field = MicroField(tuple(u0), geom.h, 0.0)
    oracle = [np.asarray(u0, dtype=float)]
    for t_prev, t_next in zip(times[:-1], times[1:]):
        field = full_domain_simulate(field, profile, t_next - t_prev, step)
        oracle.append(field.as_array())
    idx = np.arange(J)[:, None] * geom.macro_ratio + np.arange(-geom.b, geom.b + 1)[None, :]
    U_oracle = [u[(idx % L)].mean(axis=1) for u in oracle]
    U_patch = [frame.as_array() for frame in trajectory]
    divergences = [
        float(np.linalg.norm(p - o) / max(np.linalg.norm(o), 1e-300))
        for p, o in zip(U_patch, U_oracle)
    ]
    return times, U_patch, U_oracle, divergences


def cmd_simulate(config: RunConfig, out) -> int:
    times, U_patch, U_oracle, divergences = simulate_comparison(config)
    outdir = _outdir(config)
    J = len(U_patch[0])
    for name, series in (("patch", U_patch), ("oracle", U_oracle)):
        rows = [
            [_fmt(t), str(j), _fmt(U[j])]
            for t, U in zip(times, series)
            for j in range(J)
        ]
        path = os.path.join(outdir, f"trajectory_{name}.csv")
        _write_csv(path, "t,j,U_j", rows, config)
        print(f"wrote {path}", file=out)
    rows = [[_fmt(t), _fmt(d)] for t, d in zip(times, divergences)]
    path = os.path.join(outdir, "divergence.csv")
    _write_csv(path, "t,rel_l2_divergence", rows, config)
    print(f"wrote {path}", file=out)
    print(f"final relative L2 divergence: {_fmt(divergences[-1])}", file=out)
    return 0


# ---------------------------------------------------------------------------
# sweep / report
# ---------------------------------------------------------------------------


def cmd_sweep(config: RunConfig, out, workers=None) -> int:
    exp = config.experiment
    K_range = range(int(exp.get("K_min", 2)), int(exp.get("K_max", 12)) + 1)
    n_range = range(int(exp.get("n_min", 4)), int(exp.get("n_max", 12)) + 1)
    outdir = _outdir(config)
    sweep_path = os.path.join(outdir, "sweep.csv")
    records = analysis.sweep(
        K_range,
        n_range,
        spec=config.coupling,
        out_path=sweep_path,
        workers=workers,
        header_lines=[_provenance(config).lstrip("# ")],
    )
    print(f"wrote {sweep_path} ({len(records)} cells)", file=out)
    modes = exp.get("modes", ["fig3", "fig4"])
    for mode in modes:
        rows = analysis.figure_data(records, mode)
        csv_name = f"figure_{mode}.csv"
        path = os.path.join(outdir, csv_name)
        analysis.write_figure_csv(
            path, rows, header_lines=[_provenance(config).lstrip("# ")]
        )
        script_path = os.path.join(outdir, f"plot_{mode}.py")
        analysis.write_plot_script(
            script_path,
            csv_name,
            f"figure_{mode}.png",
            f"{mode}: buffer-size error landscape",
        )
        print(f"wrote {path}", file=out)
        print(f"wrote {script_path}", file=out)
    return 0


def cmd_report(config: RunConfig, out, workers=None) -> int:
    """Render the figure tables to PNG files next to the delimited output."""
    exp = config.experiment
    outdir = _outdir(config)
    sweep_path = os.path.join(outdir, "sweep.csv")
    if not os.path.exists(sweep_path):
        status = cmd_sweep(config, out, workers=workers)
        if status != 0:
            return status
    records = analysis.read_sweep_csv(sweep_path)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    modes = exp.get("modes", ["fig3", "fig4"])
    for mode in modes:
        rows = analysis.figure_data(records, mode)
        csv_name = f"figure_{mode}.csv"
        csv_path = os.path.join(outdir, csv_name)
        analysis.write_figure_csv(
            csv_path, rows, header_lines=[_provenance(config).lstrip("# ")]
        )
        analysis.write_plot_script(
            os.path.join(outdir, f"plot_{mode}.py"),
            csv_name,
            f"figure_{mode}.png",
            f"{mode}: buffer-size error landscape",
        )
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for n in sorted({row.n for row in rows}):
            pts = [
                (row.scaled_buffer, row.mean_abs_delta_d0)
                for row in rows
                if row.n == n and row.mean_abs_delta_d0 is not None
            ]
            if pts:
                ax.semilogy(*zip(*sorted(pts)), marker="o", ms=3, label=f"n = {n}")
        ax.set_xlabel("scaled buffer b/(n-1)")
        ax.set_ylabel("mean |delta_d0|")
        ax.set_title(f"{mode}: buffer-size error landscape")
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        png_path = os.path.join(outdir, f"figure_{mode}.png")
        fig.savefig(png_path, dpi=150)
        plt.close(fig)
        print(f"wrote {csv_path}", file=out)
        print(f"wrote {png_path}", file=out)
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------


def _selftest_checks(seed: int, mutate: str | None):
    rng = np.random.default_rng(seed)
    checks = []

    def check(name, passed, detail):
        checks.append((name, bool(passed), detail))

    old_sign = theory._C0_SIGN
    if mutate == "c0-sign":
        theory._C0_SIGN = -1.0
    try:
        worst = 0.0
        for K in (2, 3, 4, 5):
            for _ in range(5):
                profile = DiffusivityProfile(tuple(rng.uniform(0.5, 2.0, K)))
                phi = float(rng.uniform(0.05, math.pi / 2))
                symbol = SymbolValue.from_phase(phi)
                brute = char_poly_bruteforce(profile, phi)
                for q in range(K + 1):
                    closed = theory.char_coeff(q, profile, symbol)
                    worst = max(
                        worst,
                        abs(closed - brute[q]) / max(1.0, abs(brute[q])),
                    )
        check("characteristic-coefficient oracle", worst < 1e-9, f"max rel err {worst:.2e}")
    finally:
        theory._C0_SIGN = old_sign

    # K = 2 exact truncation against the Bloch matrix
    profile = DiffusivityProfile((1.0, 10.0))
    worst = 0.0
    for phi in np.linspace(0.1, math.pi - 0.05, 9):
        lam = lambda0_quadratic(profile, SymbolValue.from_phase(float(phi)))
        from .lattice import bloch_matrix

        eig = np.linalg.eigvalsh(bloch_matrix(profile, float(phi)))
        lam_exact = eig[np.argmin(np.abs(eig))]
        worst = max(worst, abs(lam - lam_exact))
    check("exact quadratic truncation (K=2)", worst < 1e-10, f"max err {worst:.2e}")

    # uniform-medium patch dispersion
    geom = PatchGeometry(n=4, b=2)
    mode = slow_eigenvalue(
        DiffusivityProfile((1.0, 1.0)), geom, CouplingSpec(), math.pi / 64
    )
    s2 = -4.0 * math.sin(math.pi / 64 / (2 * geom.macro_ratio)) ** 2
    err = abs(mode.lam.real / s2 - 1.0)
    check("uniform patch leading coefficient", err < 1e-7, f"err {err:.2e}")

    # conservation and linearity of the microscale operator
    profile = DiffusivityProfile(tuple(rng.uniform(0.5, 2.0, 4)))
    u = rng.normal(size=32)
    v = rng.normal(size=32)
    rhs_u = micro_rhs(MicroField(tuple(u)), profile)
    rhs_v = micro_rhs(MicroField(tuple(v)), profile)
    rhs_mix = micro_rhs(MicroField(tuple(2.5 * u - 1.25 * v)), profile)
    lin = np.max(np.abs(rhs_mix - (2.5 * rhs_u - 1.25 * rhs_v)))
    check("microscale linearity", lin < 1e-10, f"max dev {lin:.2e}")
    check(
        "microscale conservation",
        abs(rhs_u.sum()) < 1e-10 * np.abs(rhs_u).max(),
        f"sum {rhs_u.sum():.2e}",
    )

    # operator conversion identities
    report = conversion_series("macro_to_micro", 4, PatchGeometry(n=3, b=1))
    order = report.orders["difference_squared"]
    check(
        "operator conversion order",
        (not math.isnan(order)) and order >= 4.5,
        f"observed order {order:.2f}",
    )

    # moderate-variation ground truth vs quadratic root
    var_profile = DiffusivityProfile(tuple(1.0 + 0.05 * rng.uniform(-1, 1, 3)))
    from .lattice import VariationProfile

    eta = tuple(v - 1.0 for v in var_profile.values)
    g0 = g0_small_eta(VariationProfile(1.0, eta), SymbolValue.from_phase(0.02))
    lam = lambda0_quadratic(var_profile, SymbolValue.from_phase(0.02))
    check(
        "moderate-variation expansion",
        abs(g0 - lam) < 1e-6,
        f"|g0 - lambda0| = {abs(g0 - lam):.2e}",
    )
    return checks


def cmd_selftest(config: RunConfig, out, mutate: str | None = None) -> int:
    checks = _selftest_checks(config.seed, mutate)
    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, passed, detail in checks:
        status = "PASS" if passed else "FAIL"
        if not passed:
            failed += 1
        print(f"{name:<{width}}  {status}  {detail}", file=out)
    print(
        f"{len(checks) - failed}/{len(checks)} checks passed"
        + (f" (mutation mode: {mutate})" if mutate else ""),
        file=out,
    )
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parse_override(text: str):
    key, _, value = text.partition("=")
    if "." not in key or not value:
        raise argparse.ArgumentTypeError(
            f"override must look like section.key=value, got {text!r}"
        )
    try:
        import ast

        parsed = ast.literal_eval(value)
    except (ValueError, SyntaxError):
        parsed = value
    return key, parsed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaptooth",
        description="Patch-dynamics macroscale modelling of rough lattice diffusion",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("coeffs", "characteristic coefficients, means, and reference rates"),
        ("eigen", "patch vs reference dispersion scan"),
        ("simulate", "patch trajectory vs full-domain oracle"),
        ("sweep", "(K, n, b) coefficient-error sweep"),
        ("report", "render figure tables to PNG"),
        ("selftest", "oracle-equivalence and invariant suite"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("-c", "--config", help="TOML run configuration")
        cmd.add_argument(
            "-s",
            "--set",
            dest="overrides",
            type=_parse_override,
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override a config key (repeatable)",
        )
        if name in ("sweep", "report"):
            cmd.add_argument("--workers", type=int, default=None)
        if name == "selftest":
            cmd.add_argument(
                "--mutate",
                choices=["c0-sign"],
                default=None,
                help="fault-injection mode: flip the constant characteristic "
                "coefficient and verify the oracle comparison fails",
            )
    return parser


def main(argv=None, out=sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, dict(args.overrides))
        if args.command == "coeffs":
            return cmd_coeffs(config, out)
        if args.command == "eigen":
            return cmd_eigen(config, out)
        if args.command == "simulate":
            return cmd_simulate(config, out)
        if args.command == "sweep":
            return cmd_sweep(config, out, workers=args.workers)
        if args.command == "report":
            return cmd_report(config, out, workers=args.workers)
        if args.command == "selftest":
            return cmd_selftest(config, out, mutate=args.mutate)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
