"""Effective-coefficient extraction, error metric, and geometry sweeps.

The accuracy of the patch scheme is judged coefficient by coefficient: write
both the scheme's slow eigenvalue and the complete-domain reference as a
series in the squared difference symbol s2 and in small diffusivity
variations eta, and compare the quadratic-in-eta coefficients.  The
extraction probes the slow eigenvalue with signed eta perturbations
(central differences cancel the odd orders, a Richardson pair cancels the
next even order) and splits the s2 from the s2^2 content by regressing the
eigenvalue on the matched symbol over a grid of halving phases.

The relative coefficient errors

    delta_d_k = (d_k(reference) - d_k(patch)) / d_k(reference)

for k = 0..floor(K/2) form the per-(K, n, b) error landscape; the sweep
harness walks the (K, n, b) grid, streams records to disk, and the figure
tables average |delta_d_0| over period ranges against the scaled buffer
b/(n-1).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from .lattice import DiffusivityProfile
from .patch import CouplingSpec, PatchGeometry, slow_eigenvalue
from .theory import SymbolValue, lambda0_quadratic, quadratic_table

__all__ = [
    "CoefficientExtraction",
    "SweepRecord",
    "FigureRow",
    "extract_coefficients",
    "extract_reference_coefficients",
    "delta_dk",
    "sweep",
    "figure_data",
]

#: Default eta probe magnitude for the s2-side coefficients.
ETA_PROBE = 1e-2
#: Larger probe for the s2^2-side coefficients: their extraction divides by
#: probe^2 twice over a much smaller signal, so round-off pushes the optimum
#: probe up while the Richardson pair keeps the truncation in check.
ETA_PROBE_F = 4e-2
#: Coarsest phase of the regression grid.
THETA0 = math.pi / 8
#: Acceptable relative residual of the symbol regression.
FIT_RESIDUAL_TOL = 1e-8

_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class CoefficientExtraction:
    """Quadratic-in-eta coefficients extracted from one eigenvalue source.

    d_lin is the coefficient of sum(eta) at order s2 (exactly 1/K for the
    complete domain); d0_hat/dk_hat are the quadratic coefficients at order
    s2 and f0_hat/fk_hat their s2^2 counterparts, in the same normalization
    as :func:`gaptooth.theory.quadratic_table`.  diagnostics records probe
    sizes, fit residuals, and the worst eigenvalue imaginary part; flagged
    marks extractions whose regression residual exceeded tolerance (callers
    must warn and exclude them from averages, never drop them silently).
    """

    K: int
    d_lin: float
    d0_hat: float
    dk_hat: tuple[float, ...]
    f0_hat: float | None
    fk_hat: tuple[float, ...]
    diagnostics: dict = field(default_factory=dict)
    flagged: bool = False


@dataclass(frozen=True)
class SweepRecord:
    """One (K, n, b) cell of the coefficient-error landscape.

    delta_dk holds |delta_d_k| for k = 0..floor(K/2) (non-negative); the
    ideal flags are exact integer arithmetic on the cell coordinates.
    """

    K: int
    n: int
    b: int
    delta_dk: tuple[float, ...]
    ideal_nb: bool
    ideal_2b1: bool
    integer_r: bool = False
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass(frozen=True)
class FigureRow:
    """One (n, b) point of a figure table: |delta_d0| averaged over K."""

    mode: str
    n: int
    b: int
    scaled_buffer: float
    mean_abs_delta_d0: float | None
    cells: int
    gap: bool


# ---------------------------------------------------------------------------
# symbol regression
# ---------------------------------------------------------------------------


def _phase_grid(halvings: int) -> list[float]:
    return [THETA0 / 2**m for m in range(halvings + 1)]


def _fit_symbol_series(lams, s2s, terms):
    """Least squares of lam on (s2, s2^2, ..., s2^terms), columns scaled.

    Returns (coefficients, relative residual).  The cubic (and, for the
    s2^2 side, quartic) nuisance terms absorb the genuine higher-order
    content so it cannot leak into the reported coefficients.
    """
    s2s = np.asarray(s2s, dtype=float)
    lams = np.asarray(lams, dtype=float)
    X = np.vstack([s2s ** (p + 1) for p in range(terms)]).T
    scale = np.abs(X).max(axis=0)
    coef, *_ = np.linalg.lstsq(X / scale, lams, rcond=None)
    coef = coef / scale
    residual = float(
        np.max(np.abs(X @ coef - lams)) / np.max(np.abs(coef[0] * s2s))
    )
    return coef, residual


class _SeriesProbe:
    """Caches (s2, s2^2) coefficients of an eigenvalue source per eta probe."""

    def __init__(self, eigenvalue_fn, K, macro_ratio):
        self.fn = eigenvalue_fn
        self.K = K
        self.N = macro_ratio
        self.cache: dict = {}
        self.max_residual = 0.0
        self.worst_imag = 0.0

    def _eigen(self, eta: np.ndarray, theta: float) -> float:
        lam = self.fn(eta, theta)
        if isinstance(lam, complex):
            self.worst_imag = max(self.worst_imag, abs(lam.imag))
            lam = lam.real
        return float(lam)

    def coefficients(self, eta: np.ndarray, side: str) -> float:
        """Coefficient of s2 (side "a") or s2^2 (side "b") at this probe."""
        key = (tuple(np.round(eta, 14)), side)
        if key not in self.cache:
            if side == "a":
                thetas, terms, pick = _phase_grid(3), 3, 0
            else:
                thetas, terms, pick = _phase_grid(4), 4, 1
            s2s = [-4.0 * math.sin(t / (2 * self.N)) ** 2 for t in thetas]
            lams = [self._eigen(eta, t) for t in thetas]
            coef, residual = _fit_symbol_series(lams, s2s, terms)
            self.max_residual = max(self.max_residual, residual)
            self.cache[key] = float(coef[pick])
        return self.cache[key]


def _richardson_first(probe, direction, eps, side):
    full = (
        probe.coefficients(direction * eps, side)
        - probe.coefficients(-direction * eps, side)
    ) / (2 * eps)
    half = (
        probe.coefficients(direction * eps / 2, side)
        - probe.coefficients(-direction * eps / 2, side)
    ) / eps
    return (4.0 * half - full) / 3.0


def _richardson_second(probe, direction, eps, side, base):
    full = (
        probe.coefficients(direction * eps, side)
        + probe.coefficients(-direction * eps, side)
        - 2.0 * base
    ) / eps**2
    half = (
        probe.coefficients(direction * eps / 2, side)
        + probe.coefficients(-direction * eps / 2, side)
        - 2.0 * base
    ) / (eps / 2) ** 2
    return (4.0 * half - full) / 3.0  # equals twice the quadratic coefficient


def _extract(eigenvalue_fn, K, macro_ratio, kappa0, include_f, eps, eps_f,
             quadratic=True):
    probe = _SeriesProbe(eigenvalue_fn, K, macro_ratio)
    unit = np.zeros(K)
    unit[0] = 1.0
    base_a = probe.coefficients(np.zeros(K), "a")
    d_lin = _richardson_first(probe, unit, eps, "a") / base_a
    if not quadratic:
        flagged = probe.max_residual > FIT_RESIDUAL_TOL
        return CoefficientExtraction(
            K=K, d_lin=float(d_lin), d0_hat=float("nan"), dk_hat=(),
            f0_hat=None, fk_hat=(),
            diagnostics={
                "eta_probe": eps,
                "theta0": THETA0,
                "fit_residual_max": probe.max_residual,
                "eigen_imag_max": probe.worst_imag,
                "leading_coefficient": base_a,
            },
            flagged=flagged,
        )
    d0_hat = -_richardson_second(probe, unit, eps, "a", base_a) / (2.0 * kappa0)
    dk_hat = []
    fk_hat = []
    if include_f:
        base_b = probe.coefficients(np.zeros(K), "b")
        f0_hat = _richardson_second(probe, unit, eps_f, "b", base_b) / (2.0 * kappa0)
    else:
        f0_hat = None
    for k in range(1, K // 2 + 1):
        partner = np.zeros(K)
        partner[k % K] = 1.0
        plus = unit + partner
        minus = unit - partner
        # paired probes isolate the eta_1 eta_{1+k} product; the k = K/2 term
        # appears twice in the cyclic sum, hence the extra factor 2
        div = 8.0 if 2 * k == K else 4.0
        s_plus = _richardson_second(probe, plus, eps, "a", base_a)
        s_minus = _richardson_second(probe, minus, eps, "a", base_a)
        dk_hat.append((s_plus - s_minus) / (div * kappa0))
        if include_f:
            t_plus = _richardson_second(probe, plus, eps_f, "b", base_b)
            t_minus = _richardson_second(probe, minus, eps_f, "b", base_b)
            fk_hat.append((t_plus - t_minus) / (div * kappa0))
    flagged = probe.max_residual > FIT_RESIDUAL_TOL
    diagnostics = {
        "eta_probe": eps,
        "eta_probe_f": eps_f if include_f else None,
        "theta0": THETA0,
        "fit_residual_max": probe.max_residual,
        "eigen_imag_max": probe.worst_imag,
        "leading_coefficient": base_a,
    }
    return CoefficientExtraction(
        K=K,
        d_lin=float(d_lin),
        d0_hat=float(d0_hat),
        dk_hat=tuple(float(x) for x in dk_hat),
        f0_hat=None if f0_hat is None else float(f0_hat),
        fk_hat=tuple(float(x) for x in fk_hat),
        diagnostics=diagnostics,
        flagged=flagged,
    )


def extract_coefficients(
    K: int,
    geom: PatchGeometry,
    spec: CouplingSpec,
    use_ensemble: bool = True,
    kappa0: float = 1.0,
    include_f: bool = True,
    extended_precision: bool = False,
    eta_probe: float = ETA_PROBE,
    eta_probe_f: float = ETA_PROBE_F,
    quadratic: bool = True,
) -> CoefficientExtraction:
    """Extract the patch scheme's emergent coefficients for period K.

    The probes perturb a uniform medium kappa_0 along single and paired eta
    directions; with the ensemble on, translation symmetry makes one probe
    site representative of all of them.  The imaginary part of every slow
    eigenvalue is tracked and must stay at round-off for the symmetric
    setups used here.
    """

    def eigen(eta: np.ndarray, theta: float) -> complex:
        profile = DiffusivityProfile(tuple(kappa0 * (1.0 + eta)))
        mode = slow_eigenvalue(
            profile,
            geom,
            spec,
            theta,
            use_ensemble=use_ensemble,
            extended_precision=extended_precision,
        )
        if abs(mode.lam.imag) > _IMAG_TOL * max(1.0, abs(mode.lam.real)):
            raise FloatingPointError(
                f"slow eigenvalue has drift component {mode.lam.imag:.3e} "
                f"at theta = {theta}"
            )
        return mode.lam

    return _extract(
        eigen, K, geom.macro_ratio, kappa0, include_f, eta_probe, eta_probe_f,
        quadratic=quadratic,
    )


def extract_reference_coefficients(
    K: int,
    macro_ratio: int,
    kappa0: float = 1.0,
    include_f: bool = True,
    eta_probe: float = ETA_PROBE,
    eta_probe_f: float = ETA_PROBE_F,
) -> CoefficientExtraction:
    """Run the identical extraction on the complete-domain reference.

    Useful for measuring the extraction noise floor: the result must match
    :func:`gaptooth.theory.quadratic_table` to the fit-leak level.
    """

    def eigen(eta: np.ndarray, theta: float) -> float:
        profile = DiffusivityProfile(tuple(kappa0 * (1.0 + eta)))
        return lambda0_quadratic(
            profile, SymbolValue.from_phase(theta / macro_ratio)
        )

    return _extract(eigen, K, macro_ratio, kappa0, include_f, eta_probe, eta_probe_f)


def delta_dk(extraction: CoefficientExtraction, K: int) -> list[float]:
    """Relative errors of the s2-side quadratic coefficients against the
    exact table, k = 0..floor(K/2)."""
    table = quadratic_table(K)
    refs = [table.d0, *table.dk]
    hats = [extraction.d0_hat, *extraction.dk_hat]
    for ref in refs:
        # the table's s2-side entries are strictly positive rationals
        assert ref != 0.0, "reference quadratic coefficient vanished"
    return [(ref - hat) / ref for ref, hat in zip(refs, hats)]


# ---------------------------------------------------------------------------
# sweep harness
# ---------------------------------------------------------------------------


def _sweep_cell(args) -> SweepRecord:
    K, n, b, gamma, cutoff, extended = args
    r = (n - b) / (2 * n + 2)
    integer_r = abs(r - round(r)) < 1e-12 and round(r) <= 1
    try:
        geom = PatchGeometry(n=n, b=b)
        spec = CouplingSpec(gamma=gamma, cutoff=cutoff)
        extraction = extract_coefficients(
            K,
            geom,
            spec,
            use_ensemble=True,
            include_f=False,
            extended_precision=extended,
        )
        deltas = [abs(d) for d in delta_dk(extraction, K)]
        error = ""
        if extraction.flagged:
            error = (
                "fit residual "
                f"{extraction.diagnostics['fit_residual_max']:.2e} over tolerance"
            )
    except Exception as exc:  # record, never abort the sweep
        deltas = []
        error = f"{type(exc).__name__}: {exc}"
    return SweepRecord(
        K=K,
        n=n,
        b=b,
        delta_dk=tuple(deltas),
        ideal_nb=(n - b) % K == 0,
        ideal_2b1=(2 * b + 1) % K == 0,
        integer_r=integer_r,
        error=error,
    )


def sweep(
    K_range,
    n_range,
    b_rule=None,
    spec: CouplingSpec | None = None,
    out_path: str | None = None,
    workers: int | None = None,
    extended_precision: bool = False,
    header_lines=(),
) -> list[SweepRecord]:
    """Walk the (K, n, b) grid and extract delta_d_k for every cell.

    b_rule maps n to an iterable of buffer half-widths (default: all
    0 <= b < n).  Cells run as independent tasks on a process pool; records
    are returned, and streamed to out_path as CSV, in deterministic
    (K, n, b) order regardless of completion order.  A pre-existing file at
    out_path resumes the sweep: finished cells are loaded, not recomputed.
    Per-cell failures are recorded in-line and never abort the sweep.
    Degenerate integer-r geometries are annotated, not skipped, so their
    anomalous errors stay visible.
    """
    spec = spec or CouplingSpec()
    if b_rule is None:
        b_rule = range
    cells = [
        (K, n, b)
        for K in K_range
        for n in n_range
        for b in b_rule(n)
    ]
    done: dict[tuple[int, int, int], SweepRecord] = {}
    journal_path = out_path + ".partial" if out_path else None
    if out_path:
        for source in (out_path, journal_path):
            if source and os.path.exists(source):
                for record in read_sweep_csv(source):
                    if not record.failed:  # failed cells are retried on resume
                        done.setdefault((record.K, record.n, record.b), record)
    pending = [c for c in cells if c not in done]
    args = [
        (K, n, b, spec.gamma, spec.cutoff, extended_precision)
        for (K, n, b) in pending
    ]
    results: dict[tuple[int, int, int], SweepRecord] = dict(done)
    journal = None
    if journal_path and args:
        fresh = not os.path.exists(journal_path)
        journal = open(journal_path, "a", encoding="utf-8", newline="\n")
        if fresh:
            journal.write(_SWEEP_HEADER + "\n")

    def note(record: SweepRecord):
        results[(record.K, record.n, record.b)] = record
        if journal is not None:
            _write_sweep_rows(journal, record)
            journal.flush()

    try:
        if args:
            if workers is None:
                workers = min(len(args), os.cpu_count() or 1)
            if workers <= 1:
                for a in args:
                    note(_sweep_cell(a))
            else:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    remaining = {pool.submit(_sweep_cell, a) for a in args}
                    while remaining:
                        finished, remaining = wait(
                            remaining, return_when=FIRST_COMPLETED
                        )
                        for fut in finished:
                            note(fut.result())
    finally:
        if journal is not None:
            journal.close()
    ordered = [results[c] for c in cells]
    if out_path:
        write_sweep_csv(out_path, ordered, header_lines=header_lines)
        if journal_path and os.path.exists(journal_path):
            os.remove(journal_path)
    return ordered


_SWEEP_HEADER = "K,n,b,k,delta_dk,ideal_nb,ideal_2b1,integer_r,error"


def _write_sweep_rows(fh, rec: SweepRecord):
    if rec.failed and not rec.delta_dk:
        fh.write(
            f"{rec.K},{rec.n},{rec.b},,,{int(rec.ideal_nb)},"
            f"{int(rec.ideal_2b1)},{int(rec.integer_r)},"
            f"{rec.error.replace(',', ';')}\n"
        )
        return
    for k, value in enumerate(rec.delta_dk):
        fh.write(
            f"{rec.K},{rec.n},{rec.b},{k},{value!r},"
            f"{int(rec.ideal_nb)},{int(rec.ideal_2b1)},"
            f"{int(rec.integer_r)},{rec.error.replace(',', ';')}\n"
        )


def write_sweep_csv(path: str, records: list[SweepRecord], header_lines=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(_SWEEP_HEADER + "\n")
        for rec in records:
            _write_sweep_rows(fh, rec)


def read_sweep_csv(path: str) -> list[SweepRecord]:
    rows: dict[tuple[int, int, int], dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("K,"):
                continue
            parts = line.split(",")
            K, n, b = int(parts[0]), int(parts[1]), int(parts[2])
            cell = rows.setdefault(
                (K, n, b),
                {
                    "deltas": {},
                    "ideal_nb": parts[5] == "1",
                    "ideal_2b1": parts[6] == "1",
                    "integer_r": parts[7] == "1",
                    "error": parts[8] if len(parts) > 8 else "",
                },
            )
            if parts[3] != "":
                cell["deltas"][int(parts[3])] = float(parts[4])
    records = []
    for (K, n, b), cell in sorted(rows.items()):
        deltas = tuple(cell["deltas"][k] for k in sorted(cell["deltas"]))
        records.append(
            SweepRecord(
                K=K,
                n=n,
                b=b,
                delta_dk=deltas,
                ideal_nb=cell["ideal_nb"],
                ideal_2b1=cell["ideal_2b1"],
                integer_r=cell["integer_r"],
                error=cell["error"],
            )
        )
    return records


# ---------------------------------------------------------------------------
# figure tables
# ---------------------------------------------------------------------------


def figure_data(
    records: list[SweepRecord],
    mode: str,
    n_values=None,
) -> list[FigureRow]:
    """Average |delta_d0| over the period range of a figure mode.

    mode "fig3" averages over small periods 2 <= K <= n (every period fits
    inside half a patch); mode "fig4" averages over 2 <= K <= 12 including
    periods larger than the patch.  x is the scaled buffer b/(n-1).  Cells
    missing from the record set produce explicit gap rows rather than
    interpolated values; flagged/failed cells are excluded from the average
    with a warning carried in the gap flag.
    """
    if mode not in ("fig3", "fig4"):
        raise ValueError("mode must be 'fig3' or 'fig4'")
    by_cell = {(r.K, r.n, r.b): r for r in records}
    if n_values is None:
        n_values = sorted({r.n for r in records})
    rows: list[FigureRow] = []
    for n in n_values:
        K_lo, K_hi = (2, n) if mode == "fig3" else (2, 12)
        for b in range(0, n):
            values = []
            missing = False
            for K in range(K_lo, K_hi + 1):
                rec = by_cell.get((K, n, b))
                if rec is None or rec.failed or not rec.delta_dk:
                    if rec is not None and rec.failed:
                        warnings.warn(
                            f"excluding failed sweep cell (K={K}, n={n}, "
                            f"b={b}) from the {mode} average: {rec.error}"
                        )
                    missing = True
                    continue
                values.append(abs(rec.delta_dk[0]))
            rows.append(
                FigureRow(
                    mode=mode,
                    n=n,
                    b=b,
                    scaled_buffer=b / (n - 1) if n > 1 else 0.0,
                    mean_abs_delta_d0=(
                        float(np.mean(values)) if values else None
                    ),
                    cells=len(values),
                    gap=missing,
                )
            )
    return rows


_FIGURE_HEADER = "mode,n,b,scaled_buffer,mean_abs_delta_d0,cells,gap"


def write_figure_csv(path: str, rows: list[FigureRow], header_lines=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(_FIGURE_HEADER + "\n")
        for row in rows:
            value = "" if row.mean_abs_delta_d0 is None else repr(row.mean_abs_delta_d0)
            fh.write(
                f"{row.mode},{row.n},{row.b},{row.scaled_buffer!r},"
                f"{value},{row.cells},{int(row.gap)}\n"
            )


PLOT_SCRIPT_TEMPLATE = """\
#!/usr/bin/env python3
# Render a buffer-error figure from {csv_name} (columns: {header}).
# Gap rows have an empty value column and are skipped.
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
series = defaultdict(list)
with open(os.path.join(here, "{csv_name}")) as fh:
    for row in csv.DictReader(
        (line for line in fh if not line.startswith("#"))
    ):
        if row["mean_abs_delta_d0"] == "":
            continue
        series[int(row["n"])].append(
            (float(row["scaled_buffer"]), float(row["mean_abs_delta_d0"]))
        )
fig, ax = plt.subplots(figsize=(6.0, 4.0))
for n, points in sorted(series.items()):
    points.sort()
    ax.semilogy(*zip(*points), marker="o", ms=3, label=f"n = {{n}}")
ax.set_xlabel("scaled buffer b/(n-1)")
ax.set_ylabel("mean |delta_d0|")
ax.set_title("{title}")
ax.legend(fontsize=8)
ax.grid(True, which="both", alpha=0.3)
fig.tight_layout()
fig.savefig(os.path.join(here, "{png_name}"), dpi=150)
print("wrote {png_name}")
"""


def write_plot_script(path: str, csv_name: str, png_name: str, title: str):
    script = PLOT_SCRIPT_TEMPLATE.format(
        csv_name=csv_name,
        png_name=png_name,
        title=title,
        header=_FIGURE_HEADER,
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(script)
