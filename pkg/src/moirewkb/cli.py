"""
Command-line front end.

    moirewkb bands    --model lowenergy --limit chiral --h 1/60
    moirewkb bands    --model harper --limit antichiral --L 30 --w0 1
    moirewkb wells    --model harper --w1 1 --L 60
    moirewkb contour  --model harper --w1 0.4
    moirewkb wkb      --model harper --well 0,1/3 --n 0 --order 2
    moirewkb bs       --L 80 --w0 0.7
    moirewkb verify   --suite all

Options come from flags or a JSON file (``--config``); flags win.  The output
directory is ``--out``, else $MOIREWKB_OUT, else the config file, else
``moirewkb_out``.  Exit codes: 0 success, 1 configuration error, 2 numerical
failure, 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

OUT_ENV = "MOIREWKB_OUT"
MODELS = ("harper", "lowenergy")
LIMITS = ("chiral", "antichiral", "general")
DEFAULT_COUPLINGS = {"chiral": (0.0, 1.0), "antichiral": (1.0, 0.0), "general": (0.5, 1.0)}


class ConfigError(ValueError):
    pass


def parse_fraction(text, name="value"):
    """Exact rational from '1/60', '60', '0.25'."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return Fraction(text).limit_denominator(10**12)
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{name}: cannot read {text!r} as p/q") from exc


@dataclass
class RunConfig:
    command: str
    model: str = "harper"
    limit: str = "chiral"
    w0: float | None = None
    w1: float | None = None
    k_perp: float = 0.0
    h: str | None = None
    L: str | None = None
    N: int | None = None
    nk: int = 33
    out: str = "moirewkb_out"
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.limit not in LIMITS:
            raise ConfigError(f"limit must be one of {LIMITS}, got {self.limit!r}")
        d0, d1 = DEFAULT_COUPLINGS[self.limit]
        self.w0 = d0 if self.w0 is None else float(self.w0)
        self.w1 = d1 if self.w1 is None else float(self.w1)
        if self.limit == "chiral" and self.w0 != 0:
            raise ConfigError("the chiral limit needs w0 = 0")
        if self.limit == "antichiral" and self.w1 != 0:
            raise ConfigError("the anti-chiral limit needs w1 = 0")
        if (self.h is None) == (self.L is None) and self.command in ("bands", "bs"):
            raise ConfigError("give exactly one of --h or --L")
        if self.h is not None and self.L is not None:
            raise ConfigError("give exactly one of --h or --L")
        for name in ("h", "L"):
            v = getattr(self, name)
            if v is not None:
                fr = parse_fraction(v, name)
                if fr <= 0:
                    raise ConfigError(f"{name} must be positive")
                setattr(self, name, str(fr))
        if self.nk < 1:
            raise ConfigError("the k-grid is empty (nk < 1)")
        if self.N is not None and self.N < 1:
            raise ConfigError("N must be positive")
        return self

    def params(self):
        from .models import ModelParams
        return ModelParams(self.w0, self.w1, self.k_perp)

    def semiclassical_h(self):
        if self.h is not None:
            return float(Fraction(self.h))
        L = float(Fraction(self.L))
        return 1.0 / (2 * math.pi * L) if self.model == "harper" else 1.0 / L

    def length(self):
        """Moire length as a fraction p/q, from L or from h."""
        if self.L is not None:
            return Fraction(self.L)
        h = Fraction(self.h)
        if self.model == "lowenergy":
            return 1 / h
        raise ConfigError("the discrete Harper model needs a rational --L")

    def to_dict(self):
        return asdict(self)


def version_string():
    here = Path(__file__).resolve().parent
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                           capture_output=True, text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return f"{__version__}+g{r.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# output helpers
class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.version = version_string()
        self.files = []

    def header(self):
        return {"config": self.cfg.to_dict(), "version": self.version}

    def json(self, name, payload):
        doc = {**self.header(), **payload}
        path = self.dir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.files.append(str(path))
        return path

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# config: {json.dumps(self.cfg.to_dict(), sort_keys=True)}\n# version: {self.version}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, (float, np.floating)) else v for v in r])
        path = self.dir / name
        path.write_text(buf.getvalue())
        self.files.append(str(path))
        return path

    def svg(self, name, text):
        meta = json.dumps(self.header(), sort_keys=True).replace("--", "- -")
        path = self.dir / name
        path.write_text(text.replace(">", f"><!-- {meta} -->", 1) + "\n")
        self.files.append(str(path))
        return path


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialize {type(v).__name__}")


# commands
def cmd_bands(cfg: RunConfig, w: Writer):
    from .spectra import band_sweep, bands_svg, flatness, lowenergy_bloch, tight_binding_bloch
    from .acceptance import _nearest_positive
    pr = cfg.params()
    if cfg.model == "harper":
        L = cfg.length()
        p, q = L.numerator, L.denominator
        h = 1.0 / (2 * math.pi * float(L))
        ks = np.linspace(0.0, 2 * math.pi, cfg.nk)
        bs = band_sweep(lambda k: tight_binding_bloch(p, q, k, pr), ks)
        size = 4 * p
        xs, xlabel = ks, "k_x"
        trunc = {"sites_per_cell": p, "matrix_size": size}
    else:
        h = cfg.semiclassical_h()
        N = cfg.N or max(48, int(1.5 / h))
        ks = np.linspace(0.0, 2 * math.pi * h, cfg.nk)
        bs = band_sweep(lambda k: lowenergy_bloch(k, h, N, pr), ks)
        xs, xlabel = ks / h, "k_x/h"
        trunc = {"N": N, "matrix_size": 4 * (2 * N + 1)}
        if cfg.options.get("w1_defaulted"):
            trunc["note"] = "w1 not given; the default coupling was used"
    window = tuple(cfg.options.get("window", (-2.0, 2.0)))
    rows = [(x, i, e) for x, row in zip(xs, bs.bands) for i, e in enumerate(row) if window[0] <= e <= window[1]]
    w.csv("bands.csv", [xlabel.replace("/", "_over_"), "band_index", "eigenvalue"], rows)
    flat = {int(i): flatness(bs, i, h)[1] for i in _nearest_positive(bs)}
    if not cfg.options.get("no_svg"):
        from .spectra import BandStructure
        w.svg("bands.svg", bands_svg(BandStructure(xs, bs.bands), xlabel=xlabel, window=window))
    w.json("bands.json", {"h": h, "truncation": trunc, "relative_flatness_near_zero": flat})
    return 0


def _squared_block(cfg):
    from .models import chiral_harper_squared, chiral_lowenergy_squared
    from .symbols import PhaseSpaceSymbol
    if cfg.options.get("symbol"):
        return PhaseSpaceSymbol.from_json(Path(cfg.options["symbol"]).read_text())
    if cfg.limit != "chiral":
        raise ConfigError("wells and contours are defined for the chiral limit")
    pr = cfg.params()
    sq = chiral_harper_squared(pr) if cfg.model == "harper" else chiral_lowenergy_squared(pr)
    return sq.block([0, 1])


def _xi_range(cfg):
    return (0.0, 1.0) if cfg.model == "harper" else (-3.0, 3.0)


def cmd_wells(cfg: RunConfig, w: Writer):
    from .models import count_closed_curves, find_wells, harper_chiral_block, lowenergy_chiral_block
    S = _squared_block(cfg)
    res = find_wells(S, grid=int(cfg.options.get("grid", 256)), model=cfg.model)
    payload = {"wells": [x.to_dict() for x in res.wells]}
    if not cfg.options.get("symbol"):
        D = (harper_chiral_block if cfg.model == "harper" else lowenergy_chiral_block)(cfg.params())
        payload["closed_curves"] = count_closed_curves(D, xi_range=_xi_range(cfg))
    w.json("wells.json", payload)
    return 0


def cmd_contour(cfg: RunConfig, w: Writer):
    from .models import count_closed_curves, harper_chiral_block, lowenergy_chiral_block
    from .spectra import heatmap_svg
    from .symbols import eval_symbol, principal_part
    S = _squared_block(cfg)
    grid = int(cfg.options.get("grid", 128))
    lo, hi = _xi_range(cfg)
    xs = np.linspace(-0.5, 0.5, grid, endpoint=False)
    xis = np.linspace(lo, hi, grid, endpoint=False)
    X, XI = np.meshgrid(xs, xis, indexing="ij")
    det = np.abs(np.linalg.det(eval_symbol(principal_part(S), X, XI, 0.0)))
    logdet = np.log10(np.maximum(det, 1e-300))
    rows = [(X[i, j], XI[i, j], logdet[i, j]) for i in range(grid) for j in range(grid)]
    w.csv("contour.csv", ["x", "xi", "log10_abs_det"], rows)
    if not cfg.options.get("no_svg"):
        w.svg("contour.svg", heatmap_svg(np.maximum(logdet, -8.0)))
    payload = {"grid": grid, "xi_range": [lo, hi]}
    if not cfg.options.get("symbol"):
        D = (harper_chiral_block if cfg.model == "harper" else lowenergy_chiral_block)(cfg.params())
        payload["closed_curves"] = count_closed_curves(D, grid=max(grid, 256), xi_range=(lo, hi))
    w.json("contour.json", payload)
    return 0


def _parse_well(text):
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ConfigError(f"well must be 'x,xi', got {text!r}")
    return tuple(float(parse_fraction(p, "well")) for p in parts)


def cmd_wkb(cfg: RunConfig, w: Writer):
    from .models import harper_normal_form, lowenergy_normal_form
    from .wkb import (DEFAULT_H_GRID, ResonantObstruction, classify_resonance, resonant_expansion,
                      residual_order, wkb_recurrence)
    from .symbols import NormalForm
    ell = int(cfg.options.get("order", 1))
    n = int(cfg.options.get("n", 0))
    if ell < 0 or n < 0:
        raise ConfigError("n and order must be nonnegative")
    K = 2 * ell + 2
    pr = cfg.params()
    if cfg.limit != "chiral":
        raise ConfigError("the WKB construction is set up at chiral wells")
    if cfg.model == "harper":
        x0, xi0 = _parse_well(cfg.options.get("well", "0,1/3"))
        if abs(x0) > 1e-12 or xi0 == 0:
            raise ConfigError("Harper wells sit at x = 0, xi = +/-1/3 (1/2)^(2 k_perp)")
        nf = harper_normal_form(pr, 1 if xi0 > 0 else -1, order=K)
        if abs(nf.xi0 - xi0) > 1e-9:
            raise ConfigError(f"no well at xi = {xi0}; nearest is {nf.xi0}")
        scale = 12 * math.pi**2
    else:
        nf = lowenergy_normal_form(pr, order=K)
        scale = 1.0
    branch = cfg.options.get("branch")
    if branch is None:
        branch = 1 if nf.mu1 <= nf.mu2 else 2
    branch = int(branch)
    sub = NormalForm(nf.T[:K + 1], nf.omega, nf.mu1, nf.mu2, nf.x0, nf.xi0)
    res = classify_resonance(nf.mu1, nf.mu2, nf.omega)
    try:
        ex = wkb_recurrence(nf, n, branch, ell)
    except ResonantObstruction:
        ex = resonant_expansion(sub, n + 1, ell)[0]
    slope = residual_order(ex, sub, DEFAULT_H_GRID)
    w.json("wkb.json", {"well": [nf.x0, nf.xi0], "branch": branch, "n": n, "lambdas": [float(v) for v in ex.lambdas],
                        "symbol_scale": scale, "residual_slope": slope, "residual_threshold": ell + 1.45,
                        "resonant": res.resonant, "fit_diagnostics": ex.diagnostics})
    y = np.linspace(-6, 6, 241) / math.sqrt(nf.omega)
    header = ["y"] + [f"u{i}_{c}_{part}" for i in range(len(ex.modes)) for c in (1, 2) for part in ("re", "im")]
    vals = [u(y) for u in ex.modes]
    rows = [[yy] + [float(getattr(v[t, c], part)) for v in vals for c in range(2) for part in ("real", "imag")]
            for t, yy in enumerate(y)]
    w.csv("wkb_modes.csv", header, rows)
    return 0


def cmd_bs(cfg: RunConfig, w: Writer):
    from . import bohr_sommerfeld as bsm
    from .models import antichiral_diag, antichiral_minima
    from .spectra import circle_quantize
    if cfg.model != "harper" or cfg.limit != "antichiral":
        raise ConfigError("Bohr-Sommerfeld tables are set up for the anti-chiral Harper model")
    h = cfg.semiclassical_h()
    L = 1.0 / (2 * math.pi * h)
    N = cfg.N or max(20, int(round(L / 2)))
    levels = int(cfg.options.get("levels", 4))
    ntau = int(cfg.options.get("taus", 60))
    pr = cfg.params()
    rows, tables = [], []
    for j, (S, (c, x0, xi0)) in enumerate(zip(antichiral_diag(pr), antichiral_minima(pr.w0, pr.k_perp)), start=1):
        series = bsm.antichiral_series(pr.w0, j, pr.k_perp)
        tab = bsm.F_table(series, bsm.default_tau_grid(series, ntau))
        rows += [(j, t, a, b, d) for t, a, b, d in zip(tab.tau, tab.F0, tab.F1, tab.F2)]
        k_min = int(round(xi0 / (2 * math.pi * h))) - N
        ev = np.linalg.eigvalsh(circle_quantize(S, h, N, k_min).matrix)
        for k in range(1, levels + 1):
            pred = c + bsm.invert_F(tab, k, h)
            m = float(ev[np.argmin(np.abs(ev - pred))])
            tables.append({"j": j, "k": k, "prediction": pred, "matched_eigenvalue": m, "gap": abs(m - pred),
                           "ladder": bsm.antichiral_levels(pr.w0, h, j, k - 1, "harmonic")})
    w.csv("bs_F.csv", ["j", "tau", "F0", "F1", "F2"], rows)
    w.json("bs_levels.json", {"h": h, "N": N, "levels": tables})
    return 0


SUITES = {"all": None, "quick": [1, 2, 6, 7, 8, 9], "antichiral": [9]}


def cmd_verify(cfg: RunConfig, w: Writer):
    from . import acceptance
    suite = str(cfg.options.get("suite", "all"))
    if suite in SUITES:
        numbers = SUITES[suite]
    else:
        try:
            numbers = sorted({int(s) for s in suite.split(",")})
        except ValueError as exc:
            raise ConfigError(f"unknown suite {suite!r}") from exc
        bad = [n for n in numbers if n not in acceptance.CRITERIA]
        if bad:
            raise ConfigError(f"no criteria {bad}")
    results = acceptance.run(numbers)
    for r in results:
        print(r.line())
        for c in r.checks:
            print("    " + c.line())
    w.json("verify.json", {"suite": suite, "passed": all(r.passed for r in results),
                           "criteria": [r.to_dict() for r in results]})
    return 0 if all(r.passed for r in results) else 3


COMMANDS = {"bands": cmd_bands, "wells": cmd_wells, "contour": cmd_contour, "wkb": cmd_wkb,
            "bs": cmd_bs, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="moirewkb", description="Semiclassical numerics for 1D moire models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with any of the options below")
        s.add_argument("--model", choices=MODELS)
        s.add_argument("--limit", choices=LIMITS)
        s.add_argument("--w0", type=float)
        s.add_argument("--w1", type=float)
        s.add_argument("--k-perp", dest="k_perp", type=float)
        s.add_argument("--h", help="semiclassical parameter, e.g. 1/60")
        s.add_argument("--L", help="moire length, e.g. 30 or 61/2")
        s.add_argument("--N", type=int, help="Fourier truncation |n| <= N")
        s.add_argument("--nk", type=int, help="number of k-points")
        s.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
        s.add_argument("--no-svg", dest="no_svg", action="store_true", default=None)
        s.add_argument("--grid", type=int)
        s.add_argument("--symbol", help="JSON symbol file for a custom 2x2 block")
        s.add_argument("--well", help="x,xi of the well, e.g. 0,1/3")
        s.add_argument("--n", type=int, help="oscillator level")
        s.add_argument("--order", type=int, help="expansion order ell")
        s.add_argument("--branch", type=int, choices=(1, 2))
        s.add_argument("--levels", type=int)
        s.add_argument("--taus", type=int, help="energies in the Bohr-Sommerfeld table")
        s.add_argument("--suite", help="all, quick, antichiral or a list like 3,4")
    return p


CORE = ("model", "limit", "w0", "w1", "k_perp", "h", "L", "N", "nk", "out")


def resolve_config(args, environ=None):
    environ = os.environ if environ is None else environ
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    options = dict(doc.pop("options", {}))
    unknown = [k for k in doc if k not in CORE]
    for k in unknown:
        options[k] = doc.pop(k)
    if environ.get(OUT_ENV):
        doc["out"] = environ[OUT_ENV]
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        if k in CORE:
            doc[k] = v
        else:
            options[k] = v
    if doc.get("h") is not None and doc.get("L") is not None and args.h is None and args.L is None:
        raise ConfigError("config gives both h and L")
    # a flag for h or L replaces the other one coming from the file
    if args.h is not None and args.L is None:
        doc.pop("L", None)
    if args.L is not None and args.h is None:
        doc.pop("h", None)
    if doc.get("w1") is None and doc.get("limit", "chiral") != "antichiral":
        options["w1_defaulted"] = True
    try:
        cfg = RunConfig(command=args.command, options=options, **doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def main(argv=None):
    from .hermite import DegreeOverflow, OrthogonalityViolation
    from .spectra import EigensolverError
    from .symbols import NormalFormError
    from .wkb import FitDiagnostics, ResonantObstruction
    from .bohr_sommerfeld import NoClosedOrbit, OutOfRange
    numerical = (EigensolverError, NormalFormError, FitDiagnostics, ResonantObstruction, NoClosedOrbit,
                 OutOfRange, DegreeOverflow, OrthogonalityViolation, ArithmeticError, np.linalg.LinAlgError)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = resolve_config(args)
        writer = Writer(cfg)
        code = COMMANDS[cfg.command](cfg, writer)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except numerical as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    for f in writer.files:
        print(f)
    return code


if __name__ == "__main__":
    sys.exit(main())
