"""Command-line scenario runner.

Each command writes one data file (CSV or JSON) atomically and prints a
one-line summary. Times are in ps, energies in ueV, rates in ns^-1.

Exit status: 0 success, 2 configuration or usage error, 3 invalid input,
4 numeric-domain error. Failures print ``error[<category>]: <message>`` to
standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from . import interference, teleport
from .correlator import analytic
from .correlator.generate import McConfig, generate_tags
from .correlator.histogram import fidelity_ratio, g2_histogram, g3_histogram
from .correlator.tags import Detector, write_binary
from .errors import ConfigError, InvalidInputError, OutOfDomainError
from .model import EmpiricalFits, ExperimentParams, LaserParams
from .polarization import CARDINAL, DensityMatrix, principal_eigen, tomography_reconstruct

EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_DOMAIN = 4

FORMATS_HELP = """\
output columns (CSV; JSON carries the same data plus parameters):
  interference          tau_ps, g2_co, g2_cross
  interference --de     de_uev, visibility
  teleport-map          tau1_ps, tau2_ps, input, fidelity   (input 'average' = six-state mean)
  ratio-scan            ratio, de_uev, fidelity
  tomography            quantity, value   (lambda1, bloch_x/y/z, nu1_*, rho_0..rho_7, projected)
  trajectory            tau2_ps, lambda1, overlap_L, overlap_R, nu1_h_re, nu1_h_im, nu1_v_re, nu1_v_im
  mc-validate           check, measured, predicted, sigma, z, passed
density matrices: 8 reals, row-major, (re, im) interleaved.
"""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"error[config]: {message}\n")


# ---------------------------------------------------------------- parsing helpers

def _range(text: str) -> list[float]:
    """'start:stop:step' (inclusive), or a comma list, or a single value."""
    if ":" not in text:
        try:
            return [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad number list {text!r}") from None
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad range {text!r}") from None
    if not step > 0 or stop < start:
        raise ConfigError(f"range {text!r} needs step > 0 and stop >= start")
    n = (stop - start) / step
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError(f"range {text!r}: (stop - start) is not a multiple of step")
    return [start + step * k for k in range(int(round(n)) + 1)]


def _axis(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid axis must be start:step:count, got {text!r}")
    try:
        start, step, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad grid axis {text!r}") from None
    return teleport.grid(start, step, count)


def _grid(text: str) -> tuple[np.ndarray, np.ndarray]:
    axes = {}
    for item in text.split(","):
        key, _, val = item.partition("=")
        if key.strip() not in ("t1", "t2") or not val:
            raise ConfigError(f"grid must look like t1=start:step:count,t2=start:step:count, got {text!r}")
        axes[key.strip()] = _axis(val)
    if set(axes) != {"t1", "t2"}:
        raise ConfigError("grid needs both t1 and t2")
    return axes["t1"], axes["t2"]


def _flatten(doc, prefix="") -> dict:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _load_config(path: str) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key/value mapping")
    flat = _flatten(doc)
    preset = flat.pop("preset", "paper")
    if preset != "paper":
        raise ConfigError(f"unknown preset {preset!r}")
    return flat


def _params(args) -> ExperimentParams:
    p = ExperimentParams.paper()
    if args.config:
        p = p.overlay(_load_config(args.config))
    sets = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        sets[key.strip()] = yaml.safe_load(val) if val.strip() else None
    p = p.overlay(sets)
    if args.ideal:
        ideal = ExperimentParams.ideal()
        p = dataclasses.replace(
            p,
            qd=dataclasses.replace(p.qd, fss_s=0.0, bg_rate_gamma=0.0),
            laser=dataclasses.replace(p.laser, detuning_de=0.0),
            fits=ideal.fits,
            det=None,
        )
    if args.no_interference:
        p = dataclasses.replace(p, laser=dataclasses.replace(p.laser, interference=False))
    if args.no_jitter:
        p = dataclasses.replace(p, det=None)
    return p


# ---------------------------------------------------------------- output

def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, ".12g")) if math.isfinite(v) else None
    return obj


def _write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, header, rows, payload) -> Path:
    out = Path(args.out) if args.out else Path(f"{args.command}.{args.format}")
    if args.format == "json":
        text = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(x) for x in r])
        text = buf.getvalue()
    _write_atomic(out, text)
    return out


# ---------------------------------------------------------------- commands

def cmd_interference(args, p: ExperimentParams):
    if args.de:
        rows = interference.detuning_scan(_range(args.de), p.qd, p.laser, p.fits, p.det, workers=args.workers)
        payload = {"params": p.as_dict(), "de_uev": [r[0] for r in rows], "visibility": [r[1] for r in rows]}
        path = _emit(args, ["de_uev", "visibility"], rows, payload)
        return f"interference: {len(rows)} detunings, V({rows[0][0]:g} ueV)={rows[0][1]:.4f}, " \
               f"V({rows[-1][0]:g} ueV)={rows[-1][1]:.4f} -> {path}"
    co, cr = interference.correlation_curves(p.qd, p.laser, p.fits, p.det, span=args.span, step=args.step)
    rows = list(zip(co.tau, co.values, cr.values))
    payload = {"params": p.as_dict(), "tau_ps": co.tau, "g2_co": co.values, "g2_cross": cr.values}
    path = _emit(args, ["tau_ps", "g2_co", "g2_cross"], rows, payload)
    v = (co.at(0.0) - cr.at(0.0)) / cr.at(0.0)
    return f"interference: V={v:.4f} at dE={p.laser.detuning_de:g} ueV, {len(rows)} points -> {path}"


def cmd_teleport_map(args, p: ExperimentParams):
    t1, t2 = _grid(args.grid)
    fmap = teleport.fidelity_map(p, t1, t2)
    layers = dict(fmap.layers)
    layers["average"] = fmap.average
    rows = []
    for i, a in enumerate(t1):
        for j, b in enumerate(t2):
            for name, layer in layers.items():
                rows.append((a, b, name, layer[i, j]))
    summary = fmap.summary()
    payload = {"params": p.as_dict(), "tau1_ps": t1, "tau2_ps": t2,
               "fidelity": layers, "summary": summary}
    path = _emit(args, ["tau1_ps", "tau2_ps", "input", "fidelity"], rows, payload)
    per = " ".join(f"{k}={v:.4f}" for k, v in summary["fidelity_at_origin"].items())
    return f"teleport-map: average fidelity at (0,0)={summary['average_at_origin']:.4f} ({per}) -> {path}"


def cmd_ratio_scan(args, p: ExperimentParams):
    rows = teleport.ratio_detuning_scan(_range(args.ratios), _range(args.de), p, inp=args.input,
                                        workers=args.workers)
    payload = {"params": p.as_dict(), "input": args.input,
               "rows": [{"ratio": r, "de_uev": d, "fidelity": f} for r, d, f in rows]}
    path = _emit(args, ["ratio", "de_uev", "fidelity"], rows, payload)
    best = max(rows, key=lambda r: r[2])
    return f"ratio-scan: {len(rows)} points, best F={best[2]:.4f} at ratio={best[0]:g}, dE={best[1]:g} ueV -> {path}"


def _state_record(rho: DensityMatrix) -> dict:
    b = rho.bloch()
    lam, nu = principal_eigen(rho)
    return {
        "lambda1": lam,
        "bloch": [b.x, b.y, b.z],
        "nu1": [nu.amp_h.real, nu.amp_h.imag, nu.amp_v.real, nu.amp_v.imag],
        "rho": rho.to_real8(),
        "projected": rho.projected,
    }


def cmd_tomography(args, p: ExperimentParams):
    rho = tomography_reconstruct(args.fh, args.fd, args.fl)
    rec = _state_record(rho)
    rows = [("lambda1", rec["lambda1"])]
    rows += [(f"bloch_{c}", v) for c, v in zip("xyz", rec["bloch"])]
    rows += [(n, v) for n, v in zip(("nu1_h_re", "nu1_h_im", "nu1_v_re", "nu1_v_im"), rec["nu1"])]
    rows += [(f"rho_{k}", v) for k, v in enumerate(rec["rho"])]
    rows.append(("projected", rec["projected"]))
    payload = {"input": {"f_h": args.fh, "f_d": args.fd, "f_l": args.fl}, **rec}
    path = _emit(args, ["quantity", "value"], rows, payload)
    x, y, z = rec["bloch"]
    return f"tomography: lambda1={rec['lambda1']:.3f} bloch=({x:.3f}, {y:.3f}, {z:.3f}) -> {path}"


def cmd_trajectory(args, p: ExperimentParams):
    t2 = _axis(args.tau2)
    traj = teleport.output_trajectory(p, t2, inp=args.input, tau1=args.tau1)
    rows = []
    for k, t in enumerate(traj.tau2):
        nu = traj.nu1[k]
        rows.append((t, traj.lambda1[k], traj.overlap_l[k], traj.overlap_r[k],
                     nu.amp_h.real, nu.amp_h.imag, nu.amp_v.real, nu.amp_v.imag))
    header = ["tau2_ps", "lambda1", "overlap_L", "overlap_R", "nu1_h_re", "nu1_h_im", "nu1_v_re", "nu1_v_im"]
    payload = {"params": p.as_dict(), "input": args.input, "tau1_ps": args.tau1,
               "columns": header, "rows": rows}
    path = _emit(args, header, rows, payload)
    k = int(np.argmin(traj.overlap_l))
    return (f"trajectory: max lambda1={traj.lambda1.max():.4f}, overlap_L minimum {traj.overlap_l[k]:.4f} "
            f"at tau2={traj.tau2[k]:g} ps -> {path}")


def _check(name, measured, predicted, sigma):
    z = (measured - predicted) / sigma if sigma > 0 else math.inf
    return (name, measured, predicted, sigma, z, bool(abs(z) <= 3.0))


def mc_checks(duration: float, seed: int, p: ExperimentParams, cascade_rate: float = 1.0,
              laser_rate: float = 1.0, bg_rate: float = 0.5, save_tags: str | None = None):
    """Tag-level checks of the correlator against exact expectations.

    Returns rows (check, measured, predicted, sigma, z, passed).
    """
    qd = dataclasses.replace(p.qd, bg_rate_gamma=0.0)
    rows = []

    # 1. D1-D2 g2(0) of a single emitter plus laser on a 50:50 splitter; classical tags
    # carry no optical phase, so this is the interference-disabled coincidence curve.
    cfg = McConfig(duration=duration, cascade_rate=cascade_rate, laser_rate=laser_rate, seed=seed,
                   qd=qd, alice="bs50", bob_basis=None, emitter="single")
    tags = generate_tags(cfg)
    if save_tags:
        write_binary(tags, save_tags)
    bin_ = 10.0
    h = g2_histogram(tags, Detector.D1, Detector.D2, bin_, 200.0)
    r, mu = cfg.cascade_rate_ps, cfg.x_decay_rate_ps
    fits = dataclasses.replace(EmpiricalFits.zeroed(), tau_dip=1.0 / (r + mu))
    qd_eq = dataclasses.replace(qd, eta=cfg.effective_cascade_rate_ps * 1e3)
    las = LaserParams(alpha2=laser_rate, interference=False)
    fine = np.linspace(-bin_ / 2, bin_ / 2, 201)
    pred = float(np.mean(interference.g2_cross(fine, qd_eq, las, fits)))
    k = h.half
    rows.append(_check("g2_interference_disabled_0", h.g2[k], pred, h.sigma[k]))

    # 2. g3 fidelity ratio at (0,0) for a polar and an equatorial input.
    for name in ("H", "D"):
        cfg = McConfig(duration=duration, cascade_rate=cascade_rate, laser_rate=laser_rate,
                       seed=seed + 1, qd=qd, laser=LaserParams(input_pol=CARDINAL[name]))
        tags = generate_tags(cfg)
        hs = g3_histogram(tags, 50.0, 50.0, (-100.0, 100.0), (-100.0, 200.0))
        f, s = fidelity_ratio(hs[Detector.D3], hs[Detector.D4], 0.0, 0.0)
        ht = hs[Detector.D3]
        i, j = ht.bin_index(0.0, 0.0)
        e1, e2 = ht.tau1_edges[i:i + 2], ht.tau2_edges[j:j + 2]
        rates = analytic.singles_rates(cfg)
        flat = rates[Detector.D1] * rates[Detector.D2] * duration * np.diff(e1)[0] * np.diff(e2)[0]
        x = analytic.expected_g3_counts(cfg, Detector.D3, e1, e2)[0, 0] / (flat * rates[Detector.D3])
        y = analytic.expected_g3_counts(cfg, Detector.D4, e1, e2)[0, 0] / (flat * rates[Detector.D4])
        rows.append(_check(f"g3_fidelity_ratio_{name}", f, x / (x + y), s))

    # 3. Bob's D3-D4 g2(0): single-emitter X photons mixed with Poissonian background.
    cfg = McConfig(duration=duration, cascade_rate=cascade_rate, laser_rate=0.0, bg_rate=bg_rate,
                   seed=seed + 2, qd=qd, bob_basis=None, emitter="single")
    tags = generate_tags(cfg)
    h = g2_histogram(tags, Detector.D3, Detector.D4, bin_, 200.0)
    S = cfg.effective_cascade_rate_ps
    B = bg_rate * 1e-3
    kk = cfg.cascade_rate_ps + cfg.x_decay_rate_ps
    dip = np.mean(np.exp(-kk * np.abs(fine)))
    pred = 1.0 - S * S * dip / (S + B) ** 2
    rows.append(_check("g2_x_plus_background_0", h.g2[h.half], pred, h.sigma[h.half]))
    return rows


def cmd_mc_validate(args, p: ExperimentParams):
    rows = mc_checks(args.duration, args.seed, p, args.cascade_rate, args.laser_rate, args.bg_rate,
                     save_tags=args.save_tags)
    header = ["check", "measured", "predicted", "sigma", "z", "passed"]
    payload = {"duration_ps": args.duration, "seed": args.seed,
               "checks": [dict(zip(header, r)) for r in rows]}
    path = _emit(args, header, rows, payload)
    ok = sum(r[5] for r in rows)
    worst = max(abs(r[4]) for r in rows)
    return f"mc-validate: {ok}/{len(rows)} checks within 3 sigma, max |z|={worst:.2f} -> {path}"


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("parameters")
    g.add_argument("--preset", choices=["paper"], default="paper", help="baseline parameter set")
    g.add_argument("--config", help="YAML key/value file, nested (qd: {tau_c: 150}) or dotted keys")
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one parameter, e.g. qd.tau_c=150 or det=none (repeatable)")
    g.add_argument("--ideal", action="store_true",
                   help="background 0, fits zeroed, s=0, dE=0, no jitter")
    g.add_argument("--no-interference", action="store_true", help="drop the laser-XX beat term")
    g.add_argument("--no-jitter", action="store_true", help="ideal detectors")
    o = common.add_argument_group("output")
    o.add_argument("--out", help="output file (default <command>.<format>)")
    o.add_argument("--format", choices=["csv", "json"], default="csv")
    o.add_argument("--seed", type=int, default=0, help="random seed (mc-validate)")
    o.add_argument("--workers", type=int, default=1, help="threads for scans")

    parser = _ArgumentParser(prog="hetero-teleport", description=__doc__.split("\n\n")[0],
                             epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, epilog=FORMATS_HELP,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    s = add("interference", "laser-XX coincidence curves or visibility versus detuning")
    s.add_argument("--de", help="detuning scan start:stop:step in ueV (inclusive); writes visibilities")
    s.add_argument("--span", type=float, default=2000.0, help="curve half-width in ps")
    s.add_argument("--step", type=float, default=1.0, help="curve grid step in ps")
    s.set_defaults(func=cmd_interference)

    s = add("teleport-map", "six-input fidelity over the (tau1, tau2) plane")
    s.add_argument("--grid", default="t1=-1000:20:101,t2=-1000:20:201",
                   help="t1=start:step:count,t2=start:step:count (ps)")
    s.set_defaults(func=cmd_teleport_map)

    s = add("ratio-scan", "fidelity at (0,0) versus eta/alpha2 and detuning")
    s.add_argument("--ratios", default="0.5:4:0.5", help="start:stop:step or comma list")
    s.add_argument("--de", default="0:20:5", help="detunings in ueV, start:stop:step or comma list")
    s.add_argument("--input", default="D", choices=list(teleport.INPUT_NAMES))
    s.set_defaults(func=cmd_ratio_scan)

    s = add("tomography", "output state from measured fidelities to H, D and L")
    s.add_argument("--fh", type=float, required=True)
    s.add_argument("--fd", type=float, required=True)
    s.add_argument("--fl", type=float, required=True)
    s.set_defaults(func=cmd_tomography)

    s = add("trajectory", "principal eigenvector of the teleported state along tau2")
    s.add_argument("--tau2", default="0:10:301", help="start:step:count (ps)")
    s.add_argument("--tau1", type=float, default=0.0)
    s.add_argument("--input", default="R", choices=list(teleport.INPUT_NAMES))
    s.set_defaults(func=cmd_trajectory)

    s = add("mc-validate", "tag-level Monte Carlo against exact correlator expectations")
    s.add_argument("--duration", type=float, default=1e9, help="simulated time in ps")
    s.add_argument("--cascade-rate", type=float, default=1.0, help="ns^-1")
    s.add_argument("--laser-rate", type=float, default=1.0, help="ns^-1")
    s.add_argument("--bg-rate", type=float, default=0.5, help="Bob background, ns^-1")
    s.add_argument("--save-tags", help="also write the first run's tags (binary QTAG)")
    s.set_defaults(func=cmd_mc_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        p = _params(args)
        line = args.func(args, p)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutOfDomainError as exc:
        print(f"error[domain]: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        print(f"error[domain]: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (InvalidInputError, ValueError) as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
