"""``lipflow`` command line: embed, verify, enumerate, plot-data.

Exit status: 0 on success, 1 on invalid input or configuration, 2 when a
numerical budget is exceeded (failed property, uncertified entry).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .flows import FlowError
from .function_space import FunctionSpaceError
from .harness import ConfigError, RunConfig
from .hilbert import EmbeddingError
from .smoothing import CertificationError, UniversalPoint, pair_of, r_of

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=_u64, help="seed for randomized checks")
    common.add_argument("--depth-k", type=_positive, dest="depth_k",
                        help="number of entries F_i^j kept")
    common.add_argument("--no-figures", action="store_true",
                        help="skip the matplotlib figures")

    ap = argparse.ArgumentParser(prog="lipflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("embed", parents=[common], help="embed configured states")
    sub.add_parser("verify", parents=[common], help="run all property suites")
    en = sub.add_parser("enumerate", parents=[common], help="list the pair order")
    en.add_argument("--k-max", type=_positive, dest="k_max",
                    help="last index listed (default: depth_K)")
    pd = sub.add_parser("plot-data", parents=[common], help="export entry series")
    pd.add_argument("--manifest", type=Path, required=True)
    pd.add_argument("--select", default="all", help="entry index k, or 'all'")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.depth_k is not None:
        cfg.depth_K = args.depth_k
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_verify(args, out) -> int:
    cfg = load_config(args)
    report = harness.run_verify(cfg)
    table = report.table()
    out.write(table)
    if args.out:
        _write(args.out / "report.json", report.dumps())
        _write(args.out / "report.csv", table)
        if not args.no_figures:
            from .plotting import plot_report
            plot_report(report, args.out / "report.png")
    if not report.passed:
        print(f"failed properties: {', '.join(report.failures())}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_embed(args, out) -> int:
    cfg = load_config(args)
    out_dir = args.out or Path("lipflow_out")
    results = harness.run_embed(cfg, out_dir)
    lines = ["state,manifest,entries,uncertified"]
    status = EXIT_OK
    for res in results:
        point = res["point"]
        state = " ".join(f"{v:.17g}" for v in res["state"])
        lines.append(f"{state},{res['manifest']},{point.depth},{len(res['uncertified'])}")
        if not args.no_figures:
            from .plotting import plot_entries
            plot_entries(point, Path(res["manifest"]).with_name("entries.png"))
        try:
            point.require_certified()
        except CertificationError as exc:
            print(f"{res['manifest']}: {exc}", file=sys.stderr)
            status = EXIT_BUDGET
    table = "\n".join(lines) + "\n"
    out.write(table)
    _write(out_dir / "embed.csv", table)
    return status


def enumeration_table(k_max: int) -> str:
    lines = ["k,i,j,r_j"]
    for k in range(1, k_max + 1):
        p = pair_of(k)
        lines.append(f"{k},{p.i},{p.j},{r_of(p.j):.17g}")
    return "\n".join(lines) + "\n"


def cmd_enumerate(args, out) -> int:
    k_max = args.k_max
    if k_max is None:
        k_max = load_config(args).depth_K
    table = enumeration_table(k_max)
    out.write(table)
    if args.out:
        _write(args.out / "enumeration.csv", table)
    return EXIT_OK


def cmd_plotdata(args, out) -> int:
    if not args.manifest.is_file():
        raise ConfigError(f"manifest not found: {args.manifest}")
    point = UniversalPoint.read(args.manifest)
    doc = json.loads(args.manifest.read_text(encoding="utf-8"))
    available = [row["k"] for row in doc["pairs"]]
    if args.select == "all":
        chosen = available
    else:
        try:
            k = int(args.select)
        except ValueError:
            k = None
        if k not in available:
            raise ConfigError(f"no entry {args.select!r}; available: "
                              f"all, {available[0]}..{available[-1]}")
        chosen = [k]
    pos = {k: n for n, k in enumerate(available)}
    series = []
    for k in chosen:
        e = point.entries[pos[k]]
        p, _ = point.meta[pos[k]]
        series.append((k, p, e))
    if len(series) == 1:
        out.write(series[0][2].to_csv())
    else:
        lines = ["k,t,value"]
        for k, _, e in series:
            lines += [f"{k},{t:.17g},{v:.17g}" for t, v in zip(e.times, e.values)]
        out.write("\n".join(lines) + "\n")
    if args.out:
        for k, _, e in series:
            _write(args.out / f"series_{k:03d}.csv", e.to_csv())
        if not args.no_figures:
            from .plotting import plot_series
            plot_series([(f"k={k} ({p.i},{p.j})", e.times, e.values) for k, p, e in series],
                        args.out / "series.png")
    return EXIT_OK


COMMANDS = {"embed": cmd_embed, "verify": cmd_verify, "enumerate": cmd_enumerate,
            "plot-data": cmd_plotdata}


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are validation errors here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args, out)
    except CertificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, FlowError, FunctionSpaceError, EmbeddingError,
            TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
