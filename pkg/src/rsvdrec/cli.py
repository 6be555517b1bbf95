"""Command-line driver: ``factorize``, ``evaluate`` and ``sweep``.

Options can also come from a ``key=value`` file given with ``--config``
(keys use the long option name without dashes, e.g. ``n_mask=90``);
command-line flags override the file.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .completion import CompletionConfig, ObservedMatrix, em_complete
from .core import RsvdConfig, rsvd_als, rsvd_closed_form, shrink_singular_values
from .datasets import (
    binarize,
    filter_users_by_rating_count,
    load_csv_triples,
    load_movielens_100k,
    mask_out,
)
from .errors import DecompositionError, InputError, SolveError
from .evaluation import average_runs, evaluate, f1_summary, write_pr_curve
from .linalg import read_matrix_csv, thin_svd, write_matrix_csv
from .reporting import write_table

logger = logging.getLogger("rsvdrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SOLVER_TAGS = {"closed": "closed_form", "als": "als"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything one ``evaluate`` run depends on."""

    input: Path
    format: str = "movielens"
    k: int = 3
    lam: float = 0.0
    solver: str = "closed"
    mask_t: int = 100
    n_mask: int = 90
    seed: int = 0
    runs: int = 1
    em_max_iter: int = 200
    em_tol: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 500
    out: Path = Path("out")
    one_based: bool = False
    sentinel: float = 99.0
    min_ratings: int | None = None
    max_ratings: int | None = None
    init_fill: str = "column_mean"
    unrated: str = "missing"
    averaging: str = "macro"
    exclude_train: bool = True

    def validate(self) -> None:
        if not Path(self.input).is_file():
            raise InputError(f"input file not found: {self.input}")
        if self.format not in ("movielens", "triples", "grid", "dense"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.solver not in SOLVER_TAGS:
            raise UsageError(f"unknown solver {self.solver!r}")
        if self.unrated not in ("missing", "zero"):
            raise UsageError(f"--unrated must be 'missing' or 'zero', got {self.unrated!r}")
        if self.runs < 1:
            raise UsageError("--runs must be at least 1")
        self.rsvd_config()
        self.completion_config()

    def rsvd_config(self) -> RsvdConfig:
        return RsvdConfig(self.k, self.lam, self.max_iter, self.tol, self.seed)

    def completion_config(self) -> CompletionConfig:
        return CompletionConfig(
            self.rsvd_config(), SOLVER_TAGS[self.solver], self.em_max_iter, self.em_tol, self.init_fill
        )

    def provenance(self) -> str:
        keys = ("input", "format", "k", "lam", "solver", "mask_t", "n_mask", "seed", "runs",
                "em_max_iter", "em_tol", "unrated", "init_fill")
        d = asdict(self)
        return "\n".join(f"{key}={d[key]}" for key in keys)


# --------------------------------------------------------------------------
# argument handling

COMMON = [
    ("--input", dict(type=Path)),
    ("--format", dict(choices=["movielens", "triples", "grid", "dense"])),
    ("--k", dict(type=int)),
    ("--solver", dict(choices=["closed", "als"])),
    ("--mask-t", dict(type=int)),
    ("--n-mask", dict(type=int)),
    ("--seed", dict(type=int)),
    ("--runs", dict(type=int)),
    ("--em-max-iter", dict(type=int)),
    ("--em-tol", dict(type=float)),
    ("--tol", dict(type=float)),
    ("--max-iter", dict(type=int)),
    ("--out", dict(type=Path)),
    ("--one-based", dict(action="store_const", const=True)),
    ("--sentinel", dict(type=float)),
    ("--min-ratings", dict(type=int)),
    ("--max-ratings", dict(type=int)),
    ("--init-fill", dict(choices=["column_mean", "row_mean", "global_mean"])),
    ("--unrated", dict(choices=["missing", "zero"])),
    ("--averaging", dict(choices=["macro", "micro"])),
    ("--include-train", dict(action="store_const", const=True)),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsvdrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add_common(p):
        p.add_argument("--config", type=Path, help="key=value file; flags override it")
        for flag, kw in COMMON:
            p.add_argument(flag, default=None, **kw)

    p = sub.add_parser("factorize", help="RSVD of a dense CSV matrix")
    add_common(p)
    p.add_argument("--lambda", dest="lam", default=None,
                   help="regularization weight; a comma list writes one subdirectory per value")

    p = sub.add_parser("evaluate", help="mask-out, complete and score a rating dataset")
    add_common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    p = sub.add_parser("sweep", help="evaluate over a (k, lambda) grid")
    add_common(p)
    p.add_argument("--k-list", default=None, help="comma-separated ranks")
    p.add_argument("--lambda-list", default=None, help="comma-separated weights")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_CASTS = {
    "input": Path, "out": Path, "k": int, "lam": str, "mask_t": int, "n_mask": int,
    "seed": int, "runs": int, "em_max_iter": int, "em_tol": float, "tol": float,
    "max_iter": int, "sentinel": float, "min_ratings": int, "max_ratings": int,
    "one_based": lambda s: s.lower() in ("1", "true", "yes"),
    "include_train": lambda s: s.lower() in ("1", "true", "yes"),
}


def merged_options(args: argparse.Namespace) -> dict:
    opts: dict = {}
    if getattr(args, "config", None) is not None:
        for key, value in read_config_file(args.config).items():
            key = "lam" if key == "lambda" else key
            try:
                opts[key] = _CASTS.get(key, str)(value)
            except ValueError:
                raise UsageError(f"bad value for {key}: {value!r}") from None
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if value is not None:
            opts[key] = value
    return opts


def run_config_from(opts: dict, lam: float | None = None, k: int | None = None) -> RunConfig:
    if "input" not in opts:
        raise UsageError("--input is required")
    fields = {f for f in RunConfig.__dataclass_fields__}
    kw = {key: opts[key] for key in fields & opts.keys() if key not in ("lam", "k")}
    if "include_train" in opts:
        kw["exclude_train"] = not opts["include_train"]
    if lam is None and "lam" in opts:
        lam = float(opts["lam"])
    if k is None and "k" in opts:
        k = int(opts["k"])
    cfg = RunConfig(**kw, lam=lam if lam is not None else 0.0, k=k if k is not None else 3)
    cfg.validate()
    return cfg


def _parse_list(text: str | None, cast, name: str) -> list:
    if text is None:
        raise UsageError(f"{name} is required")
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    if not items:
        raise UsageError(f"{name} must not be empty")
    try:
        return [cast(s) for s in items]
    except ValueError:
        raise UsageError(f"bad value in {name}: {text!r}") from None


def _tag(x: float) -> str:
    return f"{x:g}"


# --------------------------------------------------------------------------
# commands


def cmd_factorize(opts: dict) -> int:
    if "input" not in opts:
        raise UsageError("--input is required")
    lams = _parse_list(opts.get("lam", "0"), float, "--lambda")
    X = read_matrix_csv(opts["input"])
    out = Path(opts.get("out", "out"))
    solver = opts.get("solver", "closed")
    for lam in lams:
        cfg = RsvdConfig(
            int(opts.get("k", 3)), lam, int(opts.get("max_iter", 500)),
            float(opts.get("tol", 1e-8)), int(opts.get("seed", 0)),
        )
        target = out / f"lambda_{_tag(lam)}" if len(lams) > 1 else out
        target.mkdir(parents=True, exist_ok=True)
        prov = f"input={opts['input']}\nk={cfg.k}\nlambda={lam}\nsolver={solver}\nseed={cfg.seed}"
        if solver == "als":
            sol = rsvd_als(X, cfg)
            write_table(
                target / "convergence.csv", ["iter", "J1", "dV"],
                [(i + 1, j, d) for i, (j, d) in enumerate(zip(sol.objective_history, sol.dv_history))],
                prov + f"\nstatus={sol.status}",
            )
        else:
            svd = thin_svd(X, cfg.k)
            sol = rsvd_closed_form(X, cfg.k, lam, svd=svd)
            spec = shrink_singular_values(svd.sigma, lam, cfg.k)
            write_table(target / "spectrum.csv", ["sigma", "omega"],
                        list(zip(svd.sigma, spec.omega)), prov + f"\neffective_rank={spec.effective_rank}")
        write_matrix_csv(target / "U.csv", sol.U, prov)
        write_matrix_csv(target / "V.csv", sol.V, prov)
        logger.info("lambda=%g: J1=%.10g (%s)", lam, sol.objective, sol.status)
    return EXIT_OK


def load_observed(cfg: RunConfig) -> ObservedMatrix:
    if cfg.format == "movielens":
        triples = load_movielens_100k(cfg.input)
    elif cfg.format == "dense":
        return ObservedMatrix.from_dense(read_matrix_csv(cfg.input))
    else:
        triples = load_csv_triples(cfg.input, cfg.format, cfg.sentinel, cfg.one_based)
    if cfg.min_ratings is not None or cfg.max_ratings is not None:
        triples = filter_users_by_rating_count(triples, cfg.min_ratings, cfg.max_ratings)
    return binarize(triples)


def _training_matrix(train: ObservedMatrix, unrated: str) -> ObservedMatrix:
    if unrated == "missing":
        return train
    # unrated cells become observed zeros
    return ObservedMatrix.from_dense(train.dense(0.0))


def run_evaluate(cfg: RunConfig, observed: ObservedMatrix | None = None):
    """Run ``cfg.runs`` seeded mask-outs; return the averaged report and per-run results."""
    observed = load_observed(cfg) if observed is None else observed
    reports = []
    results = []
    for r in range(cfg.runs):
        seed = cfg.seed + r
        masked = mask_out(observed, cfg.mask_t, cfg.n_mask, seed)
        train = _training_matrix(masked.train, cfg.unrated)
        ccfg = cfg.completion_config()
        result = em_complete(train, CompletionConfig(
            RsvdConfig(cfg.k, cfg.lam, cfg.max_iter, cfg.tol, seed), ccfg.solver,
            ccfg.em_max_iter, ccfg.em_tol, ccfg.init_fill,
        ))
        report = evaluate(result, masked, exclude_train=cfg.exclude_train, averaging=cfg.averaging)
        reports.append(report)
        results.append((seed, masked, result, report))
    return average_runs(reports), results


def write_evaluation(cfg: RunConfig, summary, results) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = cfg.provenance()
    for seed, masked, result, report in results:
        run_dir = out / f"run_{seed}"
        run_dir.mkdir(exist_ok=True)
        run_prov = prov + f"\nrun_seed={seed}"
        write_pr_curve(run_dir / "pr_curve.csv", report, run_prov)
        (run_dir / "f1.txt").write_text(f1_summary(report, {
            "seed": seed, "n_users": len(masked.ground_truth),
            "em_iterations": result.em_iterations, "em_converged": result.converged,
        }))
        write_table(
            run_dir / "em_convergence.csv", ["iter", "dX", "dX_model", "J1"],
            [(i + 1, dx, dm, j) for i, (dx, dm, j) in enumerate(
                zip(result.dx_history, result.model_dx_history, result.objective_history))],
            run_prov,
        )
        if cfg.solver == "als":
            X_hat = result.X_hat
            reference = thin_svd(X_hat, cfg.k)
            probe = rsvd_als(X_hat, RsvdConfig(cfg.k, cfg.lam, cfg.max_iter, cfg.tol, seed), reference=reference)
            write_table(
                run_dir / "subspace_residuals.csv", ["iter", "r1", "r2"],
                [(i + 1, r1, r2) for i, (r1, r2) in enumerate(probe.subspace_history)],
                run_prov,
            )
    write_pr_curve(out / "pr_curve.csv", summary, prov)
    (out / "f1.txt").write_text(f1_summary(summary))


def cmd_evaluate(opts: dict) -> int:
    cfg = run_config_from(opts)
    summary, results = run_evaluate(cfg)
    write_evaluation(cfg, summary, results)
    logger.info("F1 at N=n_mask: %.4f (%d runs)", summary.f1_at_nmask, summary.runs_averaged)
    return EXIT_OK


def cmd_sweep(opts: dict) -> int:
    ks = _parse_list(opts.get("k_list"), int, "--k-list")
    lams = _parse_list(opts.get("lambda_list"), float, "--lambda-list")
    base = run_config_from(opts, lam=lams[0], k=ks[0])
    observed = load_observed(base)
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(base.input).stem
    rows = []
    status = EXIT_OK
    for k in ks:
        row: list = [name, k]
        for lam in lams:
            cfg = run_config_from(opts, lam=lam, k=k)
            cfg.out = out / f"k{k}_lambda{_tag(lam)}"
            try:
                summary, results = run_evaluate(cfg, observed)
                write_evaluation(cfg, summary, results)
                row.append(round(summary.f1_at_nmask, 6))
            except (InputError, DecompositionError, SolveError) as exc:
                logger.error("cell k=%d lambda=%g failed: %s", k, lam, exc)
                row.append("nan")
                status = status or _exit_code(exc)
        rows.append(row)
    write_table(out / "f1_table.csv", ["dataset", "k"] + [f"lambda={_tag(x)}" for x in lams], rows,
                base.provenance())
    return status


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (DecompositionError, SolveError)):
        return EXIT_NUMERIC
    return EXIT_DATA


COMMANDS = {"factorize": cmd_factorize, "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2),
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command is None:
            raise UsageError("a subcommand is required (factorize, evaluate, sweep)")
        return COMMANDS[args.command](merged_options(args))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DecompositionError, SolveError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
