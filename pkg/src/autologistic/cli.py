"""Command-line interface.

Subcommands: ``simulate`` (draw a trajectory), ``fit`` (EM pseudo-likelihood
fit), ``select`` (neighborhood search), ``study`` (variant-comparison
replicate study), ``surrogate`` (synthetic vineyard dataset). Every run is
fully determined by (config file, input files, --seed); the resolved
configuration is echoed and written next to the outputs.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, estimation, presets, sampling, selection, study
from .errors import (
    AutologisticError,
    CoalescenceError,
    ConfigError,
    DataValidationError,
    EstimationError,
    MonotonicityError,
)
from .lattice import GridShape, build_neighbor_graph
from .model import CovariateSeries, ModelParams
from .rng import RngStream
from .validation import as_neighborhood

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _shape_from_config(cfg: dict) -> GridShape:
    try:
        return GridShape(
            int(cfg["rows"]), int(cfg["cols"]),
            float(cfg.get("row_spacing", 1.0)), float(cfg.get("col_spacing", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid shape config {cfg!r}: {exc}") from exc


def _params_from_config(cfg: dict) -> ModelParams:
    try:
        return ModelParams(
            beta=np.asarray(cfg["beta"], dtype=float),
            rho1=float(cfg["rho1"]),
            rho2=float(cfg["rho2"]),
            centering=cfg.get("centering", "centered"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params config {cfg!r}: {exc}") from exc


def _sampler_from_config(cfg: dict) -> sampling.SamplerConfig:
    try:
        return sampling.SamplerConfig(
            mode=cfg.get("mode", "cftp"),
            gibbs_sweeps=int(cfg.get("gibbs_sweeps", 100)),
            cftp_start_sweeps=int(cfg.get("cftp_start_sweeps", 1)),
            cftp_max_sweeps=int(cfg.get("cftp_max_sweeps", 2**20)),
            initial_p0=float(cfg.get("initial_p0", 0.2)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sampler config {cfg!r}: {exc}") from exc


def _covariates_from_config(cfg: dict, n_sites: int, horizon: int) -> CovariateSeries:
    kind = cfg.get("kind", "none")
    if kind == "none":
        return CovariateSeries.none(n_sites, horizon)
    if kind == "tent":
        return CovariateSeries.temporal(presets.tent_covariate(horizon), n_sites, name="tent")
    if kind == "linear":
        return CovariateSeries.temporal(presets.linear_covariate(horizon), n_sites, name="trend")
    if kind == "values":
        values = np.asarray(cfg["values"], dtype=float)
        if values.shape != (horizon + 1,):
            raise ConfigError(
                f"covariate values must have length horizon+1={horizon + 1}, got {values.shape}"
            )
        return CovariateSeries.temporal(values, n_sites, name=cfg.get("name", "x1"))
    raise ConfigError(f"unknown covariate kind {kind!r}")


def _write_run_record(out_dir: Path, resolved: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(resolved, indent=2, default=str)
    (out_dir / "run.json").write_text(text)
    print(text)


def _spec_config(spec) -> dict:
    from .lattice import Rect

    if isinstance(spec, Rect):
        return {"rect": [spec.v_r, spec.v_c]}
    return {"ellipse": [spec.a_r, spec.a_c]}


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

    if "preset" in cfg or args.preset:
        name = args.preset or cfg["preset"]
        if name not in presets.ESTIMATION_PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from "
                              f"{sorted(presets.ESTIMATION_PRESETS)}")
        preset = presets.ESTIMATION_PRESETS[name](int(cfg.get("horizon", 15)))
        shape, spec = preset.shape, preset.neighborhood
        params, X, horizon = preset.params, preset.covariates, preset.horizon
        sampler = preset.sampler
    else:
        try:
            shape = _shape_from_config(cfg["shape"])
            spec = as_neighborhood(cfg["neighborhood"])
            params = _params_from_config(cfg["params"])
            horizon = int(cfg["horizon"])
        except KeyError as exc:
            raise ConfigError(f"simulate config is missing {exc}") from exc
        X = _covariates_from_config(cfg.get("covariates", {}), shape.n_sites, horizon)
        sampler = _sampler_from_config(cfg.get("sampler", {}))

    graph = build_neighbor_graph(shape, spec)
    Z = sampling.simulate_trajectory(horizon, X, params, graph, sampler, RngStream(seed))
    dataset = dataio.Dataset(shape=shape, Z=Z, X=X, metadata={
        "generator": "simulate", "seed": seed,
        "params": {"beta": params.beta.tolist(), "rho1": params.rho1,
                   "rho2": params.rho2, "centering": params.centering},
        "neighborhood": _spec_config(spec), "sampler_mode": sampler.mode,
    })
    paths = dataio.save_dataset(dataset, out_dir)
    _write_run_record(out_dir, {"command": "simulate", "seed": seed,
                                "outputs": {k: str(v) for k, v in paths.items()},
                                **dataset.metadata})
    return EXIT_OK


def _fit_table(result: estimation.FitResult) -> str:
    lines = [f"{'term':<16}{'estimate':>12}{'sd(UWU)':>12}{'sd(boot)':>12}"]
    theta = result.theta
    sd_s = result.sd_sandwich()
    sd_b = result.sd_bootstrap()
    for k, name in enumerate(result.column_names):
        s = f"{sd_s[k]:>12.4f}" if sd_s is not None else f"{'-':>12}"
        b = f"{sd_b[k]:>12.4f}" if sd_b is not None else f"{'-':>12}"
        lines.append(f"{name:<16}{theta[k]:>12.4f}{s}{b}")
    lines.append(
        f"log-PL {result.pl_value:.4f} over {result.n_cells} cells; "
        f"EM iterations {result.em_iterations}"
        f"{' (converged)' if result.converged else ' (NOT converged)'}"
    )
    return "\n".join(lines)


def _cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    dataset = dataio.load_dataset(
        args.field, args.covariates,
        row_spacing=float(cfg.get("row_spacing", 1.0)),
        col_spacing=float(cfg.get("col_spacing", 1.0)),
    )
    try:
        spec = as_neighborhood(cfg["neighborhood"])
    except KeyError as exc:
        raise ConfigError("fit config needs a 'neighborhood' entry") from exc
    graph = build_neighbor_graph(dataset.shape, spec)
    X = dataset.X
    past_graph = None
    if cfg.get("past_neighborhood"):
        past_graph = build_neighbor_graph(dataset.shape,
                                          as_neighborhood(cfg["past_neighborhood"]))
        X = X.with_column(dataio.build_past_neighbor_covariate(dataset.Z, past_graph),
                          dataio.PAST_NEIGHBOR_COLUMN)

    result = estimation.empl_fit(
        dataset.Z, X, graph,
        centering=cfg.get("centering", "centered"),
        fit_spatial=bool(cfg.get("fit_spatial", True)),
        max_em_iter=int(cfg.get("max_em_iter", 50)),
        em_tol=float(cfg.get("em_tol", 1e-6)),
        sandwich_rows=cfg.get("sandwich_rows", "centered"),
    )
    n_boot = int(cfg.get("bootstrap", 0))
    if n_boot:
        boot = estimation.bootstrap_variance(
            result, dataset.X, graph, n_boot, RngStream(seed),
            initial_slice=dataset.Z[:, 0],
            past_graph=past_graph,
            horizon=dataset.horizon,
            sampler=_sampler_from_config(cfg.get("bootstrap_sampler", {})),
            n_jobs=args.threads,
        )
        result.cov_bootstrap = boot.cov

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "fit.json").write_text(result.to_json(indent=2))
    print(_fit_table(result))
    _write_run_record(out_dir, {
        "command": "fit", "seed": seed, "field": str(args.field),
        "covariates": None if args.covariates is None else str(args.covariates),
        "neighborhood": _spec_config(spec),
        "centering": cfg.get("centering", "centered"),
        "bootstrap": n_boot,
        "outputs": {"fit": str(out_dir / "fit.json")},
    })
    return EXIT_OK


def _candidates_from_config(cfg: dict) -> selection.CandidateSet:
    try:
        if "rect" in cfg:
            sub = cfg["rect"]
            return selection.enumerate_rect_candidates(
                sub["v_r"], sub["v_c"],
                restrict_vc_le_vr=bool(sub.get("restrict_vc_le_vr", False)),
            )
        if "ellipse" in cfg:
            sub = cfg["ellipse"]
            return selection.enumerate_ellipse_candidates(
                sub["r"], sub["c"], sub.get("past_r"), sub.get("past_c"),
            )
        if "list" in cfg:
            cands = []
            for entry in cfg["list"]:
                past = entry.get("past")
                cands.append(selection.Candidate(
                    entry["label"], as_neighborhood(entry["instantaneous"]),
                    None if past is None else as_neighborhood(past),
                ))
            return selection.CandidateSet(cands)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid candidates config: {exc}") from exc
    raise ConfigError("select config needs candidates under 'rect', 'ellipse', or 'list'")


def _cmd_select(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    dataset = dataio.load_dataset(
        args.field, args.covariates,
        row_spacing=float(cfg.get("row_spacing", 1.0)),
        col_spacing=float(cfg.get("col_spacing", 1.0)),
    )
    candidates = _candidates_from_config(cfg.get("candidates", cfg))
    report = selection.select_by_pl(
        dataset.Z, dataset.X, dataset.shape, candidates,
        centering=cfg.get("centering", "centered"), n_jobs=args.threads,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(out_dir / "selection.csv", index=False)
    (out_dir / "selection.json").write_text(json.dumps(report.to_dict(), indent=2))
    print(f"winner: {report.winner}")
    for lab in report.ranking[:10]:
        print(f"  {report.rank_of(lab):>3}. {lab:<28} log-PL {report.results[lab].pl_value:.3f}")
    _write_run_record(out_dir, {
        "command": "select", "field": str(args.field),
        "n_candidates": len(candidates), "winner": report.winner,
        "failures": [lab for lab, _ in report.failures],
        "outputs": {"csv": str(out_dir / "selection.csv"),
                    "json": str(out_dir / "selection.json")},
    })
    return EXIT_OK


def _cmd_study(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    name = args.preset or cfg.get("preset")
    if name is None or name not in presets.STUDY_PRESETS:
        raise ConfigError(f"study needs --preset from {sorted(presets.STUDY_PRESETS)}")
    config = presets.STUDY_PRESETS[name](
        n_replicates=int(cfg.get("n_replicates", 100)),
        horizon=int(cfg.get("horizon", 50)),
        grid=cfg.get("grid", "bands"),
    )
    series = study.replicate_study(config, RngStream(seed))
    out_dir.mkdir(parents=True, exist_ok=True)
    series.to_frame().to_csv(out_dir / "study_series.csv", index=False)
    series.summary_frame().to_csv(out_dir / "study_summary.csv", index=False)
    _write_run_record(out_dir, {
        "command": "study", "seed": seed, "preset": name,
        "n_replicates": config.n_replicates, "horizon": config.horizon,
        "rho_grid": list(config.rho_grid), "variants": list(config.variants),
        "outputs": {"series": str(out_dir / "study_series.csv"),
                    "summary": str(out_dir / "study_summary.csv")},
    })
    return EXIT_OK


def _cmd_surrogate(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    kwargs = {}
    if "rows" in cfg:
        kwargs["rows"] = int(cfg["rows"])
    if "cols" in cfg:
        kwargs["cols"] = int(cfg["cols"])
    if "years" in cfg:
        kwargs["years"] = int(cfg["years"])
    if "row_spacing" in cfg:
        kwargs["row_spacing"] = float(cfg["row_spacing"])
    if "col_spacing" in cfg:
        kwargs["col_spacing"] = float(cfg["col_spacing"])
    if "initial_p0" in cfg:
        kwargs["initial_p0"] = float(cfg["initial_p0"])
    if "params" in cfg:
        kwargs["params"] = _params_from_config(cfg["params"])
    if "instantaneous" in cfg:
        kwargs["instantaneous"] = as_neighborhood(cfg["instantaneous"])
    if "past" in cfg:
        kwargs["past"] = as_neighborhood(cfg["past"])
    if "sampler" in cfg:
        kwargs["sampler"] = _sampler_from_config(cfg["sampler"])
    dataset = dataio.generate_surrogate_vineyard(RngStream(seed), **kwargs)
    paths = dataio.save_dataset(dataset, out_dir)
    _write_run_record(out_dir, {"command": "surrogate", "seed": seed,
                                "outputs": {k: str(v) for k, v in paths.items()},
                                **dataset.metadata})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autologistic",
        description="Centered spatio-temporal autologistic models on lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="parallel workers where supported")
        p.add_argument("--out", default="out", help="output directory")
        if needs_data:
            p.add_argument("--field", required=True, help="field CSV (t,row,col,z)")
            p.add_argument("--covariates", default=None, help="covariate CSV")

    p = sub.add_parser("simulate", help="draw a trajectory from a configured model")
    common(p)
    p.add_argument("--preset", default=None, help="benchmark preset (model1 | model2)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit the model by EM pseudo-likelihood")
    common(p, needs_data=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("select", help="rank neighborhood structures by log-PL")
    common(p, needs_data=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("study", help="variant-comparison replicate study")
    common(p)
    p.add_argument("--preset", default=None, help="study preset (model1 | model2)")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("surrogate", help="generate a synthetic vineyard dataset")
    common(p)
    p.set_defaults(func=_cmd_surrogate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as exc:
        print(f"data validation error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, CoalescenceError, MonotonicityError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AutologisticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
