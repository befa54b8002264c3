"""Command-line pipeline: synth -> fit -> shakers -> eval / backtest.

Usage:
  shakernet synth    --config run.yaml --output out/synth
  shakernet fit      --config run.yaml --output out/fit
  shakernet shakers  --config run.yaml --bundle out/fit --output out/shakers
  shakernet eval     --config run.yaml --bundle out/fit --output out/eval
  shakernet backtest --config run.yaml --bundle out/fit --output out/backtest

Exit codes: 0 success, 2 config error, 3 data error, 4 solver diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .bundle import read_bundle, write_bundle
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, ShakerNetError, SolverError, UnknownView
from .evalkit import predict_trend, run_backtest, screening, smape, write_summary, write_trend_csv
from .panel import CsvSchema, PanelSeries, export_csv, ingest_csv, make_lag_pair, standardize
from .phase1 import fit_all
from .phase2 import fit_multiview
from .shaker import detect_shakers
from .synth import generate

log = logging.getLogger("shakernet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
INDEX_ENTITY = "_index"
DAILY_VOL = 0.02


def _write_config(cfg: RunConfig, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(cfg.echo(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_panel(cfg: RunConfig, section: str, transform: str = None, views=None) -> PanelSeries:
    path = cfg.path(section, "panel")
    if path is None:
        raise ConfigError("no panel file given", field=f"{section}.panel")
    data = cfg["data"]
    try:
        return ingest_csv(
            path, CsvSchema(**data["columns"]), transform or data["transform"], data["fill"], views,
        )
    except FileNotFoundError:
        raise DataError(f"panel file {path} not found") from None
    except UnknownView as exc:
        raise ConfigError(str(exc), field=f"{section}.views") from None


def _main_view(cfg: RunConfig, views) -> str:
    view = cfg["data"]["main_view"]
    if view is None:
        return views[0]
    if view not in views:
        raise ConfigError(f"view {view!r} not in {list(views)}", field="data.main_view")
    return view


def _report(cfg: RunConfig, bundle):
    sh = cfg["shaker"]
    W = bundle.matrix(bundle.main_view, sh["source"])
    return detect_shakers(W, sh["r"], sh["top"], bundle.entities, sh["source"]), W


def cmd_synth(cfg: RunConfig, out: Path, figures: bool) -> int:
    p = cfg["synth"]
    inst = generate(seed=cfg.seed, **p)
    inst.export(out / "panel.csv", out / "truth.json")
    # positive price levels: states rescaled to ~2% daily log-returns, plus an equal-weight index
    vals = inst.panel.values
    vol = float(vals.std()) or 1.0
    prices = 100.0 * np.exp(np.cumsum(DAILY_VOL * vals / vol, axis=1))
    index = prices.mean(axis=2, keepdims=True)
    price_panel = PanelSeries(
        inst.panel.views, (INDEX_ENTITY,) + inst.panel.entities, inst.panel.timestamps,
        np.concatenate([index, prices], axis=2),
    )
    export_csv(price_panel, out / "prices.csv")
    _write_config(cfg, out)
    if figures:
        plotting.panel_preview(inst.panel, out / "figures" / "panel_preview.png")
    print(f"synth: N={p['n']} V={p['v']} S={p['s']} seed={cfg.seed} scale={inst.scale:.6g}")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path, figures: bool) -> int:
    data = cfg["data"]
    panel = _read_panel(cfg, "data", views=data["views"])
    main_view = _main_view(cfg, panel.views)
    panel = panel.restrict(data["window"])
    if data["standardize"]:
        panel = standardize(panel)
    pairs = [make_lag_pair(panel, v) for v in panel.views]
    p1 = fit_all(pairs, cfg.phase1(), jobs=cfg["jobs"])
    p2 = fit_multiview(p1, cfg.phase2())
    write_bundle(
        out, views=panel.views, entities=panel.entities, timestamps=panel.timestamps,
        main_view=main_view, phase1=p1, phase2=p2, config=cfg.echo(),
    )
    if figures:
        plotting.convergence_plot({v: p1.fits[v].history for v in p1.views}, p2.history,
                                  out / "figures" / "convergence.png")
    for v in p1.views:
        f = p1.fits[v]
        print(f"phase1 {v}: iterations={f.iterations} converged={f.converged} rank={f.history[-1]['rank']}")
    print(f"phase2: iterations={p2.iterations} converged={p2.converged}")
    return EXIT_OK


def cmd_shakers(cfg: RunConfig, out: Path, figures: bool, bundle_dir) -> int:
    bundle = read_bundle(bundle_dir)
    report, _ = _report(cfg, bundle)
    report.write(out / "shakers.json", out / "shakers.csv")
    _write_config(cfg, out)
    if figures:
        plotting.shaker_bar(report, out / "figures" / "shakers.png")
    print("shakers: " + " ".join(report.shakers))
    return EXIT_OK


def _price_panel(cfg: RunConfig, bundle, section: str):
    source = section if cfg[section]["panel"] else "data"
    panel = _read_panel(cfg, source, transform="raw")
    view = cfg["eval"]["view"] or bundle.main_view
    if view not in panel.views:
        raise ConfigError(f"view {view!r} not in price panel {list(panel.views)}", field="eval.view")
    missing = [e for e in bundle.entities if e not in panel.entities]
    if missing:
        raise DataError(f"price panel lacks fitted entities {missing[:5]}")
    return panel, view


def _backtest(cfg, bundle, report, W, panel, view, out, figures):
    bt = cfg.backtest()
    window = cfg["backtest"]["window"]
    prices = panel.restrict(window, views=[view], entities=bundle.entities)
    pairs = screening(report, W, bt)
    result = run_backtest(prices, pairs, bt, view)
    result.write_log(out / "backtest_log.csv")
    if figures:
        plotting.equity_plot(result, out / "figures" / "equity.png")
    return result, pairs


def cmd_backtest(cfg: RunConfig, out: Path, figures: bool, bundle_dir) -> int:
    bundle = read_bundle(bundle_dir)
    report, W = _report(cfg, bundle)
    panel, view = _price_panel(cfg, bundle, "eval")
    result, pairs = _backtest(cfg, bundle, report, W, panel, view, out, figures)
    write_summary(out / "summary.json", final_value=result.final_value, total_return=result.total_return,
                  pairs=[list(p) for p in pairs])
    _write_config(cfg, out)
    print(f"backtest: final_value={result.final_value:.2f} return={result.total_return:+.4%}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path, figures: bool, bundle_dir) -> int:
    bundle = read_bundle(bundle_dir)
    report, W = _report(cfg, bundle)
    ev = cfg["eval"]
    panel, view = _price_panel(cfg, bundle, "eval")
    truth_name = ev["truth"]
    if truth_name is None:
        raise ConfigError("name the ground-truth series", field="eval.truth")
    if ev["truth_panel"]:
        path = cfg.path("eval", "truth_panel")
        try:
            tpanel = ingest_csv(path, CsvSchema(**cfg["data"]["columns"]), "raw", cfg["data"]["fill"])
        except FileNotFoundError:
            raise DataError(f"truth panel {path} not found") from None
    else:
        tpanel = panel
    if truth_name not in tpanel.entities:
        raise ConfigError(f"series {truth_name!r} not in truth panel", field="eval.truth")
    window = ev["window"]
    sub = panel.restrict(window, views=[view], entities=bundle.entities)
    tview = view if view in tpanel.views else tpanel.views[0]
    tsub = tpanel.restrict(window, views=[tview], entities=[truth_name])
    if tsub.timestamps != sub.timestamps:
        raise DataError("truth series and price panel cover different timestamps")
    predicted, truth = predict_trend(sub.view_matrix(view), sub.timestamps, report,
                                     tsub.view_matrix(tview)[:, 0])
    score = smape(predicted, truth)
    write_trend_csv(predicted, truth, out / "trend.csv")
    result, pairs = _backtest(cfg, bundle, report, W, panel, view, out, figures)
    write_summary(out / "summary.json", smape=score, points=len(truth), shakers=list(report.shakers),
                  final_value=result.final_value, total_return=result.total_return,
                  pairs=[list(p) for p in pairs])
    _write_config(cfg, out)
    if figures:
        plotting.trend_plot(predicted, truth, out / "figures" / "trend.png")
    print(f"eval: sMAPE={score:.6f} over {len(truth)} points; backtest return={result.total_return:+.4%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--jobs", type=int, default=None, help="worker cap for per-view solves")
    common.add_argument("--output", type=Path, required=True, help="output directory")
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="shakernet", description="Multi-view market-shaker detection")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a planted synthetic panel")
    sub.add_parser("fit", parents=[common], help="run both solver phases and write a result bundle")
    for name, text in (("shakers", "rank shakers from a bundle"),
                       ("eval", "trend sMAPE plus backtest from a bundle"),
                       ("backtest", "screening/timing backtest from a bundle")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--bundle", type=Path, required=True, help="directory written by 'fit'")
    return parser


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "shakers": cmd_shakers, "eval": cmd_eval, "backtest": cmd_backtest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            overrides["jobs"] = args.jobs
        cfg = load_config(args.config, overrides)
        out = args.output
        out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        extra = (args.bundle,) if hasattr(args, "bundle") else ()
        return fn(cfg, out, not args.no_figures, *extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ShakerNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
