"""Operator command line: scenario runs, metric reports, serving, fitting.

    crs run --scenario FILE [--scenario FILE ...] [--catalog FILE]
            [--provider mock|http] [--mock-script FILE]
            [--report-out FILE] [--store DIR] [--parallel]
    crs report --store DIR [--since TIMESTAMP] [--json-out FILE]
    crs serve --config FILE
    crs fit-paths --responses FILE [--model FILE] [--json-out FILE]
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence


def _cmd_run(args: argparse.Namespace) -> int:
    from .catalog import load_catalog_jsonl
    from .gateway import HttpChatProvider, MockProvider
    from .simulator import Scenario, run_scenario
    from .telemetry import MetricsStore

    try:
        scenarios = [Scenario.load(path) for path in args.scenario]
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load scenario: {exc}", file=sys.stderr)
        return 2

    catalog = None
    if args.catalog:
        try:
            catalog, _ = load_catalog_jsonl(args.catalog)
        except OSError as exc:
            print(f"error: cannot load catalog: {exc}", file=sys.stderr)
            return 2

    store = MetricsStore(args.store) if args.store else None

    def run_one(scenario):
        provider = None
        if args.provider == "http":
            provider = HttpChatProvider()
        elif args.mock_script:
            provider = MockProvider.from_script_file(args.mock_script)
        return run_scenario(scenario, provider=provider, store=store, catalog=catalog)

    if args.parallel and len(scenarios) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(8, len(scenarios))) as pool:
            reports = list(pool.map(run_one, scenarios))
    else:
        reports = [run_one(scenario) for scenario in scenarios]

    for report in reports:
        print(report.render_text())
    if args.report_out:
        payload = (
            reports[0].to_json()
            if len(reports) == 1
            else {"scenarios": [r.to_json() for r in reports]}
        )
        with open(args.report_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all(report.passed for report in reports) else 1


def _cmd_report(args: argparse.Namespace) -> int:
    from .catalog import parse_timestamp
    from .telemetry import MetricsFilter, MetricsStore, aggregate

    import os

    if not os.path.isdir(args.store):
        print(f"error: store directory not found: {args.store}", file=sys.stderr)
        return 2
    store = MetricsStore(args.store)
    metrics_filter = MetricsFilter(
        since=parse_timestamp(args.since).timestamp() if args.since else None
    )
    report = aggregate(store, metrics_filter)
    print(report.to_text())
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .config import AppConfig
    from .service import build_app

    config = AppConfig.load(args.config)
    app = build_app(config)
    uvicorn.run(app, host=config.bind_host, port=config.bind_port)
    return 0


def _cmd_fit_paths(args: argparse.Namespace) -> int:
    from .resque import (
        PathModel,
        SingularDesign,
        default_path_model,
        fit_path_model,
        load_responses,
    )

    try:
        responses = load_responses(args.responses)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load responses: {exc}", file=sys.stderr)
        return 2
    if args.model:
        with open(args.model, encoding="utf-8") as fh:
            model = PathModel.from_json(json.load(fh))
    else:
        model = default_path_model()
    try:
        fit = fit_path_model(responses, model)
    except (SingularDesign, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    rows = fit.to_json()["regressions"]
    header = (
        f"{'Independent variable':<28}{'Dependent variable':<24}"
        f"{'B':>10}{'β':>10}{'SE':>10}{'p-value':>12}"
    )
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['Independent variable']:<28}{row['Dependent variable']:<24}"
            f"{row['Unstandardized estimate (B)']:>10.3f}"
            f"{row['Standardized estimate (β)']:>10.3f}"
            f"{row['Standard Error']:>10.3f}"
            f"{row['p-value']:>12.3g}"
        )
    for dependent, r2 in fit.to_json()["r_squared"].items():
        print(f"R² {dependent}: {r2:.3f}")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(fit.to_json(), fh, ensure_ascii=False, indent=2)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay scripted scenarios")
    run.add_argument("--scenario", required=True, action="append",
                     help="scenario file; repeatable")
    run.add_argument("--catalog", help="override the scenario's catalog fixture")
    run.add_argument("--provider", choices=("mock", "http"), default="mock")
    run.add_argument("--mock-script", help="override the scenario's mock script")
    run.add_argument("--report-out", help="write the JSON report here")
    run.add_argument("--store", help="metrics store directory")
    run.add_argument("--parallel", action="store_true",
                     help="run independent scenarios concurrently")
    run.set_defaults(func=_cmd_run)

    report = sub.add_parser("report", help="print the token/latency report")
    report.add_argument("--store", required=True)
    report.add_argument("--since", help="ISO timestamp lower bound")
    report.add_argument("--json-out")
    report.set_defaults(func=_cmd_report)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--config", help="JSON config file")
    serve.set_defaults(func=_cmd_serve)

    fit = sub.add_parser("fit-paths", help="estimate the survey path model")
    fit.add_argument("--responses", required=True)
    fit.add_argument("--model", help="JSON path-model structure")
    fit.add_argument("--json-out")
    fit.set_defaults(func=_cmd_fit_paths)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
