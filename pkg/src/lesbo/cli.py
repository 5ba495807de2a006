"""Command line entry point.

    lesbo run --config experiment.yaml
    lesbo summarize --input 'results/*.csv' --output summary.csv

Exit status: 0 on success, 1 on a configuration error, 2 on a runtime failure.
``LESBO_OUTPUT_DIR`` overrides the configured output directory.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from pathlib import Path

from .bench import run_experiment
from .config import ConfigError, ExperimentConfig, parse_config
from .report import read_records, split_stem, summarize, write_records, write_summary

log = logging.getLogger("lesbo")

OUTPUT_ENV = "LESBO_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def run(config: ExperimentConfig) -> int:
    out = Path(os.environ.get(OUTPUT_ENV) or config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_RUNTIME

    status = EXIT_OK
    summary_rows = []
    for task in config.tasks:
        for algo in config.algorithms:
            name = f"{task.label}__{algo.name.value}"
            log.info("running %s on %d seeds", name, len(config.seeds))
            results = []
            for seed in config.seeds:
                try:
                    results += run_experiment(task, algo.name, config.protocol, config.budget, [seed],
                                              config.settings(algo))
                except Exception as exc:  # noqa: BLE001 - record and continue with the next seed
                    log.error("%s seed %d failed: %s", name, seed, exc)
                    status = EXIT_RUNTIME
            done = [r for r in results if not r.failed]
            failed = [r for r in results if r.failed]
            try:
                write_records(out / f"{name}.csv", [r.records for r in done])
                if failed:
                    status = EXIT_RUNTIME
                    write_records(out / f"{name}.failed.csv", [r.records for r in failed])
                for r in results:
                    if r.certificate:
                        cert_dir = out / "certificates"
                        cert_dir.mkdir(exist_ok=True)
                        with open(cert_dir / f"{name}__seed{r.seed}.json", "w") as fh:
                            json.dump(r.certificate, fh, indent=2)
            except OSError as exc:
                log.error("writing results for %s failed: %s", name, exc)
                return EXIT_RUNTIME
            if done:
                summary_rows += summarize([r.records for r in done], task.label, algo.name.value)
    try:
        write_summary(out / "summary.csv", summary_rows)
    except OSError as exc:
        log.error("writing summary failed: %s", exc)
        return EXIT_RUNTIME
    return status


def summarize_files(pattern: str, output: str) -> int:
    paths = sorted(p for p in glob.glob(pattern) if not p.endswith(".failed.csv"))
    paths = [p for p in paths if Path(p).name != Path(output).name]
    if not paths:
        log.error("no CSV files match %s", pattern)
        return EXIT_RUNTIME
    rows = []
    for p in paths:
        task, algo = split_stem(p)
        streams = read_records(p)
        if streams:
            rows += summarize(streams, task, algo)
    write_summary(output, rows)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lesbo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a YAML config")
    p_run.add_argument("--config", required=True)
    p_sum = sub.add_parser("summarize", help="percentile summary of run CSVs")
    p_sum.add_argument("--input", required=True, help="glob of run CSV files")
    p_sum.add_argument("--output", required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "run":
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            config = parse_config(text)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run(config)
    try:
        return summarize_files(args.input, args.output)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
