"""Command-line front end.

    emleak generate   --config run.cfg --output-dir out
    emleak attack     --config run.cfg
    emleak sweep      --leakage-sweep 3.3,1,0.3,0.1,0.01
    emleak psd        out/traces/test_0.emtr --segment-length 100000
    emleak datavolume --preset fast
    emleak farfield
    emleak inspect    out/attack/checkpoint.emck

Every flag mirrors an ExperimentConfig field; flags override values from
``--config``. The effective config is written next to the outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as eio
from .attack import run_profiled_attack
from .dsp import align_by_trigger, bartlett_psd
from .experiments import ExperimentConfig, datavolume, farfield, make_traces, preset, sweep

log = logging.getLogger("emleak")

TRACE_DIR = "traces"
HISTORY_FIELDS = ("epoch", "train_loss", "val_accuracy")  # wall-clock time stays out of the payload


def load_config(args) -> ExperimentConfig:
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            overrides[f.name] = v
    if args.config:
        return ExperimentConfig.from_text(Path(args.config).read_text(), **overrides)
    return ExperimentConfig.from_mapping(overrides)


def _out(cfg: ExperimentConfig, sub: str = "") -> Path:
    p = Path(cfg.output_dir) / sub if sub else Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _save_config(cfg: ExperimentConfig, directory: Path) -> None:
    (directory / "config.cfg").write_text(cfg.to_text())


# --- verbs -------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> Path:
    """Write the training, validation and test traces of ``cfg.leakage_strength``."""
    out = _out(cfg, TRACE_DIR)
    ts = make_traces(cfg, delayed=cfg.random_delay)
    for t in [*ts.train, ts.val, *ts.tests]:
        eio.write_trace(out / f"{t.name}.emtr", t)
    _save_config(cfg, out)
    log.info("wrote %d traces to %s", len(ts.train) + 1 + len(ts.tests), out)
    return out


def _load_split(cfg: ExperimentConfig):
    d = Path(cfg.output_dir) / TRACE_DIR
    if not (d / "val.emtr").exists():
        raise FileNotFoundError(f"no traces in {d}; run 'generate' first")
    load = lambda p: align_by_trigger(eio.read_trace(p))
    train = [load(p) for p in sorted(d.glob("train_*.emtr"))]
    tests = [load(p) for p in sorted(d.glob("test_*.emtr"))]
    return train, load(d / "val.emtr"), tests


def cmd_attack(cfg: ExperimentConfig) -> Path:
    train, val, tests = _load_split(cfg)
    res = run_profiled_attack(train, val, tests, cfg.attack_config())
    out = _out(cfg, "attack")
    rows = []
    for t, rep in zip(tests, res.reports):
        rows.append({"trace": t.name, **rep.csv_row()})
    eio.write_csv(out / "report.csv", rows)
    eio.write_csv(out / "history.csv", res.history, HISTORY_FIELDS)
    eio.save_checkpoint(out / "checkpoint.emck", res.network, {"config": cfg.to_text()})
    _save_config(cfg, out)
    for r in rows:
        log.info("%s accuracy %.4f (threshold %.4f)", r["trace"], r["accuracy"], r["significance_threshold"])
    return out


def cmd_sweep(cfg: ExperimentConfig) -> Path:
    rows = sweep(cfg)
    out = _out(cfg)
    eio.write_csv(out / "sweep.csv", rows)
    _save_config(cfg, out)
    return out / "sweep.csv"


def cmd_psd(paths, segment_length: int, output: str) -> Path:
    """Bartlett PSD of one trace, or the mean over several trace files."""
    if not paths:
        raise ValueError("at least one trace file is required")
    psds, freqs, fs = [], None, None
    for p in paths:
        t = eio.read_trace(p)
        if fs is not None and t.meta.sample_rate != fs:
            raise ValueError("trace files have different sample rates")
        fs = t.meta.sample_rate
        freqs, pxx = bartlett_psd(t.samples, segment_length, fs)
        psds.append(pxx)
    mean = np.mean(psds, axis=0)
    rows = [{"frequency": f, "psd": v} for f, v in zip(freqs, mean)]
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    eio.write_csv(output, rows, ("frequency", "psd"))
    return Path(output)


def cmd_datavolume(cfg: ExperimentConfig) -> Path:
    rows = datavolume(cfg)
    out = _out(cfg)
    eio.write_csv(out / "datavolume.csv", rows)
    _save_config(cfg, out)
    return out / "datavolume.csv"


def cmd_farfield(cfg: ExperimentConfig) -> Path:
    report = farfield(cfg)
    out = _out(cfg)
    eio.write_csv(out / "farfield.csv", [report])
    _save_config(cfg, out)
    return out / "farfield.csv"


def cmd_inspect(path) -> dict:
    """Header of a trace, checkpoint, CSV table or config file."""
    p = Path(path)
    with open(p, "rb") as fh:
        magic = fh.read(4)
    if magic == eio.TRACE_MAGIC:
        return eio.read_trace_header(p)
    if magic == eio.CKPT_MAGIC:
        h = eio.read_checkpoint_header(p)
        h.pop("architecture")
        return h
    text = p.read_text()
    first = text.splitlines()[0] if text else ""
    if "=" in first and "," not in first.split("=", 1)[0]:
        return eio.parse_config(text)
    return {"columns": first.split(","), "rows": max(len(text.splitlines()) - 1, 0)}


# --- argument parsing --------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", choices=("fast", "paper"))
    defaults = ExperimentConfig()
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "preset":
            continue
        flag = "--" + f.name.replace("_", "-")
        d = getattr(defaults, f.name)
        # keep values as strings; the config layer does the typing
        kind = "list" if isinstance(d, tuple) else type(d).__name__
        p.add_argument(flag, dest=f.name, metavar=kind.upper(), help=f"default {d!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emleak", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("generate", "attack", "sweep", "datavolume", "farfield"):
        _add_config_flags(sub.add_parser(verb))
    p = sub.add_parser("psd")
    p.add_argument("traces", nargs="+")
    p.add_argument("--segment-length", type=int, default=preset("fast").psd_segment_length)
    p.add_argument("--output", default="psd.csv")
    p = sub.add_parser("inspect")
    p.add_argument("path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.verb == "psd":
            print(cmd_psd(args.traces, args.segment_length, args.output))
        elif args.verb == "inspect":
            print(json.dumps(cmd_inspect(args.path), indent=2, sort_keys=True, default=str))
        else:
            cfg = load_config(args)
            fn = {
                "generate": cmd_generate,
                "attack": cmd_attack,
                "sweep": cmd_sweep,
                "datavolume": cmd_datavolume,
                "farfield": cmd_farfield,
            }[args.verb]
            print(fn(cfg))
    except (OSError, ValueError) as exc:
        print(f"emleak {args.verb}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
