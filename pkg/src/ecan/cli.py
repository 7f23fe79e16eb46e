"""Command-line entry point: ``ecan gen-data | pretrain | adapt | eval | project``.

Every command reads an optional flat JSON config (``--config``), applies
command-line overrides on top, writes the resolved config next to its
outputs, and exits 0 on success, 2 on usage/config/data errors and 3 on
numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import model as model_io
from .config import HyperParams, ModelSpec
from .data import ShiftSpec, generate_pair, load_corpus, save_corpus
from .errors import ConfigError, EcanError, NumericError, UsageError
from .evaluate import evaluate, project_2d, write_projection
from .trainer import adapt, pretrain

log = logging.getLogger("ecan")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunConfig:
    # hyperparameters
    tau: float = 0.05
    k: int = 1
    lam: float = 0.5
    beta: float = 0.1
    batch_size: int = 32
    epochs: int = 4
    pretrain_epochs: int = 100
    lr_pretrain: float = 0.01
    lr_adapt: float = 0.001
    momentum: float = 0.9
    label_smoothing: float = 0.1
    seed: int = 0
    # model layout
    hidden: tuple = (64,)
    feature_dim: int = 32
    # synthetic task
    classes: int = 4
    dim: int = 16
    samples_per_class: int = 150
    rotation: float = math.pi / 6
    translation: float = 0.5
    scale: float = 1.2
    noise_sigma: float = 0.1
    cluster_std: float = 0.3
    class_imbalance: tuple | None = None
    # ablations
    disable_ncl: bool = False
    disable_scl: bool = False
    disable_div: bool = False
    # paths
    source: str | None = None
    target: str | None = None
    model: str | None = None
    corpus: str | None = None
    out_dir: str = "."
    monitor_labels: bool = False

    # "lambda" is the natural key in config files; it maps onto ``lam``
    ALIASES = {"lambda": "lam"}

    @classmethod
    def keys(cls):
        return {f.name for f in fields(cls)}

    def update(self, values: dict, origin: str):
        known = self.keys()
        for raw_key, value in values.items():
            key = self.ALIASES.get(raw_key, raw_key.replace("-", "_"))
            if key not in known:
                raise ConfigError(f"unknown config key {raw_key!r} in {origin}")
            if key in ("hidden", "class_imbalance") and value is not None:
                value = tuple(value)
            setattr(self, key, value)

    def hyperparams(self) -> HyperParams:
        names = {f.name for f in fields(HyperParams)}
        return HyperParams(**{k: v for k, v in asdict(self).items() if k in names})

    def shift_spec(self) -> ShiftSpec:
        return ShiftSpec(self.classes, self.dim, self.samples_per_class, self.rotation,
                         self.translation, self.scale, self.noise_sigma, self.class_imbalance,
                         self.cluster_std, self.seed)

    def to_json(self):
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        for key in ("hidden", "class_imbalance"):
            if doc[key] is not None:
                doc[key] = list(doc[key])
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def _add_common(p):
    p.add_argument("--config", help="flat JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")


def _add_hyper(p, adapt_phase):
    p.add_argument("--batch-size", type=int)
    p.add_argument("--momentum", type=float)
    if adapt_phase:
        p.add_argument("--tau", type=float)
        p.add_argument("--k", type=int)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr-adapt", type=float)
    else:
        p.add_argument("--pretrain-epochs", type=int)
        p.add_argument("--lr-pretrain", type=float)
        p.add_argument("--label-smoothing", type=float)
        p.add_argument("--hidden", type=_int_list, help="comma-separated hidden widths")
        p.add_argument("--feature-dim", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="ecan", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic source/target corpus pair")
    _add_common(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--rotation", type=float, help="radians")
    p.add_argument("--translation", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--cluster-std", type=float)
    p.add_argument("--class-imbalance", type=_float_list)

    p = sub.add_parser("pretrain", help="train the source model")
    _add_common(p)
    _add_hyper(p, adapt_phase=False)
    p.add_argument("--source")

    # deliberately no --source: adaptation never sees source data
    p = sub.add_parser("adapt", help="source-free adaptation to an unlabeled target corpus")
    _add_common(p)
    _add_hyper(p, adapt_phase=True)
    p.add_argument("--model")
    p.add_argument("--target")
    p.add_argument("--disable-ncl", action="store_const", const=True)
    p.add_argument("--disable-scl", action="store_const", const=True)
    p.add_argument("--disable-div", action="store_const", const=True)
    p.add_argument("--monitor-labels", action="store_const", const=True,
                   help="log per-epoch UAR from the target file's labels (never used for training)")

    for name, text in (("eval", "write a UAR report"), ("project", "write a 2-D PCA projection")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--model")
        p.add_argument("--corpus")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc.msg} at offset {exc.pos}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        cfg.update(doc, str(path))
    overrides = {k: v for k, v in vars(args).items()
                 if v is not None and k not in ("command", "config", "log_level")}
    cfg.update(overrides, "command line")
    return cfg


def _require(cfg, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _out_dir(cfg, command):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}.config.json").write_text(cfg.to_json(), encoding="utf-8")
    return out


def cmd_gen_data(cfg: RunConfig):
    source, target = generate_pair(cfg.shift_spec())
    out = _out_dir(cfg, "gen-data")
    save_corpus(source, out / "source.csv")
    save_corpus(target, out / "target.csv")
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'}")


def cmd_pretrain(cfg: RunConfig):
    _require(cfg, "source")
    source = load_corpus(cfg.source)
    spec = ModelSpec(source.dim, cfg.hidden, cfg.feature_dim, source.class_count)
    model = pretrain(source, spec, cfg.hyperparams())
    out = _out_dir(cfg, "pretrain")
    model_io.save(model, out / "source_model.json")
    print(f"wrote {out / 'source_model.json'}")


def cmd_adapt(cfg: RunConfig):
    _require(cfg, "model", "target")
    model = model_io.load(cfg.model)
    target = load_corpus(cfg.target)
    # labels are only ever read by this eval-side callback, never by the adaptation loop
    monitor = (lambda m: evaluate(m, target).uar) if cfg.monitor_labels else None
    adapted, run_log = adapt(model, target.without_labels(), cfg.hyperparams(),
                             use_ncl=not cfg.disable_ncl, use_scl=not cfg.disable_scl,
                             use_div=not cfg.disable_div, monitor=monitor)
    out = _out_dir(cfg, "adapt")
    model_io.save(adapted, out / "adapted_model.json")
    run_log.write(out / "run_log.jsonl")
    print(f"wrote {out / 'adapted_model.json'} and {out / 'run_log.jsonl'}")


def cmd_eval(cfg: RunConfig):
    _require(cfg, "model", "corpus")
    report = evaluate(model_io.load(cfg.model), load_corpus(cfg.corpus))
    out = _out_dir(cfg, "eval")
    report.write(out / "report.json")
    cq = "n/a" if report.cluster_quality is None else f"{report.cluster_quality:.4f}"
    print(f"UAR {report.uar:.4f}  accuracy {report.accuracy:.4f}  cluster quality {cq}")


def cmd_project(cfg: RunConfig):
    _require(cfg, "model", "corpus")
    table = project_2d(model_io.load(cfg.model), load_corpus(cfg.corpus))
    out = _out_dir(cfg, "project")
    write_projection(table, out / "projection.csv")
    print(f"wrote {out / 'projection.csv'}")


COMMANDS = {"gen-data": cmd_gen_data, "pretrain": cmd_pretrain, "adapt": cmd_adapt,
            "eval": cmd_eval, "project": cmd_project}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](resolve_config(args))
    except NumericError as exc:
        print(f"ecan {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EcanError, OSError, TypeError, ValueError) as exc:
        print(f"ecan {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
