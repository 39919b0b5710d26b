"""Command-line entry point.

Subcommands::

    eam extract  --images I --labels L --out features.txt
    eam exp N    (--images I --labels L | --mnist-dir D | --features F) --out DIR
    eam build    (... input ...) --fold K --m M --out SNAPDIR
    eam retrieve --snapshots SNAPDIR --image cue.pgm [--out retrieved.pgm]

Options may also come from a JSON file given with ``--config``; flags
override it.  Exit codes: 0 success, 1 usage, 2 data or file error,
3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence


from . import experiments as ex
from . import quantizer as qz
from .dataset import load_corpus, load_mnist_dir, make_partition
from .errors import EamError, FormatError, SizeError
from .features import ExtractorSpec, export_features, extract_array, import_features, synthesize
from .iofmt import read_pgm, write_atomic, write_pgm
from .memory import Amr, MemorySystem
from .relation import get_sampler

log = logging.getLogger("eam")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    images: Optional[str] = None
    labels: Optional[str] = None
    features: Optional[str] = None
    mnist_dir: Optional[str] = None
    grid: int = 8
    pad: int = 32
    m: int = ex.EXP3_M
    m_range: List[int] = field(default_factory=lambda: list(range(10)))
    fills: List[float] = field(default_factory=lambda: list(ex.DEFAULT_FILLS))
    folds: List[int] = field(default_factory=lambda: [0])
    seed: int = 0
    out: str = "results"
    sampler: str = "triangular"
    jobs: int = 1
    samples_per_digit: int = 1
    cue_source: str = "test"

    def validate(self, need_input=True) -> None:
        sources = [self.images is not None or self.labels is not None,
                   self.features is not None, self.mnist_dir is not None]
        if need_input and sum(sources) != 1:
            raise UsageError("give exactly one input: --images/--labels, "
                             "--mnist-dir or --features")
        if self.images is not None and self.labels is None:
            raise UsageError("--images needs --labels")
        if self.labels is not None and self.images is None:
            raise UsageError("--labels needs --images")
        for name in ("images", "labels", "features", "mnist_dir"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise UsageError(f"--{name.replace('_', '-')} {path} does not exist")
        if self.seed is None:
            raise UsageError("a seed is required")
        if self.sampler not in ("triangular", "identity"):
            raise UsageError(f"unknown sampler {self.sampler!r}")
        if any(not 0 <= f <= 9 for f in self.folds):
            raise UsageError(f"folds must lie in 0..9: {self.folds}")

    @property
    def extractor(self) -> ExtractorSpec:
        return ExtractorSpec("block_average", self.grid, self.pad)


def parse_int_list(text: str) -> List[int]:
    """``"0-9"``, ``"0,2,5"`` or mixtures like ``"0-2,7"``."""
    out: List[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def parse_float_list(text: str) -> List[float]:
    vals = [float(x) for x in str(text).split(",") if x.strip()]
    return [int(v) if v.is_integer() else v for v in vals]


def _add_input_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--images", help="IDX image file (optionally .gz)")
    p.add_argument("--labels", help="IDX label file (optionally .gz)")
    p.add_argument("--mnist-dir", help="directory with the four official MNIST files")
    p.add_argument("--features", help="feature file to use instead of images")
    p.add_argument("--grid", type=int, help="feature grid side (n = grid**2)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eam", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("extract", help="write a feature file from IDX images")
    _add_input_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("exp", help="run experiment 1, 2, 3 or 4")
    p.add_argument("which", help="experiment number")
    _add_input_flags(p)
    p.add_argument("--m", type=int, help="granularity exponent for experiments 3-4")
    p.add_argument("--m-range", help="granularities for experiments 1-2, e.g. 0-9")
    p.add_argument("--fills", help="fill percentages, e.g. 1,2,4,100")
    p.add_argument("--folds", help="folds to run, e.g. 0-9")
    p.add_argument("--out", help="output directory")
    p.add_argument("--sampler", choices=("triangular", "identity"))
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--samples-per-digit", type=int)
    p.add_argument("--cue-source", choices=("test", "rem"))

    p = sub.add_parser("build", help="register one fold's remembered items and save snapshots")
    _add_input_flags(p)
    p.add_argument("--m", type=int)
    p.add_argument("--folds", help="single fold to build")
    p.add_argument("--sampler", choices=("triangular", "identity"))
    p.add_argument("--out", required=True, help="snapshot directory")

    p = sub.add_parser("retrieve", help="retrieve a PGM cue from saved snapshots")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--image", required=True, help="P5 PGM cue")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=("triangular", "identity"))
    p.add_argument("--out", help="where to write the retrieved PGM")
    return parser


_FLAG_MAP = {"images": str, "labels": str, "mnist_dir": str, "features": str,
             "grid": int, "seed": int, "m": int, "out": str, "sampler": str,
             "jobs": int, "samples_per_digit": int, "cue_source": str}


def make_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config {args.config}: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for name in _FLAG_MAP:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if getattr(args, "m_range", None):
        data["m_range"] = parse_int_list(args.m_range)
    if getattr(args, "fills", None):
        data["fills"] = parse_float_list(args.fills)
    if getattr(args, "folds", None):
        data["folds"] = parse_int_list(args.folds)
    if "jobs" not in data:
        data["jobs"] = ex.default_jobs()
    try:
        cfg = RunConfig(**data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def load_inputs(cfg: RunConfig):
    """Return ``(labels, features, raw_images or None)``."""
    if cfg.features:
        labels, feats = import_features(cfg.features)
        return labels, feats, None
    if cfg.mnist_dir:
        corpus = load_mnist_dir(cfg.mnist_dir)
    else:
        corpus = load_corpus(cfg.images, cfg.labels)
    return corpus.labels, extract_array(cfg.extractor, corpus.images), corpus.images


def cmd_extract(cfg: RunConfig) -> int:
    if cfg.features:
        raise UsageError("extract reads images, not a feature file")
    labels, feats, _ = load_inputs(cfg)
    export_features(cfg.out, zip(labels.tolist(), feats))
    log.info("wrote %d feature rows to %s", len(labels), cfg.out)
    return EXIT_OK


def cmd_exp(cfg: RunConfig, which: str) -> int:
    if which not in ("1", "2", "3", "4"):
        raise UsageError(f"unknown experiment {which!r}; choose 1, 2, 3 or 4")
    labels, feats, images = load_inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = int(which)
    if n == 1:
        res = ex.run_experiment1(feats, labels, cfg.m_range, cfg.folds, cfg.seed, cfg.jobs)
    elif n == 2:
        res = ex.run_experiment2(feats, labels, cfg.m_range, cfg.folds, cfg.seed, cfg.jobs)
    elif n == 3:
        res = ex.run_experiment3(feats, labels, cfg.fills, cfg.m, cfg.folds, cfg.seed, cfg.jobs)
    else:
        res = ex.run_experiment4(feats, labels, cfg.fills, cfg.m, cfg.folds, cfg.seed,
                                 cfg.samples_per_digit, cfg.cue_source, cfg.sampler)
    write_atomic(out / f"exp{n}.csv", res.to_csv())
    write_atomic(out / f"exp{n}_summary.json", ex.dump_json(res.summary()))
    if n == 4:
        if feats.shape[1] == cfg.extractor.n_features:
            for name, px in res.images(cfg.extractor, images).items():
                write_pgm(out / name, px)
        else:
            log.warning("features do not match a %dx%d grid; skipping images",
                        cfg.grid, cfg.grid)
    print(f"experiment {n}: wrote {out / f'exp{n}.csv'}")
    return EXIT_OK


def cmd_build(cfg: RunConfig) -> int:
    if len(cfg.folds) != 1:
        raise UsageError("build takes exactly one fold")
    labels, feats, _ = load_inputs(cfg)
    fold = cfg.folds[0]
    part = make_partition(labels, fold, cfg.seed)
    q = qz.fit(feats[part.train_idx], cfg.m)
    rem = part.rem_idx
    system = ex.build_system(qz.quantize_array(q, feats[rem]), labels[rem],
                             ex.DIGIT_LABELS, cfg.m, q)
    out = Path(cfg.out)
    system.save(out)
    manifest = {"quantizer": q.to_dict(), "sampler": cfg.sampler,
                "extractor": {"kind": "block_average", "grid": cfg.grid, "pad": cfg.pad},
                "fold": fold, "seed": cfg.seed,
                "amrs": [{"id": a.id, "file": f"amr_{a.id}.eamr", "labels": sorted(a.labels)}
                         for a in system.amrs]}
    write_atomic(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"saved {len(system.amrs)} registers to {out}")
    return EXIT_OK


def load_snapshots(directory):
    """Rebuild a :class:`MemorySystem` and its extractor from ``build`` output."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no snapshot manifest in {directory}")
    manifest = json.loads(manifest_path.read_text())
    q = qz.QuantizerModel.from_dict(manifest["quantizer"])
    amrs = [Amr.load(directory / e["file"], e["id"]) for e in manifest["amrs"]]
    spec = ExtractorSpec(**manifest["extractor"])
    return MemorySystem(amrs, q, get_sampler(manifest.get("sampler", "triangular"))), spec


def cmd_retrieve(args) -> int:
    system, spec = load_snapshots(args.snapshots)
    if args.sampler:
        system.sampler = get_sampler(args.sampler)
    px = read_pgm(args.image)
    feats = extract_array(spec, px[None])[0]
    cue = qz.quantize(system.quantizer, feats)
    outcome = system.retrieve(cue, args.seed)
    ents = ", ".join(f"{k}:{v:.3f}" for k, v in sorted(outcome.entropies.items()))
    if not outcome.accepted:
        print(f"rejected; entropies {ents}")
        return EXIT_OK
    chosen = next(a for a in system.amrs if a.id == outcome.chosen_amr)
    print(f"accepted by {sorted(outcome.accepting_ids)}; chose register "
          f"{outcome.chosen_amr} labels {sorted(chosen.labels)}; entropies {ents}")
    if args.out:
        real = qz.dequantize(system.quantizer, outcome.retrieved)
        img = synthesize(spec, real, px.shape[0], px.shape[1])
        write_pgm(args.out, img.pixels)
        print(f"wrote {args.out}")
    return EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command is None:
        raise UsageError("missing command")
    if args.command == "retrieve":
        return cmd_retrieve(args)
    cfg = make_config(args)
    cfg.validate()
    if args.command == "extract":
        return cmd_extract(cfg)
    if args.command == "build":
        return cmd_build(cfg)
    return cmd_exp(cfg, args.which)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        code = run(argv)
    except UsageError as exc:
        print(f"eam: usage error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (FormatError, SizeError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"eam: data error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except EamError as exc:
        print(f"eam: data error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"eam: internal error: {exc!r}", file=sys.stderr)
        code = EXIT_INTERNAL
    return code


if __name__ == "__main__":
    sys.exit(main())
