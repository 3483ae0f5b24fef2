"""``otus`` command line: dataset generation, training, evaluation and the check suites.

Every command can be driven by an INI file (``--config``) with a ``[run]``
section and, for training, a ``[train]`` section; flags given on the command
line override the file. The resolved configuration is written to
``<out>/run.ini`` so any run can be repeated from its own output directory.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure,
3 a verification suite reported failures.
"""

from __future__ import annotations

import argparse
import configparser
import io
import logging
import os
import shutil
import sys
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import metrics, plotting
from .errors import CheckpointMismatchError, InvalidArgumentError, TrainingDivergedError
from .sim.dataset import N_EVAL, TASKS

log = logging.getLogger("otus")

COMMANDS = ("gen-data", "train", "eval", "infer", "verify-ot", "gradcheck")
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_SUITE = 0, 1, 2, 3
LOCK_NAME = ".otus.lock"
CONFIG_NAME = "run.ini"
EXAMPLE_FRAMES = 4


@dataclass(frozen=True)
class RunConfig:
    command: str
    task: str = "despeckle"
    data: str = ""
    checkpoint: str = ""
    inputs: tuple = ()
    out: str = ""
    seed: int = 0
    frames: int = 200
    size: int = 64
    n_eval: int = N_EVAL
    workers: int = 1
    instances: int = -1  # -1: the suite default
    spec: str = "all"
    bins: int = metrics.DEFAULT_BINS
    metric_mode: str = "db"
    train: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise InvalidArgumentError(f"unknown command {self.command!r}")
        if self.task not in TASKS:
            raise InvalidArgumentError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.metric_mode not in ("db", "linear"):
            raise InvalidArgumentError("metric_mode must be 'db' or 'linear'")
        if self.bins < 2 or self.size < 1 or self.frames < 2 or self.n_eval < 1 or self.workers < 1:
            raise InvalidArgumentError("bins, size, frames, n_eval and workers must be positive "
                                       "(frames >= 2, bins >= 2)")
        needs = {"train": ("data",), "eval": ("data", "checkpoint"), "infer": ("checkpoint", "inputs")}
        for key in needs.get(self.command, ()):
            if not getattr(self, key):
                raise InvalidArgumentError(f"{self.command} needs --{key}")
        for path in ([self.data] if self.command in ("train", "eval") else []) + \
                ([self.checkpoint] if self.command in ("eval", "infer") else []):
            if not os.path.exists(path):
                raise InvalidArgumentError(f"no such path: {path}")
        for stem in self.inputs if self.command == "infer" else ():
            if not os.path.exists(_stem(stem) + ".tnsr"):
                raise InvalidArgumentError(f"no such image: {stem}")
        if self.command in ("gen-data", "train", "eval", "infer") and not self.out:
            raise InvalidArgumentError(f"{self.command} needs --out")
        self.train_config()  # raises on unknown or malformed keys
        return self

    def train_config(self):
        from .train import TrainConfig, supervised_defaults

        values = dict(self.train)
        values.setdefault("seed", self.seed)
        if values.get("mode") != "supervised":
            return TrainConfig.from_dict(values)
        # supervised runs start from the supervised optimizer defaults
        typed = TrainConfig.from_dict(values).to_dict()
        base = supervised_defaults().to_dict()
        base.update({k: typed[k] for k in values})
        return TrainConfig(**base)

    # -- INI round trip ---------------------------------------------------
    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {}
        for f in fields(self):
            if f.name == "train":
                continue
            value = getattr(self, f.name)
            cp["run"][f.name] = "\n".join(value) if f.name == "inputs" else str(value)
        cp["train"] = {k: str(v) for k, v in self.train.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, **overrides):
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        values = dict(cp["run"]) if cp.has_section("run") else {}
        train = dict(cp["train"]) if cp.has_section("train") else {}
        return cls.from_values(values, train, **overrides)

    @classmethod
    def from_values(cls, values, train=None, **overrides):
        known = {f.name: f for f in fields(cls)}
        merged = dict(values)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        out = {}
        for key, value in merged.items():
            if key not in known or key == "train":
                raise InvalidArgumentError(f"unknown run option {key!r}")
            out[key] = _coerce(key, value)
        if "command" not in out:
            raise InvalidArgumentError("no command given")
        return cls(train=dict(train or {}), **out)


def _coerce(key, value):
    if key == "inputs":
        if isinstance(value, str):
            return tuple(v for v in value.split("\n") if v.strip())
        return tuple(value)
    if key in ("seed", "frames", "size", "n_eval", "workers", "instances", "bins"):
        try:
            return int(value)
        except (TypeError, ValueError):
            raise InvalidArgumentError(f"{key} must be an integer, got {value!r}") from None
    return str(value)


def _stem(path):
    for ext in (".tnsr", ".meta"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


# -- output directory and lock --------------------------------------------

def _pid_alive(pid):
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def prepare_output(path, force=False):
    """Create ``path`` (or reuse it when empty), take the lock and return the lock path.

    A non-empty directory is refused unless ``force``; a lock held by a live
    process is always refused.
    """
    lock = os.path.join(path, LOCK_NAME)
    if os.path.isdir(path) and os.listdir(path):
        if os.path.exists(lock):
            try:
                with open(lock) as fh:
                    pid = int(fh.read().strip() or -1)
            except (OSError, ValueError):
                pid = -1
            if pid > 0 and _pid_alive(pid):
                raise InvalidArgumentError(f"{path} is locked by running process {pid}")
        if not force:
            raise InvalidArgumentError(f"output directory {path} is not empty (use --force to overwrite)")
        for name in os.listdir(path):
            full = os.path.join(path, name)
            shutil.rmtree(full) if os.path.isdir(full) and not os.path.islink(full) else os.remove(full)
    elif os.path.exists(path) and not os.path.isdir(path):
        raise InvalidArgumentError(f"{path} exists and is not a directory")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        os.mkdir(path)
    except FileExistsError:
        pass
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InvalidArgumentError(f"{path} is locked by another process") from None
    with os.fdopen(fd, "w") as fh:
        fh.write(str(os.getpid()))
    return lock


def write_config(cfg, directory):
    with open(os.path.join(directory, CONFIG_NAME), "w") as fh:
        fh.write(cfg.to_ini())


# -- commands ---------------------------------------------------------------

def cmd_gen_data(cfg):
    from .sim import build_unpaired_dataset, write_dataset

    t0 = time.perf_counter()
    ds = build_unpaired_dataset(cfg.task, cfg.frames, cfg.seed, cfg.size, cfg.n_eval, workers=cfg.workers)
    write_dataset(cfg.out, ds)
    log.info("gen-data %s: %d Y + %d X training frames, %d eval frames in %.1f s",
             cfg.task, len(ds.y), len(ds.x), len(ds.eval), time.perf_counter() - t0)
    return EXIT_OK


def cmd_train(cfg):
    from .sim import load_dataset, paired_targets
    from .train import train_supervised, train_unsupervised

    tc = cfg.train_config()
    ds = load_dataset(cfg.data)
    if ds.task != cfg.task:
        log.warning("dataset task %s overrides configured task %s", ds.task, cfg.task)
    t0 = time.perf_counter()
    if tc.mode == "unsupervised":
        res = train_unsupervised(tc, ds.x, ds.y, out_dir=cfg.out, log=log.info)
        steps = np.array([r.step for r in res.reports])
        curves = {"cycle": [r.cycle_x + r.cycle_y for r in res.reports],
                  "discriminator": [r.total_disc for r in res.reports],
                  "adversarial": [r.gen_adv_x + r.gen_adv_y for r in res.reports]}
    else:
        targets = paired_targets(ds, workers=cfg.workers)
        res = train_supervised(tc, ds.y, targets, out_dir=cfg.out, log=log.info)
        steps = np.array([r["step"] for r in res.reports])
        curves = {"total": [r["total"] for r in res.reports], "l1": [r["l1"] for r in res.reports]}
    png, dat = plotting.figure_paths(cfg.out, "losses")
    plotting.plot_losses(png, steps, curves)
    plotting.write_dat(dat, ["step", *curves], [[s, *vals] for s, *vals in zip(steps, *curves.values())],
                       comment=f"{tc.mode} training losses")
    log.info("trained %d epochs (%d steps) in %.1f s", tc.epochs, len(steps), time.perf_counter() - t0)
    return EXIT_OK


def _generator_dir(path):
    for cand in (path, os.path.join(path, "G"), os.path.join(path, "checkpoints", "final", "G")):
        if os.path.exists(os.path.join(cand, "manifest.txt")):
            return cand
    raise InvalidArgumentError(f"no generator checkpoint under {path}")


def _load_generator(path):
    from .nn import Generator, load_network

    net = load_network(_generator_dir(path))
    if not isinstance(net, Generator):
        raise CheckpointMismatchError(f"{path} holds a {type(net).__name__}, not a generator")
    return net


def cmd_eval(cfg):
    from .autodiff import tnsr
    from .sim import load_dataset
    from .train import enhance

    ds = load_dataset(cfg.data, with_train=False)
    G = _load_generator(cfg.checkpoint)
    items = ds.eval
    labels = list(items[0].inputs)
    ids = [it.seed for it in items]
    masks = [it.mask for it in items]
    kw = dict(bins=cfg.bins, mode=cfg.metric_mode, strict=False)
    os.makedirs(os.path.join(cfg.out, "diff"), exist_ok=True)
    rows, summary, dat_rows, examples = [], [], [], [dict() for _ in items[:EXAMPLE_FRAMES]]
    for lab in labels:
        inputs = [it.inputs[lab].pixels for it in items]
        outputs, ms = enhance(G, inputs)
        r_in = metrics.report_rows(inputs, masks, f"input:{lab}", ids, None, **kw)
        r_out = metrics.report_rows(outputs, masks, f"output:{lab}", ids, ms, **kw)
        rows += r_in + r_out
        s_in, s_out = metrics.summary_row(r_in, f"input:{lab}"), metrics.summary_row(r_out, f"output:{lab}")
        summary += [s_in, s_out]
        dat_rows.append([lab, s_in["cr_db"], s_out["cr_db"], s_in["cnr"], s_out["cnr"], s_in["gcnr"], s_out["gcnr"]])
        for it, x, y in zip(items, inputs, outputs):
            tnsr.save(os.path.join(cfg.out, "diff", f"e_{it.seed:08d}_{lab}.tnsr"), (y - x).astype(np.float32))
        for k, ex in enumerate(examples):
            ex[f"in {lab}"] = inputs[k]
            ex[f"out {lab}"] = outputs[k]
            if len(labels) == 1:
                ex["diff out-in"] = outputs[k] - inputs[k]
        if any(np.isnan(r["cnr"]) for r in r_out):
            log.warning("%s: some outputs have constant regions; their CNR is reported as nan", lab)
        log.info("%s: CNR %.3f -> %.3f, GCNR %.4f -> %.4f, %.2f ms/image", lab, s_in["cnr"], s_out["cnr"],
                 s_in["gcnr"], s_out["gcnr"], s_out["recon_ms"])
    targets = [it.target.pixels for it in items if it.target is not None]
    if len(targets) == len(items):
        r_ref = metrics.report_rows(targets, masks, "reference", ids, None, **kw)
        rows += r_ref
        summary.append(metrics.summary_row(r_ref, "reference"))
        for k, ex in enumerate(examples):
            ex["reference"] = targets[k]
    with open(os.path.join(cfg.out, "metrics.csv"), "w") as fh:
        fh.write(metrics.report_csv(rows + summary))
    with open(os.path.join(cfg.out, "metrics.meta"), "w") as fh:
        fh.write(f"task = {ds.task}\nmode = {cfg.metric_mode}\nbins = {cfg.bins}\n"
                 f"frames = {len(items)}\ncheckpoint_digest = {G.params.digest()}\n")
    cols = ["label", "cr_in", "cr_out", "cnr_in", "cnr_out", "gcnr_in", "gcnr_out"]
    plotting.write_dat(os.path.join(cfg.out, "summary.dat"), cols, dat_rows,
                       comment=f"{ds.task} eval means over {len(items)} frames ({cfg.metric_mode})")
    for metric, i in (("cnr", 3), ("gcnr", 5)):
        plotting.plot_summary(os.path.join(cfg.out, f"summary_{metric}.png"), labels,
                              {"input": [r[i] for r in dat_rows], "output": [r[i + 1] for r in dat_rows]},
                              metric.upper())
    plotting.plot_examples(os.path.join(cfg.out, "examples.png"), examples)
    return EXIT_OK


def cmd_infer(cfg):
    from .sim import BModeImage, load_image, save_image
    from .train import enhance

    G = _load_generator(cfg.checkpoint)
    lines = ["name,ms"]
    for stem in cfg.inputs:
        img = load_image(_stem(stem))
        (out,), (ms,) = enhance(G, [img.pixels])
        name = os.path.basename(_stem(stem))
        res = BModeImage(out, img.axial, img.lateral, "output", img.dynamic_range, img.seed,
                         dict(img.meta, source=name))
        save_image(os.path.join(cfg.out, f"{name}_out"), res)
        log.info("infer %s: %.2f ms", name, ms)
        lines.append(f"{name},{ms:.3f}")
    with open(os.path.join(cfg.out, "timing.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def _suite_report(cfg, checks, name):
    from .verify import summarize

    summary = summarize(checks)
    failed = 0
    for key, (passed, total, worst) in summary.items():
        ok = passed == total
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {key}: {passed}/{total} worst={worst:.3g}")
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, f"{name}.csv"), "w") as fh:
            fh.write("suite,check,instance,value,tolerance,passed\n")
            for c in checks:
                fh.write(f"{c.suite},{c.name},{c.instance},{c.value:.6g},{c.tolerance:.3g},{int(c.passed)}\n")
    return EXIT_SUITE if failed else EXIT_OK


def cmd_verify_ot(cfg):
    from .verify import ot_suite

    n = 100 if cfg.instances < 0 else cfg.instances
    if n == 0:
        log.warning("verify-ot with 0 instances: nothing checked, vacuous pass")
        return EXIT_OK
    return _suite_report(cfg, ot_suite(n, cfg.seed), "verify_ot")


def cmd_gradcheck(cfg):
    from .verify import gradcheck_suite

    n = 50 if cfg.instances < 0 else cfg.instances
    if n == 0:
        log.warning("gradcheck with 0 instances: nothing checked, vacuous pass")
        return EXIT_OK
    return _suite_report(cfg, gradcheck_suite(cfg.spec, n, cfg.seed), "gradcheck")


HANDLERS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "verify-ot": cmd_verify_ot, "gradcheck": cmd_gradcheck}


# -- argument parsing ---------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="otus", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="INI file with [run] and [train] sections")
        sp.add_argument("--out", help="output directory" + (" (required)" if out_required else ""))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        sp.add_argument("-q", "--quiet", action="store_true")
        return sp

    g = common(sub.add_parser("gen-data", help="simulate an unpaired dataset"), True)
    g.add_argument("--task", choices=TASKS)
    g.add_argument("--frames", type=int)
    g.add_argument("--size", type=int)
    g.add_argument("--n-eval", dest="n_eval", type=int)
    g.add_argument("--workers", type=int)

    t = common(sub.add_parser("train", help="train a model on a generated dataset"), True)
    t.add_argument("--data")
    t.add_argument("--task", choices=TASKS)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a [train] option, e.g. --set epochs=40")
    t.add_argument("--workers", type=int)

    e = common(sub.add_parser("eval", help="metrics of a checkpoint on the held-out frames"), True)
    e.add_argument("--data")
    e.add_argument("--checkpoint")
    e.add_argument("--bins", type=int)
    e.add_argument("--metric-mode", dest="metric_mode", choices=("db", "linear"))

    i = common(sub.add_parser("infer", help="enhance individual images"), True)
    i.add_argument("--checkpoint")
    i.add_argument("inputs", nargs="*", help="image stems (<name>.tnsr + <name>.meta)")

    v = common(sub.add_parser("verify-ot", help="optimal-transport property suite"))
    v.add_argument("--instances", type=int)

    c = common(sub.add_parser("gradcheck", help="finite-difference gradient suite"))
    c.add_argument("--spec", help="primitives | unet-gf<k> | patchgan-df<k> | all")
    c.add_argument("--instances", type=int)
    return p


def resolve(args):
    """Merge the optional INI file with explicit flags into a validated RunConfig."""
    text = ""
    if args.config:
        if not os.path.exists(args.config):
            raise InvalidArgumentError(f"no such config file: {args.config}")
        with open(args.config) as fh:
            text = fh.read()
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "force", "quiet", "set") and v is not None and v != []}
    if "inputs" in flags:
        flags["inputs"] = tuple(flags["inputs"])
    base = RunConfig.from_ini(text, **flags) if text else RunConfig.from_values(flags)
    if base.command != args.command:
        base = replace(base, command=args.command)
    train = dict(base.train)
    for item in getattr(args, "set", []) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidArgumentError(f"--set expects KEY=VALUE, got {item!r}")
        train[key.strip()] = value.strip()
    return replace(base, train=train).validate()


def _threads():
    raw = os.environ.get("OTUS_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgumentError(f"OTUS_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidArgumentError("OTUS_THREADS must be >= 1")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    lock = None
    try:
        cfg = resolve(args)
        threads = _threads()
        if threads is not None:
            cfg = replace(cfg, workers=min(cfg.workers, threads))
        if cfg.command in ("gen-data", "train", "eval", "infer"):
            lock = prepare_output(cfg.out, args.force)
            write_config(cfg, cfg.out)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            return HANDLERS[cfg.command](cfg)
    except (InvalidArgumentError, CheckpointMismatchError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except TrainingDivergedError as exc:
        log.error("training diverged: %s (state dumped to %s)", exc, exc.dump_path)
        return EXIT_RUNTIME
    except (OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    finally:
        if lock and os.path.exists(lock):
            os.remove(lock)


if __name__ == "__main__":
    sys.exit(main())
