"""``parconv`` command line: featurize, synth-data, train, eval, classify, cost, simulate.

Exit codes: 0 ok, 2 usage or input error, 3 runtime error.  Diagnostics go
to stderr; with ``--json`` the machine-readable result is the only thing
written to stdout.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ._accel import apply_thread_cap
from .errors import DivergenceError, GraphError, NonFiniteError, ParconvError

log = logging.getLogger("parconv")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
RUNTIME_ERRORS = (DivergenceError, NonFiniteError, GraphError)


class UsageError(ParconvError):
    pass


def _shape(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, e.g. 128x128, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("input size must be positive")
    return h, w


def _int_list(text):
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("frame list is empty")
    return values


def _optional_float(text):
    return None if str(text).lower() == "none" else float(text)


def _emit(args, payload, text):
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


# ---------------------------------------------------------------- subcommands


def cmd_featurize(args):
    from .audio import AudioBuffer, fit_frames, mel_power_spectrogram, save_spectrogram
    from .dataset import normalize_features

    spec = mel_power_spectrogram(AudioBuffer.from_wav(args.in_path))
    if args.frames is not None:
        spec = fit_frames(spec, args.frames)
    spec = replace(spec, data=normalize_features(spec.data, args.normalization))
    out, meta = save_spectrogram(spec, args.out)
    payload = {"out": str(out), "sidecar": str(meta), "shape": list(spec.data.shape)}
    _emit(args, payload, f"wrote {out} ({spec.data.shape[0]}x{spec.data.shape[1]}) and {meta}")


def cmd_synth_data(args):
    from .dataset import synthesize_toy_dataset

    manifest = synthesize_toy_dataset(args.n_per_class, args.seed, args.out)
    path = Path(args.out) / "manifest.jsonl"
    payload = {"manifest": str(path), "files": len(manifest.entries), "class_counts": manifest.class_counts("train")}
    _emit(args, payload, f"wrote {len(manifest.entries)} clips and {path}")


def _network_spec(groups, hw):
    from .network import NetworkSpec

    return NetworkSpec.drum_net(groups=groups, input_shape=(1,) + tuple(hw))


def cmd_train(args):
    from .dataset import load_dataset
    from .network import build_network
    from .trainer import TrainConfig, train

    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        target_frames=args.frames,
        normalization=args.normalization,
        clip_grad_norm=args.clip_grad_norm,
        stop_at_val_accuracy=args.stop_at,
    ).validate()
    dataset = load_dataset(args.manifest)
    for split in ("train", "val"):
        counts = dataset.class_counts(split)
        log.info("%s split: %s", split, ", ".join(f"{k}={v}" for k, v in counts.items()))
    model = build_network(_network_spec(args.g, (128, args.frames)), seed=args.seed)
    report = train(model, dataset, cfg, checkpoint_path=args.out, progress=lambda line: print(line, file=sys.stderr))
    report_path = Path(args.report) if args.report else Path(str(args.out) + ".report.json")
    report.write(report_path)
    text = (
        f"best val top-1 {report.best_val_accuracy:.4f} at epoch {report.best_epoch}; "
        f"checkpoint {args.out}, report {report_path}"
    )
    _emit(args, json.loads(report.to_json()), text)


def _load_split(args, model):
    from .dataset import featurize_entries, load_dataset

    dataset = load_dataset(args.manifest)
    entries = dataset.split(args.split)
    if not entries:
        raise UsageError(f"split {args.split!r} is empty")
    return featurize_entries(entries, model.spec.input_shape[2], args.normalization)


def cmd_eval(args):
    from .checkpoint import load_model
    from .network import DRUM_CLASSES
    from .trainer import evaluate

    model = load_model(args.model)
    x, y = _load_split(args, model)
    result = evaluate(model, x, y)
    lines = [f"top-1 accuracy: {result.top1_accuracy:.4f} ({int(result.confusion.trace())}/{len(y)})", ""]
    lines.append(f"{'true/pred':<11}" + "".join(f"{c[:6]:>7}" for c in DRUM_CLASSES))
    for name, row in zip(DRUM_CLASSES, result.confusion):
        lines.append(f"{name:<11}" + "".join(f"{v:>7d}" for v in row))
    _emit(args, result.to_dict(), "\n".join(lines))


def cmd_classify(args):
    from .audio import AudioBuffer
    from .checkpoint import load_model
    from .dataset import featurize_audio
    from .network import DRUM_CLASSES

    model = load_model(args.model)
    feats = featurize_audio(AudioBuffer.from_wav(args.in_path), model.spec.input_shape[2], args.normalization)
    probs = model.predict_proba(feats[None, None])[0]
    label = DRUM_CLASSES[int(probs.argmax())]
    payload = {"label": label, "probs": [float(p) for p in probs], "classes": list(DRUM_CLASSES)}
    text = label + "\n" + "\n".join(f"  {c:<11} {p:.4f}" for c, p in zip(DRUM_CLASSES, probs))
    _emit(args, payload, text)


def cmd_cost(args):
    from .costs import cost_report

    report = cost_report(_network_spec(args.g, args.input))
    _emit(args, report.to_dict(), report.to_text())


def cmd_simulate(args):
    from .fogsim import TaskSpec, load_profiles, rank_placements, sweep_frames

    profiles = load_profiles(args.profiles)
    if args.no_jitter:
        profiles = [replace(p, t_time_jitter_ms=0.0) for p in profiles]
    if len(args.frames) == 1:
        ranking = rank_placements(profiles, TaskSpec(args.frames[0]), args.seed, args.trials)
        tiers = {p.id: p.tier for p in profiles}
        payload = {
            "frames": args.frames[0],
            "trials": args.trials,
            "ranking": [{"rank": i, "device_id": d, "tier": tiers[d], "mean_total_ms": t} for i, (d, t) in enumerate(ranking, 1)],
        }
        width = max(len(d) for d, _ in ranking)
        lines = [f"{'rank':>4}  {'device':<{width}}  {'tier':<5}  {'mean total ms':>13}"]
        lines += [f"{i:>4}  {d:<{width}}  {tiers[d]:<5}  {t:>13.2f}" for i, (d, t) in enumerate(ranking, 1)]
        _emit(args, payload, "\n".join(lines))
    else:
        table = sweep_frames(profiles, args.frames, args.seed, args.trials)
        _emit(args, {**table.to_dict(), "trials": args.trials}, table.to_text())


# ---------------------------------------------------------------- parser


def _add_globals(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="RNG seed (default 0)")
    parser.add_argument("--json", action="store_true", default=default(False), help="machine-readable output on stdout")
    parser.add_argument("--config", default=default(None), help="JSON file of flag values; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False), help="log progress to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="parconv", description="Parallel-Conv drum classifier toolkit")
    _add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("featurize", cmd_featurize, "WAV -> 128-band Mel power spectrogram (binary + JSON sidecar)")
    p.add_argument("--in", dest="in_path", required=True, help="input WAV")
    p.add_argument("--out", required=True, help="output path; metadata goes to <out>.json")
    p.add_argument("--frames", type=int, default=None, help="center-crop or pad to this many frames")
    p.add_argument("--normalization", choices=("rms", "max", "none"), default="none")

    p = add("synth-data", cmd_synth_data, "write the seeded synthetic 7-class toy dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-per-class", type=int, default=10, help="clips per class per split (default 10)")

    p = add("train", cmd_train, "train on a manifest; writes a checkpoint and a TrainReport JSON")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (rewritten on every val improvement)")
    p.add_argument("--report", default=None, help="TrainReport path (default <out>.report.json)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-grad-norm", type=_optional_float, default=1.0, help="global gradient-norm clip ('none': off)")
    p.add_argument("--frames", type=int, default=128, help="time frames per input (multiple of 16)")
    p.add_argument("--g", type=int, default=4, help="groups in the 3x3 branch")
    p.add_argument("--normalization", choices=("rms", "max", "none"), default="rms")
    p.add_argument("--stop-at", type=_optional_float, default=1.0, help="stop at this val accuracy ('none': never)")

    for name, func, text in (
        ("eval", cmd_eval, "top-1 accuracy and confusion matrix on a manifest split"),
        ("classify", cmd_classify, "top-1 label and class probabilities for one WAV"),
    ):
        p = add(name, func, text)
        p.add_argument("--model", required=True, help="checkpoint")
        if name == "eval":
            p.add_argument("--manifest", required=True)
            p.add_argument("--split", choices=("train", "val"), default="val")
        else:
            p.add_argument("--in", dest="in_path", required=True, help="input WAV")
        p.add_argument("--normalization", choices=("rms", "max", "none"), default="rms", help="must match training")

    p = add("cost", cmd_cost, "per-layer MACs and parameters, standard vs parallel")
    p.add_argument("--g", type=int, default=4)
    p.add_argument("--input", type=_shape, default=(128, 128), help="HxW (default 128x128)")

    p = add("simulate", cmd_simulate, "rank cloud/fog placements, or sweep frame counts")
    p.add_argument("--profiles", default=None, help="profile pack JSON (default: the shipped four devices)")
    p.add_argument("--frames", type=_int_list, default=[10], help="frame count, or a comma list for a sweep")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--no-jitter", action="store_true", help="zero every transmission jitter")
    return parser


def _preparse(parser, argv):
    """Find the subcommand and any --config path without full validation."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    choices = _subparser_choices(parser)
    command = next((tok for tok in rest if tok in choices), None)
    return command, known.config


def _subparser_choices(parser):
    return parser._subparsers._group_actions[0].choices


def _apply_config(parser, command, path):
    """Install the config file's values as defaults, so explicit flags win."""
    try:
        values = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError("config file must hold a JSON object of flag values")
    values = {k.lstrip("-").replace("-", "_"): v for k, v in values.items()}
    values.pop("config", None)
    if values.pop("command", command) != command:
        raise UsageError(f"config file is for a different command than {command!r}")
    sub = _subparser_choices(parser)[command]
    known = {a.dest: a for a in parser._actions} | {a.dest: a for a in sub._actions}
    # flags that take a value on the command line, keyed by their option name too
    known |= {a.option_strings[-1].lstrip("-").replace("-", "_"): a for a in sub._actions if a.option_strings}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise UsageError(f"unknown key(s) in config: {', '.join(unknown)}")
    converted = {}
    for key, value in values.items():
        action = known[key]
        # run file values through the same converters as flags
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if action.type is not None and value is not None:
            try:
                value = action.type(str(value))
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config {key}={value!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config {key}={value!r}: expected one of {list(action.choices)}")
        converted[action.dest] = value
    global_keys = {"seed", "json", "verbose"}
    parser.set_defaults(**{k: v for k, v in converted.items() if k in global_keys})
    sub.set_defaults(**{k: v for k, v in converted.items() if k not in global_keys})
    for action in sub._actions:
        if action.dest in converted:
            action.required = False


def _report(command, exc, internal=False):
    kind = f"internal error: {type(exc).__name__}: " if internal else "error: "
    print(f"parconv {command or ''}: {kind}{exc}", file=sys.stderr)


def main(argv=None):
    argv = [str(a) for a in (sys.argv[1:] if argv is None else argv)]
    parser = build_parser()
    command, config = _preparse(parser, argv)
    try:
        if config and command:
            _apply_config(parser, command, config)
        args = parser.parse_args(argv)
    except UsageError as exc:
        _report(command, exc)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse has already printed usage; keep main() a plain function
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    limits = apply_thread_cap()
    try:
        args.func(args)
    except RUNTIME_ERRORS as exc:
        _report(args.command, exc)
        return EXIT_RUNTIME
    except (ParconvError, OSError) as exc:
        _report(args.command, exc)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - last-resort report, still a clean exit code
        log.debug("unhandled error", exc_info=True)
        _report(args.command, exc, internal=True)
        return EXIT_RUNTIME
    finally:
        if limits is not None:
            limits.restore_original_limits()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
