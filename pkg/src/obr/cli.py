"""Command line front end: ``obr {compress,eval,gen-calib,inspect}``.

Exit codes: 0 success, 2 bad flags, 3 I/O or format errors (including
shape/pattern mismatches), 4 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calibration import gen_calibration
from .errors import FormatError, NumericalError, ShapeError
from .evaluation import build_report, sparsity_audit
from .masking import METRICS, NM, Unstructured, parse_pattern
from .pipeline import MODES, PROPAGATE, MaskConfig, PipelineConfig, compress_matrix
from .quantizer import QuantizerSpec
from .rotation import RotationSpec, check_orthogonal
from .tensor_store import TensorContainer, read_container, write_container

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pattern_arg(text):
    try:
        return parse_pattern(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    p = _Parser(prog="obr", description="Joint pruning and quantization with OBR compensation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compress", help="compress a weight matrix")
    c.add_argument("--weights", required=True, type=Path)
    c.add_argument("--calib", required=True, type=Path)
    c.add_argument("--output", required=True, type=Path)
    c.add_argument("--report", type=Path)
    c.add_argument("--config", type=Path, help="JSON pipeline config; overrides individual flags")
    c.add_argument("--sparsity", type=float)
    c.add_argument("--pattern", type=_pattern_arg, help="unstructured:<ratio>, 2:4 or 4:8")
    c.add_argument("--mask-metric", choices=METRICS)
    c.add_argument("--quantizer", choices=("rtn", "gptq"))
    c.add_argument("--bits", type=int)
    c.add_argument("--alpha", type=float)
    c.add_argument("--rotate", choices=("none", "hadamard"))
    c.add_argument("--rotation-file", type=Path, help="container with an orthogonal 'rotation' entry")
    c.add_argument("--damp", type=float)
    c.add_argument("--mode", choices=MODES)
    c.add_argument("--propagate", choices=PROPAGATE)
    c.add_argument("--seed", type=int)
    c.add_argument("--threads", type=int)

    e = sub.add_parser("eval", help="evaluate a compressed matrix against the original")
    e.add_argument("--weights", required=True, type=Path)
    e.add_argument("--compressed", required=True, type=Path)
    e.add_argument("--calib", required=True, type=Path)
    e.add_argument("--pattern", type=_pattern_arg)
    e.add_argument("--output", type=Path)

    g = sub.add_parser("gen-calib", help="write synthetic calibration activations")
    g.add_argument("--cin", required=True, type=int)
    g.add_argument("--samples", required=True, type=int)
    g.add_argument("--correlation", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--output", required=True, type=Path)

    i = sub.add_parser("inspect", help="list the entries of a container")
    i.add_argument("--input", required=True, type=Path)
    return p


def _single_matrix(container, preferred, path):
    if preferred in container:
        return container.array(preferred)
    if len(container) == 1:
        return container.entries[0].to_array()
    raise FormatError(f"{path}: no entry named {preferred!r}")


def _config_from_args(args):
    flag_values = [args.sparsity, args.pattern, args.mask_metric, args.quantizer, args.bits,
                   args.alpha, args.rotate, args.damp, args.mode, args.propagate, args.seed]
    if args.config is not None:
        if any(v is not None for v in flag_values):
            print("warning: --config given; individual pipeline flags are ignored", file=sys.stderr)
        try:
            return PipelineConfig.from_json(args.config.read_text())
        except OSError as exc:
            raise FormatError(f"cannot read config {args.config}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid config {args.config}: {exc}") from exc

    d = PipelineConfig()
    seed = d.seed if args.seed is None else args.seed
    if args.pattern is not None:
        pattern = args.pattern
    elif args.sparsity is not None:
        pattern = Unstructured(args.sparsity)
    else:
        pattern = d.mask.pattern
    return PipelineConfig(
        rotation=RotationSpec(args.rotate or d.rotation.kind, seed),
        mask=MaskConfig(args.mask_metric or d.mask.metric, pattern),
        quantizer=QuantizerSpec(args.bits if args.bits is not None else d.quantizer.bits,
                                args.quantizer or d.quantizer.kind),
        alpha=d.alpha if args.alpha is None else args.alpha,
        damp_ratio=d.damp_ratio if args.damp is None else args.damp,
        mode=args.mode or d.mode,
        propagate=args.propagate or d.propagate,
        seed=seed,
    )


def cmd_compress(args):
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    w = _single_matrix(read_container(args.weights), "weights", args.weights)
    x = _single_matrix(read_container(args.calib), "calib", args.calib)
    rotation = None
    if args.rotation_file is not None:
        rc = read_container(args.rotation_file)
        if "rotation" not in rc:
            raise FormatError(f"{args.rotation_file}: no entry named 'rotation'")
        try:
            rotation = check_orthogonal(rc.array("rotation"))
        except ValueError as exc:
            raise FormatError(f"{args.rotation_file}: {exc}") from exc
    if isinstance(config.mask.pattern, NM) and config.mode != "quant_only":
        config.mask.pattern.check_width(w.shape[1])
    result = compress_matrix(w, x, config, rotation=rotation, threads=args.threads)

    out = TensorContainer()
    if result.w_hat is not None:
        out.add("codes", result.w_hat.codes, "i8")
        out.add("scales", result.w_hat.scales, "f64")
    else:
        out.add("weights", result.weights, "f64")
    if result.mask is not None:
        out.add("mask", result.mask.m, "i8")
    out.add("delta_prune", result.delta_prune, "f64")
    out.add("delta_quant", result.delta_quant, "f64")
    out.add("rotation", result.rotation, "f64")
    write_container(out, args.output)
    if args.report is not None:
        payload = {"config": config.to_dict(), "report": result.report.to_dict()}
        args.report.write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def load_compressed(container):
    """Return ``(weights, stored, codes)`` from a compressed or plain container.

    ``weights`` act on unrotated inputs; ``stored`` is the matrix as stored,
    which is where sparsity is defined.
    """
    codes = None
    if "codes" in container and "scales" in container:
        codes = container.array("codes")
        stored = codes * container.array("scales")[:, None]
    elif "weights" in container:
        stored = container.array("weights")
    elif len(container) == 1:
        stored = container.entries[0].to_array()
    else:
        raise FormatError("container holds neither codes+scales nor weights")
    weights = stored
    if "rotation" in container:
        weights = stored @ container.array("rotation").T
    return weights, stored, codes


def cmd_eval(args):
    w = _single_matrix(read_container(args.weights), "weights", args.weights)
    x = _single_matrix(read_container(args.calib), "calib", args.calib)
    w_hat, stored, codes = load_compressed(read_container(args.compressed))
    if w_hat.shape != w.shape or x.shape[0] != w.shape[1]:
        raise ShapeError(f"shapes disagree: weights {w.shape}, compressed {w_hat.shape}, calib {x.shape}")
    report = build_report(w, w_hat, x, pattern=args.pattern, codes=codes)
    report.achieved_sparsity, report.pattern_valid = sparsity_audit(stored, args.pattern)
    if codes is None:
        report.natural_zero_fraction = report.achieved_sparsity
    text = report.to_json()
    if args.output is not None:
        args.output.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen_calib(args):
    try:
        x = gen_calibration(args.cin, args.samples, args.correlation, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_container(TensorContainer().add("calib", x, "f64"), args.output)
    return EXIT_OK


def cmd_inspect(args):
    container = read_container(args.input)
    for e in container.entries:
        a = e.to_array()
        zeros = float(np.mean(a == 0)) if a.size else 0.0
        shape = "x".join(str(d) for d in e.shape)
        print(f"{e.name}\t{e.dtype}\t{shape}\tzeros={zeros:.4f}")
    return EXIT_OK


COMMANDS = {
    "compress": cmd_compress,
    "eval": cmd_eval,
    "gen-calib": cmd_gen_calib,
    "inspect": cmd_inspect,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"obr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"obr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, ShapeError, OSError, ValueError) as exc:
        print(f"obr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
