from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import TYPE_CHECKING, Any

from .config.env import Settings, load_settings
from .config.logging import attach_context, configure_logging
from .errors import ArgumentError, ConfigError, EvaluatorError, TensorDenoiseError

if TYPE_CHECKING:
    from .defense.denoiser import DenoiserConfig

logger = logging.getLogger("tensordenoise")


def _emit(payload: dict[str, Any]) -> None:
    print(json.dumps(payload))


def _parse_epsilon(raw: str) -> float:
    try:
        return float(Fraction(raw.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise ArgumentError(
            f"epsilon must be a number or a fraction like 8/255, got {raw!r}"
        ) from e


def _parse_ranks(raw: str) -> list[int]:
    try:
        return [int(r) for r in raw.split(",") if r.strip()]
    except ValueError as e:
        raise ArgumentError(f"ranks must be comma-separated integers, got {raw!r}") from e


def _denoiser_config(args: argparse.Namespace) -> DenoiserConfig:
    from .defense.denoiser import DenoiserConfig

    return DenoiserConfig.of(
        args.patch,
        args.stride,
        args.method,
        args.rank_k,
        args.rank_p,
        padding=getattr(args, "pad", 0),
        dilation=getattr(args, "dilation", 1),
    )


def cmd_denoise(args: argparse.Namespace, settings: Settings) -> int:
    from .defense.denoiser import denoise
    from .formats.images import load_image, save_image

    cfg = _denoiser_config(args)
    image = load_image(args.input)
    out, report = denoise(
        image,
        cfg,
        hosvd_only=args.hosvd_only,
        max_iters=settings.hooi_max_iters if args.max_iters is None else args.max_iters,
        tol=settings.hooi_tol if args.tol is None else args.tol,
    )
    save_image(args.output, out)
    _emit({"config": cfg.to_dict(), **report.to_dict()})
    return 0


def cmd_perturb(args: argparse.Namespace, settings: Settings) -> int:
    import numpy as np

    from .defense.denoiser import PerturbationSpec, fidelity, perturbation
    from .formats.images import load_image, save_image

    spec = PerturbationSpec(
        norm="l_inf" if args.norm == "linf" else "l2",
        epsilon=_parse_epsilon(args.epsilon),
        seed=args.seed,
    )
    image = load_image(args.input)
    delta = perturbation(image.shape, spec)
    out = np.clip(image + delta, 0.0, 1.0)
    save_image(args.output, out)
    _emit(
        {
            "norm": args.norm,
            "epsilon": spec.epsilon,
            "seed": spec.seed,
            "pre_clip": {
                "linf_distance": float(np.max(np.abs(delta))),
                "l2_distance": float(np.linalg.norm(delta)),
            },
            **fidelity(image, out).to_dict(),
        }
    )
    return 0


def cmd_search(args: argparse.Namespace, settings: Settings) -> int:
    from .config.manifest import RunManifest
    from .defense.search import LOG_NAME, run_search, summarize, write_report

    manifest = RunManifest.load(args.manifest, settings)
    attach_context(run_id=manifest.out_dir.name)
    folds = manifest.load_folds()
    space = manifest.search_space(folds)
    trials = run_search(
        space,
        manifest.evaluator,
        folds,
        manifest.budget,
        manifest.seed,
        out_dir=manifest.out_dir,
        parallel=args.parallel,
    )
    report = write_report(manifest.out_dir, trials)
    best = summarize(trials, top=1)
    _emit(
        {
            "trials": len(trials),
            "failed": sum(1 for t in trials if t.status == "failed"),
            "log": str(manifest.out_dir / LOG_NAME),
            "report": str(report),
            "best": best[0].to_dict() if best else None,
        }
    )
    return 0


def cmd_evaluate(args: argparse.Namespace, settings: Settings) -> int:
    from .config.manifest import RunManifest
    from .defense.search import evaluate_trial

    manifest = RunManifest.load(args.manifest, settings)
    attach_context(run_id=manifest.out_dir.name)
    cfg = _denoiser_config(args)
    trial = evaluate_trial(cfg, manifest.evaluator, manifest.load_folds())
    _emit(trial.to_json())
    return 0 if trial.status == "complete" else EvaluatorError.exit_code


def cmd_compress_kernel(args: argparse.Namespace, settings: Settings) -> int:
    from .formats.bundle import write_bundle
    from .formats.container import read_tensor
    from .tensors.kernels import (
        ConvKernel,
        layer_plan,
        select_ranks_energy,
        tt_factorize_kernel,
        tucker2_factorize,
    )

    kernel = ConvKernel(read_tensor(args.input))
    factors: Any
    if args.method == "tucker2":
        if args.ranks is not None:
            raise ConfigError("--ranks applies to --method tt only")
        if args.energy is not None:
            if args.rank_p is not None or args.rank_q is not None:
                raise ConfigError("give either --energy or --rank-p/--rank-q, not both")
            rank_p, rank_q = select_ranks_energy(kernel, args.energy)
        elif args.rank_p is None or args.rank_q is None:
            raise ConfigError("tucker2 needs --rank-p and --rank-q, or --energy")
        else:
            rank_p, rank_q = args.rank_p, args.rank_q
        factors, report = tucker2_factorize(kernel, rank_p, rank_q)
    else:
        if args.energy is not None or args.rank_p is not None or args.rank_q is not None:
            raise ConfigError("--energy, --rank-p and --rank-q apply to --method tucker2 only")
        if args.ranks is None:
            raise ConfigError("tt needs --ranks R1,R2,R3")
        factors, report = tt_factorize_kernel(kernel, _parse_ranks(args.ranks))
    write_bundle(args.output, factors)
    _emit(
        {
            "method": args.method,
            **report.to_dict(),
            "parameters": {
                "original": kernel.parameter_count,
                "factored": factors.parameter_count,
            },
            "layers": [{"role": s.role, "shape": list(s.shape)} for s in layer_plan(factors)],
        }
    )
    return 0


def _add_config_flags(p: argparse.ArgumentParser, with_padding: bool) -> None:
    p.add_argument("--patch", type=int, required=True, help="Patch size K")
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--method", choices=["tucker", "tt"], default="tucker")
    p.add_argument("--rank-k", type=int, required=True, help="Rank along the patch-count axis")
    p.add_argument("--rank-p", type=int, required=True, help="Rank along the patch-pixel axes")
    if with_padding:
        p.add_argument("--pad", type=int, default=0)
        p.add_argument("--dilation", type=int, default=1)


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensordenoise")
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--log-dir", default=settings.log_dir)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_den = sub.add_parser("denoise", help="Low-rank denoise one image")
    p_den.add_argument("--input", required=True)
    p_den.add_argument("--output", required=True)
    _add_config_flags(p_den, with_padding=True)
    p_den.add_argument("--hosvd-only", action="store_true", help="Skip HOOI refinement")
    p_den.add_argument("--max-iters", type=int, default=None)
    p_den.add_argument("--tol", type=float, default=None)
    p_den.set_defaults(handler=cmd_denoise)

    p_pert = sub.add_parser("perturb", help="Add seeded epsilon-bounded noise")
    p_pert.add_argument("--input", required=True)
    p_pert.add_argument("--output", required=True)
    p_pert.add_argument("--norm", choices=["linf", "l2"], required=True)
    p_pert.add_argument("--epsilon", required=True, help="e.g. 8/255")
    p_pert.add_argument("--seed", type=int, required=True)
    p_pert.set_defaults(handler=cmd_perturb)

    p_search = sub.add_parser("search", help="Hyperparameter search from a run manifest")
    p_search.add_argument("--manifest", required=True)
    p_search.add_argument("--parallel", type=int, default=1)
    p_search.set_defaults(handler=cmd_search)

    p_eval = sub.add_parser("evaluate", help="Evaluate one configuration on the manifest folds")
    p_eval.add_argument("--manifest", required=True)
    _add_config_flags(p_eval, with_padding=False)
    p_eval.set_defaults(handler=cmd_evaluate)

    p_ck = sub.add_parser("compress-kernel", help="Factor a 4-D convolution kernel")
    p_ck.add_argument("--input", required=True)
    p_ck.add_argument("--output", required=True, help="Bundle index path (.json)")
    p_ck.add_argument("--method", choices=["tucker2", "tt"], default="tucker2")
    p_ck.add_argument("--rank-p", type=int, default=None)
    p_ck.add_argument("--rank-q", type=int, default=None)
    p_ck.add_argument("--ranks", default=None, help="TT ranks R1,R2,R3")
    p_ck.add_argument("--energy", type=float, default=None)
    p_ck.set_defaults(handler=cmd_compress_kernel)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        settings = load_settings()
    except TensorDenoiseError as e:
        print(f"tensordenoise: {e}", file=sys.stderr)
        return e.exit_code

    args = build_parser(settings).parse_args(argv)
    configure_logging(args.log_level, args.log_dir)
    attach_context(run_id=args.cmd)
    try:
        return int(args.handler(args, settings))
    except TensorDenoiseError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception:  # noqa: BLE001
        logger.exception("unexpected failure in %s", args.cmd)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
