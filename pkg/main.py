"""
stoch-ns2d
Command-line entry point: runs one experiment of the stochastic 2D
Navier-Stokes simulator, or replays a finished run from its manifest
"""

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables from .env file before config reads them
load_dotenv()
import config
from exceptions import ConfigError, StochNSError
from experiments import create_experiment
from run_config import EXPERIMENTS, RunConfig
from run_manifest import RunManifest, write_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(out_dir: Optional[Path] = None):
    """Console logging, plus the run log file once the output directory is known."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(out_dir / config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="stoch-ns2d", description=__doc__)
    parser.add_argument("command", choices=EXPERIMENTS + ("replay",),
                        help="experiment to run, or 'replay' to re-execute a manifest")
    parser.add_argument("manifest", nargs="?", type=Path,
                        help="manifest file or run directory (replay only)")
    parser.add_argument("--config", type=Path, default=None, help="INI run configuration")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides [mc] seed)")
    parser.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: $STOCH_NS2D_OUT or '{config.OUTPUT_ROOT}')")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for trajectory ensembles")
    return parser.parse_args(argv)


def write_error(out_dir: Path, error: BaseException, exit_code: int) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    details = error.details() if isinstance(error, StochNSError) else {}
    return write_json({
        "exit_code": exit_code,
        "error_type": type(error).__name__,
        "message": str(error),
        "details": details,
    }, out_dir / config.ERROR_FILE)


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(seed=args.seed, out=str(args.out) if args.out else None, threads=args.threads)
    return dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, name=args.command))


def run(cfg: RunConfig) -> RunManifest:
    """Execute the configured experiment and record every artifact in the manifest."""
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(out_dir)
    manifest.start(cfg.experiment.name, cfg.to_ini(), cfg.digest(), cfg.mc.seed, cfg.mc.threads)
    logger.info(f"Starting experiment '{cfg.experiment.name}' (seed {cfg.mc.seed}, "
                f"{cfg.mc.threads} threads) in {out_dir}")
    started = time.perf_counter()
    experiment = create_experiment(cfg, out_dir)
    try:
        artifacts = experiment.run()
    except Exception:
        manifest.register_all(experiment.artifacts)
        manifest.complete(status="failed")
        raise
    manifest.register_all(artifacts)
    manifest.complete()
    logger.info(f"Experiment '{cfg.experiment.name}' finished in {time.perf_counter() - started:.1f}s, "
                f"{len(artifacts)} artifacts")
    return manifest


def replay(manifest_path: Path, out: Optional[Path] = None, threads: Optional[int] = None) -> RunManifest:
    """Re-run a recorded experiment and compare artifact digests (ReplayMismatch on divergence)."""
    original = RunManifest.load(manifest_path)
    cfg = RunConfig.from_ini(original.data["config"])
    out_dir = out or original.out_dir / "replay"
    cfg = cfg.with_overrides(seed=int(original.data["seed"]), out=str(out_dir), threads=threads)
    setup_logging(out_dir)
    logger.info(f"Replaying {original.path} into {out_dir}")
    fresh = run(cfg)
    original.compare(fresh)
    return fresh


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    args = parse_args(argv)
    setup_logging()
    fallback_dir = Path(args.out or config.OUTPUT_ROOT)
    try:
        if args.command == "replay":
            if args.manifest is None:
                raise ConfigError("replay needs a manifest path", key="manifest")
            replay(args.manifest, args.out, args.threads)
            return 0
        cfg = load_config(args)
        fallback_dir = cfg.output_dir()
        setup_logging(fallback_dir)
        run(cfg)
        return 0
    except StochNSError as e:
        logger.error(f"{type(e).__name__}: {e}")
        write_error(fallback_dir, e, e.exit_code)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        write_error(fallback_dir, e, 1)
        return 1


if __name__ == "__main__":
    sys.exit(main())
