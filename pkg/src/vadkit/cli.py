"""Command line front end.

Subcommands:
  run         full pipeline over one video, writing a manifest
  eval        metrics from a manifest directory plus ground truth
  synth       generate a synthetic scenario (world file, frames, GT)
  compare     grid pipeline vs uniform single-frame sampling
  ablate-scc  sweep (samplings, support threshold) arms over seeds

Videos come either from a directory of per-frame images or from a
synthetic world file; backends are either the simulated ones (world
file required) or HTTP endpoints.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import manifest as manifest_io
from .frames import ImageDirProvider
from .harness import (
    Backends,
    RunConfig,
    ablate_scc,
    compare_paradigms,
    run_gridvad,
    run_uniform,
    simulated_backends,
)
from .localization import HttpGroundingBackend, HttpPropagationBackend
from .metrics import compute_report, frame_scores
from .proposer import HttpChatBackend, ProposerConfig
from .synth import (
    NoiseProfile,
    WorldFrameProvider,
    ground_truth,
    load_world,
    random_world,
    render,
    save_world,
)
from .types import VideoMeta

log = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(config_path: str | None, overrides: dict) -> RunConfig:
    base = json.loads(Path(config_path).read_text()) if config_path else {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**base)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad configuration: {exc}") from exc


def _video_and_backends(world_path, frames_dir, video_id, endpoints, cfg, noise, salience):
    """Resolve the video source and backend set from CLI options."""
    if world_path:
        world = load_world(world_path)
        video = VideoMeta(world.id, world.frame_count, world.height, world.width)
        provider = WorldFrameProvider(world)
        backends = simulated_backends(world, noise, seed=cfg.seed, salience=salience)
        gt = ground_truth(world)
        return video, provider, backends, gt
    if not frames_dir:
        raise click.ClickException("either --world or --frames is required")
    if not endpoints.get("proposer"):
        raise click.ClickException("--frames input needs --proposer-url (plus grounding/propagation URLs)")
    provider = ImageDirProvider(frames_dir)
    first = provider.get_frame(video_id, 0)
    count = len(list((Path(frames_dir) / video_id).glob("*.png")))
    video = VideoMeta(video_id, count, first.shape[0], first.shape[1])
    proposer = HttpChatBackend(
        ProposerConfig(backend="http-chat", endpoint_url=endpoints["proposer"])
    )
    backends = Backends(
        proposer=proposer,
        grounder=HttpGroundingBackend(endpoints.get("grounding", "")),
        propagator=HttpPropagationBackend(endpoints.get("propagation", "")),
        text=proposer,
    )
    return video, provider, backends, None


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Training-free video anomaly detection pipeline."""
    _setup_logging(verbose)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="RunConfig JSON file.")
@click.option("--world", "world_path", type=click.Path(exists=True), help="Synthetic world file (uses simulated backends).")
@click.option("--frames", "frames_dir", type=click.Path(exists=True), help="Directory of per-frame images.")
@click.option("--video-id", default="video", show_default=True)
@click.option("--proposer-url", default=None)
@click.option("--grounding-url", default=None)
@click.option("--propagation-url", default=None)
@click.option("--samplings", type=int, default=None, help="Grid samplings per clip (M).")
@click.option("--tau", type=int, default=None, help="Minimum support to keep a proposal.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def run(config_path, world_path, frames_dir, video_id, proposer_url, grounding_url,
        propagation_url, samplings, tau, seed, out_dir):
    """Run the pipeline over one video and write a manifest."""
    cfg = _load_config(config_path, {"samplings": samplings, "tau": tau, "seed": seed,
                                     "output_dir": out_dir})
    endpoints = {"proposer": proposer_url, "grounding": grounding_url,
                 "propagation": propagation_url}
    video, provider, backends, gt = _video_and_backends(
        world_path, frames_dir, video_id, endpoints, cfg, NoiseProfile(), 0.5
    )
    instances, ledger, report = run_gridvad(video, provider, cfg, backends, gt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_io.write_manifest(instances, video, out)
    cfg.to_file(out / "config.json")
    (out / "ledger.json").write_text(json.dumps(ledger.snapshot(), indent=2))
    if report is not None:
        report.save(out / "report.json")
    click.echo(f"{len(instances)} instances; calls: {ledger.snapshot()}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@main.command("eval")
@click.option("--manifest", "manifest_dirs", type=click.Path(exists=True), multiple=True,
              required=True, help="Manifest directory; repeat for a test set.")
@click.option("--gt", "gt_dirs", type=click.Path(exists=True), multiple=True, required=True,
              help="Ground-truth directory, one per manifest, same order.")
@click.option("--alpha", type=float, default=0.1, show_default=True, help="Region-match IoU.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Report JSON path.")
def eval_cmd(manifest_dirs, gt_dirs, alpha, out_path):
    """Compute the seven-metric report from saved manifests."""
    if len(manifest_dirs) != len(gt_dirs):
        raise click.ClickException("need exactly one --gt per --manifest")
    videos, instance_sets, gts = [], [], []
    for mdir, gdir in zip(manifest_dirs, gt_dirs):
        try:
            video, instances = manifest_io.read_manifest(mdir)
        except manifest_io.ManifestError as exc:
            raise click.ClickException(str(exc)) from exc
        videos.append(video)
        instance_sets.append(instances)
        gts.append(manifest_io.read_ground_truth(gdir))
    report = compute_report(instance_sets, videos, gts, alpha=alpha)
    text = json.dumps(report.to_dict(), indent=2)
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--frame-count", type=int, default=200, show_default=True)
@click.option("--size", type=int, default=128, show_default=True, help="Frame height and width.")
@click.option("--consistent", type=int, default=2, show_default=True,
              help="Anomalies with one stable description.")
@click.option("--inconsistent", type=int, default=0, show_default=True,
              help="Anomalies described differently across samplings.")
@click.option("--anomaly-length", type=int, default=60, show_default=True)
@click.option("--dump-frames", is_flag=True, help="Also write rendered frame images.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth(seed, frame_count, size, consistent, inconsistent, anomaly_length, dump_frames, out_dir):
    """Generate a synthetic scenario with exact ground truth."""
    world = random_world(
        seed,
        frame_count=frame_count,
        height=size,
        width=size,
        n_consistent=consistent,
        n_inconsistent=inconsistent,
        anomaly_length=anomaly_length,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_world(world, out / "world.json")
    manifest_io.write_ground_truth(ground_truth(world), out / "gt")
    if dump_frames:
        from PIL import Image

        frames_dir = out / "frames" / world.id
        frames_dir.mkdir(parents=True, exist_ok=True)
        for t in range(world.frame_count):
            Image.fromarray(render(world, t)[0]).save(frames_dir / f"{t:06d}.png")
    click.echo(f"world {world.id}: {len(world.anomalies)} anomalies over {frame_count} frames -> {out}")


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


@main.command()
@click.option("--world", "world_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--miss-rate", type=float, default=0.0, show_default=True)
@click.option("--halluc-rate", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def compare(world_path, config_path, miss_rate, halluc_rate, seed, out_path):
    """Grid pipeline vs uniform sampling on one synthetic world."""
    cfg = _load_config(config_path, {"seed": seed})
    world = load_world(world_path)
    video = VideoMeta(world.id, world.frame_count, world.height, world.width)
    noise = NoiseProfile(miss_rate=miss_rate, halluc_rate=halluc_rate)
    backends = simulated_backends(world, noise, seed=cfg.seed)
    table = compare_paradigms(video, WorldFrameProvider(world), cfg, backends, ground_truth(world))
    text = json.dumps(table, indent=2)
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)


# ---------------------------------------------------------------------------
# ablate-scc
# ---------------------------------------------------------------------------


@main.command("ablate-scc")
@click.option("--seeds", type=int, default=10, show_default=True, help="Number of seeded worlds.")
@click.option("--arm", "arms", multiple=True, default=("1:1", "5:3"), show_default=True,
              help="samplings:tau, repeatable.")
@click.option("--miss-rate", type=float, default=0.2, show_default=True)
@click.option("--halluc-rate", type=float, default=0.3, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def ablate_scc_cmd(seeds, arms, miss_rate, halluc_rate, config_path, out_path):
    """Mean metrics per (samplings, tau) arm over noisy synthetic worlds."""
    cfg = _load_config(config_path, {})
    try:
        parsed_arms = [tuple(int(x) for x in arm.split(":")) for arm in arms]
        if any(len(a) != 2 for a in parsed_arms):
            raise ValueError
    except ValueError:
        raise click.ClickException("arms must look like M:tau, e.g. 5:3")
    noise = NoiseProfile(miss_rate=miss_rate, halluc_rate=halluc_rate)
    rows = ablate_scc(
        list(range(seeds)),
        parsed_arms,
        lambda s: random_world(s, n_consistent=2, n_inconsistent=3),
        noise,
        cfg,
    )
    text = json.dumps(rows, indent=2)
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)


if __name__ == "__main__":
    main()
