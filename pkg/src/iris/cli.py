"""Command-line entry points: gen-data, train, eval, simulate, serve.

Configuration precedence is flags > JSON config file > built-in defaults.
Every run writes a manifest JSON describing the command, its configuration,
seeds, and the artifacts produced. Exit codes: 0 ok, 1 config error,
2 runtime error; errors print a single line to stderr.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from dataclasses import replace

import click
import numpy as np

from . import distfield, figures, nn, train as train_mod
from .env import ActionSpec, EpisodeConfig, init_episode
from .interaction import RobotConfig
from .reward import RewardConfig
from .supervoxel import SlicConfig
from .volume import (
    Mask,
    SynthSpec,
    Volume,
    generate_synthetic,
    load_mask,
    load_volume,
    normalize,
    save_mask,
    save_volume,
)


class ConfigError(click.ClickException):
    exit_code = 1


def _write_manifest(outdir, command, config, artifacts):
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "artifacts": sorted(artifacts),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _parse_dims(text):
    try:
        dims = tuple(int(d) for d in text.split(","))
    except ValueError:
        raise ConfigError(f"bad dims {text!r}, expected d,h,w of positive ints")
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ConfigError(f"bad dims {text!r}, expected d,h,w of positive ints")
    return dims


def _distance_kind(name, sigma, regularizer):
    if name == "geodesic":
        return distfield.Geodesic(regularizer)
    if name == "euclidean":
        return distfield.Euclidean()
    if name == "gaussian":
        return distfield.Gaussian(sigma)
    raise ConfigError(f"unknown distance kind {name!r}")


def _load_dataset(data_dir):
    index_path = os.path.join(data_dir, "index.json")
    if not os.path.exists(index_path):
        raise ConfigError(f"no index.json under {data_dir}")
    with open(index_path) as fh:
        index = json.load(fh)
    samples = []
    for item in index["items"]:
        v = load_volume(os.path.join(data_dir, item["volume"]))
        m = load_mask(os.path.join(data_dir, item["mask"]))
        samples.append(train_mod.Sample(normalize(v), m))
    return samples


def _episode_config(t, n_clicks, gamma, lam, action_set, distance, sigma, regularizer,
                    noise, clicking, region_policy, no_interaction=False):
    try:
        actions = ActionSpec.from_magnitudes(
            float(m) for m in str(action_set).split(",")
        )
    except ValueError:
        raise ConfigError(f"bad action set {action_set!r}, expected comma-separated floats")
    return EpisodeConfig(
        T=t,
        actions=actions,
        reward=RewardConfig(lambda_boundary=lam, gamma=gamma),
        robot=RobotConfig(clicks_per_iteration=n_clicks, noise_range=noise),
        distance=_distance_kind(distance, sigma, regularizer),
        slic=SlicConfig(),
        click_expansion=clicking,
        region_policy=region_policy,
        no_interaction=no_interaction,
    )


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON file with default option values per subcommand.")
@click.pass_context
def cli(ctx, config):
    if config:
        with open(config) as fh:
            try:
                ctx.default_map = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config file: {exc}")


@cli.command("gen-data")
@click.option("--count", type=int, required=True)
@click.option("--dims", default="1,64,64", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--contrast", type=float, default=1.0, show_default=True)
@click.option("--noise", type=float, default=0.15, show_default=True)
@click.option("--out", "outdir", default=None, help="defaults to $IRIS_DATA_DIR")
def cmd_gen_data(count, dims, seed, contrast, noise, outdir):
    """Write synthetic (volume, mask) IVOL pairs plus an index."""
    outdir = outdir or os.environ.get("IRIS_DATA_DIR")
    if not outdir:
        raise ConfigError("--out or IRIS_DATA_DIR required")
    if count < 0:
        raise ConfigError("--count must be >= 0")
    dims_t = _parse_dims(dims)
    os.makedirs(outdir, exist_ok=True)
    items = []
    for i in range(count):
        spec = SynthSpec(seed=seed + i, dims=dims_t, contrast=contrast, noise_sd=noise)
        v, m = generate_synthetic(spec)
        vname, mname = f"vol_{i:04d}.ivol", f"msk_{i:04d}.ivol"
        save_volume(v, os.path.join(outdir, vname))
        save_mask(m, os.path.join(outdir, mname))
        items.append({"volume": vname, "mask": mname, "seed": seed + i})
    index = {"count": count, "dims": list(dims_t), "seed": seed,
             "contrast": contrast, "noise": noise, "items": items}
    with open(os.path.join(outdir, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
    artifacts = [os.path.join(outdir, "index.json")] + [
        os.path.join(outdir, it[k]) for it in items for k in ("volume", "mask")
    ]
    _write_manifest(outdir, "gen-data",
                    {"count": count, "dims": list(dims_t), "seed": seed,
                     "contrast": contrast, "noise": noise}, artifacts)
    click.echo(f"wrote {count} pairs to {outdir}")


_COMMON = [
    click.option("--iterations", "-T", "t", type=int, default=4, show_default=True),
    click.option("--clicks", "n_clicks", type=int, default=6, show_default=True),
    click.option("--gamma", type=float, default=0.95, show_default=True),
    click.option("--lam", type=float, default=0.5, show_default=True,
                 help="boundary reward weight"),
    click.option("--action-set", default="0.1,0.2,0.4", show_default=True,
                 help="positive magnitudes; signed pairs are generated"),
    click.option("--distance", type=click.Choice(["geodesic", "euclidean", "gaussian"]),
                 default="geodesic", show_default=True),
    click.option("--sigma", type=float, default=10.0, show_default=True,
                 help="gaussian map falloff"),
    click.option("--regularizer", type=float, default=0.01, show_default=True,
                 help="geodesic spatial regularizer"),
    click.option("--noise", type=int, default=0, show_default=True,
                 help="robot click perturbation half-width"),
    click.option("--clicking", type=click.Choice(["supervoxel", "point"]),
                 default="supervoxel", show_default=True),
    click.option("--region-policy", default="decline", show_default=True,
                 help="decline | fixed:N | point"),
]


def _common_options(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


@cli.command("train")
@_common_options
@click.option("--data", "data_dir", default=None, help="dataset dir; defaults to $IRIS_DATA_DIR")
@click.option("--channels", "-C", type=int, default=16, show_default=True)
@click.option("--workers", type=int, default=4, show_default=True)
@click.option("--warmup-updates", type=int, default=300, show_default=True)
@click.option("--interactive-updates", type=int, default=4200, show_default=True)
@click.option("--learning-rate", type=float, default=1e-4, show_default=True)
@click.option("--entropy-coef", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "outdir", required=True)
def cmd_train(t, n_clicks, gamma, lam, action_set, distance, sigma, regularizer, noise,
              clicking, region_policy, data_dir, channels, workers, warmup_updates,
              interactive_updates, learning_rate, entropy_coef, seed, outdir):
    """Warm-up then interactive A3C training; writes checkpoint + JSONL log."""
    data_dir = data_dir or os.environ.get("IRIS_DATA_DIR")
    if not data_dir:
        raise ConfigError("--data or IRIS_DATA_DIR required")
    episode = _episode_config(t, n_clicks, gamma, lam, action_set, distance, sigma,
                              regularizer, noise, clicking, region_policy)
    cfg = train_mod.TrainConfig(
        episode=episode, channels=channels, workers=workers,
        warmup_updates=warmup_updates, interactive_updates=interactive_updates,
        learning_rate=learning_rate, entropy_coef=entropy_coef, seed=seed,
    )
    dataset = _load_dataset(data_dir)
    os.makedirs(outdir, exist_ok=True)
    log_path = os.path.join(outdir, "train_log.jsonl")
    params, _ = train_mod.train(cfg, dataset, log_path=log_path)
    ckpt = os.path.join(outdir, "checkpoint.ckpt")
    nn.save_checkpoint(params, ckpt, step=warmup_updates + interactive_updates, seed=seed)
    config = {
        "T": t, "clicks": n_clicks, "gamma": gamma, "lambda": lam,
        "action_set": action_set, "distance": distance, "noise": noise,
        "clicking": clicking, "region_policy": region_policy, "channels": channels,
        "workers": workers, "warmup_updates": warmup_updates,
        "interactive_updates": interactive_updates, "learning_rate": learning_rate,
        "seed": seed, "data": data_dir,
    }
    _write_manifest(outdir, "train", config, [ckpt, log_path])
    click.echo(f"checkpoint: {ckpt}")


@cli.command("eval")
@_common_options
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "data_dir", default=None)
@click.option("--no-interaction", is_flag=True, default=False)
@click.option("--random-clicks", is_flag=True, default=False)
@click.option("--dsc-threshold", type=float, default=0.85, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "outdir", required=True)
def cmd_eval(t, n_clicks, gamma, lam, action_set, distance, sigma, regularizer, noise,
             clicking, region_policy, checkpoint, data_dir, no_interaction,
             random_clicks, dsc_threshold, seed, outdir):
    """Greedy evaluation; writes JSON + CSV tables and metric figures."""
    data_dir = data_dir or os.environ.get("IRIS_DATA_DIR")
    if not data_dir:
        raise ConfigError("--data or IRIS_DATA_DIR required")
    if not os.path.exists(checkpoint):
        raise ConfigError(f"missing checkpoint {checkpoint}")
    params, _ = nn.load_checkpoint(checkpoint)
    episode = _episode_config(t, n_clicks, gamma, lam, action_set, distance, sigma,
                              regularizer, noise, clicking, region_policy,
                              no_interaction=no_interaction)
    clicks = "none" if no_interaction else ("random" if random_clicks else "robot")
    protocol = train_mod.EvalProtocol(
        episode=episode, clicks=clicks, dsc_threshold=dsc_threshold, seed=seed
    )
    dataset = _load_dataset(data_dir)
    report = train_mod.evaluate(params, dataset, protocol)

    os.makedirs(outdir, exist_ok=True)
    json_path = os.path.join(outdir, "metrics.json")
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    csv_path = os.path.join(outdir, "metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=sorted(report["per_iteration"][0].keys()))
        writer.writeheader()
        writer.writerows(report["per_iteration"])
    figure_paths = figures.render_eval_figures(report, outdir)
    _write_manifest(outdir, "eval", {
        "checkpoint": checkpoint, "data": data_dir, "T": t, "clicks": n_clicks,
        "noise": noise, "clicking": clicking, "distance": distance,
        "no_interaction": no_interaction, "random_clicks": random_clicks,
        "dsc_threshold": dsc_threshold, "seed": seed,
    }, [json_path, csv_path, *figure_paths])

    for row in report["per_iteration"]:
        parts = [f"iter {row['iteration']}"]
        for key in ("dsc", "assd", "hd95"):
            mean = row[f"{key}_mean"]
            std = row[f"{key}_std"]
            parts.append(
                f"{key} n/a" if mean is None else f"{key} {mean:.4f}±{std:.4f}"
            )
        click.echo("  ".join(parts))
    ctt = report["clicks_to_threshold_mean"]
    click.echo(
        f"clicks to DSC>{dsc_threshold}: "
        + ("not reached" if ctt is None else f"{ctt:.1f} "
           f"({report['threshold_reached_fraction']:.0%} of cases)")
    )


@cli.command("simulate")
@_common_options
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--volume", "volume_path", required=True, type=click.Path())
@click.option("--mask", "mask_path", default=None, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--full/--compact", default=True, show_default=True,
              help="include per-voxel arrays in the trace")
@click.option("--out", "outdir", required=True)
def cmd_simulate(t, n_clicks, gamma, lam, action_set, distance, sigma, regularizer,
                 noise, clicking, region_policy, checkpoint, volume_path, mask_path,
                 seed, full, outdir):
    """Run one greedy episode and dump the per-iteration trace as JSONL."""
    if not os.path.exists(checkpoint):
        raise ConfigError(f"missing checkpoint {checkpoint}")
    params, _ = nn.load_checkpoint(checkpoint)
    v = normalize(load_volume(volume_path))
    gt = load_mask(mask_path) if mask_path else None
    episode = _episode_config(t, n_clicks, gamma, lam, action_set, distance, sigma,
                              regularizer, noise, clicking, region_policy)
    rng = np.random.default_rng(seed)
    env = init_episode(v, gt, episode, rng=rng, record_arrays=full)
    while not env.done:
        state = env.interact("robot" if gt is not None else [])
        policy, _, _ = nn.forward(params, state)
        env.step(policy.argmax(axis=0))
    os.makedirs(outdir, exist_ok=True)
    trace_path = os.path.join(outdir, "trace.jsonl")
    with open(trace_path, "w") as fh:
        for rec in env.trace_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_manifest(outdir, "simulate", {
        "checkpoint": checkpoint, "volume": volume_path, "mask": mask_path,
        "seed": seed, "T": t, "full": full,
    }, [trace_path])
    click.echo(trace_path)


@cli.command("serve")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@_common_options
def cmd_serve(checkpoint, host, port, t, n_clicks, gamma, lam, action_set, distance,
              sigma, regularizer, noise, clicking, region_policy):
    """Serve the session-based refinement HTTP API."""
    if not os.path.exists(checkpoint):
        raise ConfigError(f"missing checkpoint {checkpoint}")
    import uvicorn

    from .service import create_app

    episode = _episode_config(t, n_clicks, gamma, lam, action_set, distance, sigma,
                              regularizer, noise, clicking, region_policy)
    app = create_app(checkpoint, episode)
    uvicorn.run(app, host=host, port=port)


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        print(f"error: {exc.format_message()}", file=sys.stderr)
        sys.exit(exc.exit_code if isinstance(exc, ConfigError) else 1)
    except click.Abort:
        print("error: aborted", file=sys.stderr)
        sys.exit(1)
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
