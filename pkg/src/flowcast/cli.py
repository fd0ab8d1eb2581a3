"""End-to-end pipeline driver.

Subcommands: ``simulate``, ``train``, ``forecast``, ``metrics``, ``basin``.
Every command reads an optional JSON config (``--config``) whose keys the
flags mirror and override one-to-one.

Exit codes: 0 success; 1 runtime or numerical failure (divergence, underflow,
mismatched data files, I/O); 2 usage or configuration error (bad flags,
invalid parameter values, malformed config).
"""

from __future__ import annotations

import functools
import json
import math
import time

import click
import numpy as np

from . import basin as basin_mod
from . import dynamics, io, nvar
from . import metrics as metrics_mod
from .config import ENGINE_NAMES, IC_NAMES, ExperimentConfig
from .errors import FlowcastError, NonFiniteState, StepSizeUnderflow
from .metrics import AttractorLabel


def _pipeline_errors(fn):
    """Map domain errors to exit 1 and validation errors to exit 2."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except FlowcastError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        except OSError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _load_config(config_path, **overrides) -> ExperimentConfig:
    base = ExperimentConfig.from_file(config_path) if config_path else ExperimentConfig()
    return base.replace(**overrides)


def _parse_ic(cfg: ExperimentConfig, text: str) -> np.ndarray:
    if text in IC_NAMES:
        return cfg.ic(text)
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(
            f"--ic must be one of {IC_NAMES} or four comma-separated reals, got {text!r}"
        )
    return np.array([float(p) for p in parts], dtype=np.float64)


def _system_options(fn):
    for decorator in (
        click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON config file; flags override its keys."),
        click.option("--a", type=float, default=None, help="System parameter a."),
        click.option("--b", type=float, default=None, help="System parameter b."),
        click.option("--dt", type=float, default=None, help="Sampling interval."),
        click.option("--abs-tol", "abs_tol", type=float, default=None,
                     help="Integrator absolute error tolerance."),
    ):
        fn = decorator(fn)
    return fn


@click.group()
def main():
    """Learn the flow of the Li-Sprott system with an NVAR model; forecast its
    coexisting attractors and map their basins."""


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


@main.command()
@_system_options
@click.option("--ic", default="torus", show_default=True,
              help=f"Named IC ({', '.join(IC_NAMES)}) or 'x,y,z,u'.")
@click.option("--t-span", "t_span", type=float, default=None,
              help="Integration time; defaults to t_train.")
@click.option("--t0", type=float, default=0.0, show_default=True,
              help="Time of the first sample.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output trajectory CSV.")
@_pipeline_errors
def simulate(config_path, a, b, dt, abs_tol, ic, t_span, t0, out):
    """Integrate the ground-truth system and write a trajectory CSV."""
    cfg = _load_config(config_path, a=a, b=b, dt=dt, abs_tol=abs_tol)
    ic_vec = _parse_ic(cfg, ic)
    span = cfg.t_train if t_span is None else t_span
    traj = dynamics.integrate(ic_vec, cfg.system_params(), span, cfg.dt,
                              cfg.abs_tol, t0=t0)
    io.write_trajectory_csv(traj, out)
    click.echo(f"wrote {len(traj)} samples ({span:g} time units, dt={cfg.dt:g}) to {out}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def search_alpha(traj, cfg: ExperimentConfig):
    """Grid-search the ridge parameter on a held-out continuation.

    The trajectory is split at t_train (or at 3/4 of its length if it is not
    longer than t_train); per candidate alpha a model is trained on the prefix
    and scored by closed-loop NRMSE over the continuation.  Returns the
    winning model (trained on the prefix only), the prefix, and the per-alpha
    score table.
    """
    n = len(traj)
    n_train = int(round(cfg.t_train / cfg.dt)) + 1
    if n_train >= n:
        n_train = max(cfg.k + 2, (3 * n) // 4)
    if n - n_train < 2:
        raise ValueError(
            "alpha search needs a continuation beyond t_train; "
            f"trajectory has {n} samples, training prefix {n_train}"
        )
    prefix = dynamics.Trajectory(dt=traj.dt, samples=traj.samples[:n_train], t0=traj.t0)
    rest = dynamics.Trajectory(dt=traj.dt, samples=traj.samples[n_train:],
                               t0=traj.t0 + traj.dt * n_train)
    warm = prefix.samples[-cfg.k:]
    table = []
    best = None
    best_score = math.inf
    for alpha in cfg.alpha_candidates():
        model = nvar.train(prefix, cfg.nvar_config(alpha=float(alpha)))
        try:
            fc = nvar.forecast(model, warm, len(rest), t0=rest.t0)
            score = nvar.nrmse(fc, rest)
        except (NonFiniteState, StepSizeUnderflow):
            score = math.inf
        table.append({"alpha": float(alpha),
                      "continuation_nrmse": None if math.isinf(score) else score})
        if score < best_score:
            best_score = score
            best = model
    if best is None:
        raise FlowcastError("every candidate alpha diverged on the continuation")
    return best, prefix, table


@main.command()
@_system_options
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Training trajectory CSV.")
@click.option("--k", type=int, default=None, help="Delay taps.")
@click.option("--alpha", type=float, default=None, help="Ridge parameter.")
@click.option("--constant-term", "constant_term", type=float, default=None,
              help="Value of the constant feature c.")
@click.option("--t-train", "t_train", type=float, default=None,
              help="Training-prefix length used by --alpha-search.")
@click.option("--alpha-search", "alpha_search", is_flag=True,
              help="Grid-search alpha (1e-9..1e-1, 5 points/decade) on a "
                   "held-out continuation instead of using --alpha.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output model JSON.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Training report JSON (default: <out>.report.json).")
@_pipeline_errors
def train(config_path, a, b, dt, abs_tol, data, k, alpha, constant_term,
          t_train, alpha_search, out, report_path):
    """Train an NVAR model on a trajectory CSV."""
    cfg = _load_config(config_path, a=a, b=b, dt=dt, abs_tol=abs_tol, k=k,
                       alpha=alpha, constant_term=constant_term, t_train=t_train)
    traj = io.read_trajectory_csv(data, dt=cfg.dt)
    started = time.perf_counter()
    if alpha_search:
        model, fit_traj, table = search_alpha(traj, cfg)
    else:
        model = nvar.train(traj, cfg.nvar_config())
        fit_traj, table = traj, None
    wall = time.perf_counter() - started
    training_nrmse = nvar.one_step_nrmse(model, fit_traj)
    nvar.save_model(model, out)
    report = {
        "d": model.config.d,
        "k": model.config.k,
        "alpha": model.config.alpha,
        "feature_dim": model.config.feature_dim,
        "n_weights": model.n_weights,
        "n_samples": len(fit_traj),
        "n_training_pairs": len(fit_traj) - model.config.k,
        "training_nrmse": training_nrmse,
        "wall_time_s": wall,
        "alpha_search": table,
    }
    report_file = report_path or (str(out) + ".report.json")
    with open(report_file, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    click.echo(f"feature_dim {model.config.feature_dim}, weights {model.n_weights}")
    click.echo(f"alpha {model.config.alpha:g}"
               + (" (grid-searched)" if alpha_search else ""))
    click.echo(f"training NRMSE {training_nrmse:.3e}")
    click.echo(f"wrote {out} and {report_file}")


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------


def _slice_trajectory(traj, start: int):
    return dynamics.Trajectory(dt=traj.dt, samples=traj.samples[start:],
                               t0=traj.t0 + traj.dt * start)


@main.command()
@_system_options
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Model JSON.")
@click.option("--warmup", type=click.Choice(["tail", "oracle", "bootstrap"]),
              default="tail", show_default=True,
              help="Warm-up source: tail of --data, ground-truth integration "
                   "from --ic, or the bootstrap model ladder from --ic.")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Training trajectory CSV (tail warm-up).")
@click.option("--ic", default=None, help="IC name or 'x,y,z,u' (oracle/bootstrap).")
@click.option("--ladder", "ladder_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Lower-k model JSONs (bootstrap warm-up; repeatable).")
@click.option("--steps", type=int, default=None,
              help="Forecast steps; defaults to t_test/dt.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Forecast trajectory CSV.")
@click.option("--truth-out", "truth_out", type=click.Path(dir_okay=False), default=None,
              help="Also write the matching ground-truth CSV.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Forecast report JSON (default: <out>.report.json).")
@_pipeline_errors
def forecast(config_path, a, b, dt, abs_tol, model_path, warmup, data, ic,
             ladder_paths, steps, out, truth_out, report_path):
    """Run a trained model closed-loop and compare against ground truth."""
    cfg = _load_config(config_path, a=a, b=b, dt=dt, abs_tol=abs_tol)
    model = nvar.load_model(model_path)
    mdt = model.config.dt
    kk = model.config.k
    params = cfg.system_params()
    n_steps = steps if steps is not None else int(round(cfg.t_test / mdt))
    if n_steps < 1:
        raise ValueError(f"steps must be positive, got {n_steps}")

    if warmup == "tail":
        if data is None:
            raise click.UsageError("--warmup tail requires --data")
        hist = io.read_trajectory_csv(data, dt=mdt)
        if len(hist) < kk:
            raise ValueError(f"--data holds {len(hist)} samples, need at least k={kk}")
        warm = hist.samples[-kk:]
        t0_fc = hist.t_final + mdt
        truth_run = dynamics.integrate(hist.samples[-1], params, n_steps * mdt,
                                       mdt, cfg.abs_tol, t0=hist.t_final)
        truth = _slice_trajectory(truth_run, 1)
    else:
        if ic is None:
            raise click.UsageError(f"--warmup {warmup} requires --ic")
        ic_vec = _parse_ic(cfg, ic)
        if warmup == "oracle":
            if kk == 1:
                warm = ic_vec.reshape(1, 4)
            else:
                warm_run = dynamics.integrate(ic_vec, params, (kk - 1) * mdt,
                                              mdt, cfg.abs_tol)
                warm = warm_run.samples
        else:
            models = [nvar.load_model(p) for p in ladder_paths] + [model]
            warm = nvar.bootstrap_warmup(models, ic_vec)
        t0_fc = kk * mdt
        truth_run = dynamics.integrate(ic_vec, params, (kk - 1 + n_steps) * mdt,
                                       mdt, cfg.abs_tol)
        truth = _slice_trajectory(truth_run, kk)

    fc = nvar.forecast(model, warm, n_steps, t0=t0_fc)
    io.write_trajectory_csv(fc, out)
    if truth_out:
        io.write_trajectory_csv(truth, truth_out)
    testing_nrmse = nvar.nrmse(fc, truth)
    vtime = metrics_mod.valid_time(fc, truth, cfg.valid_time_threshold)
    report = {
        "warmup": warmup,
        "steps": n_steps,
        "duration": n_steps * mdt,
        "nrmse": testing_nrmse,
        "valid_time": vtime,
        "valid_time_threshold": cfg.valid_time_threshold,
    }
    report_file = report_path or (str(out) + ".report.json")
    with open(report_file, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    click.echo(f"forecast {n_steps} steps ({n_steps * mdt:g} time units), "
               f"NRMSE {testing_nrmse:.3e}, valid time {vtime:g}")
    click.echo(f"wrote {out}" + (f" and {truth_out}" if truth_out else ""))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@main.command()
@click.option("--torus", nargs=2, type=click.Path(exists=True, dir_okay=False),
              default=None, help="FORECAST_CSV TRUTH_CSV for the torus.")
@click.option("--chaos-neg", "chaos_neg", nargs=2,
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="FORECAST_CSV TRUTH_CSV for the u<0 chaotic attractor.")
@click.option("--chaos-pos", "chaos_pos", nargs=2,
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="FORECAST_CSV TRUTH_CSV for the u>0 chaotic attractor.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Metrics report CSV.")
@_pipeline_errors
def metrics(torus, chaos_neg, chaos_pos, out):
    """Attractor-climate error metrics from forecast/truth trajectory pairs."""
    inputs = {
        AttractorLabel.TORUS: torus,
        AttractorLabel.CHAOS_NEG: chaos_neg,
        AttractorLabel.CHAOS_POS: chaos_pos,
    }
    pairs = {}
    att_values = {}
    for label, files in inputs.items():
        if not files:
            continue
        fc = io.read_trajectory_csv(files[0])
        truth = io.read_trajectory_csv(files[1])
        if len(fc) != len(truth):
            raise ValueError(
                f"{label.tag}: length mismatch {len(fc)} vs {len(truth)}"
            )
        if abs(fc.dt - truth.dt) > 1e-12:
            raise ValueError(f"{label.tag}: dt mismatch {fc.dt} vs {truth.dt}")
        deltas = metrics_mod.delta_pair(metrics_mod.attractor_stats(fc),
                                        metrics_mod.attractor_stats(truth))
        pairs[label] = deltas
        att_values[label] = metrics_mod.delta_att(deltas)
    if not pairs:
        raise click.UsageError("supply at least one of --torus/--chaos-neg/--chaos-pos")
    metrics_mod.write_metrics_csv(out, pairs)
    for label, value in att_values.items():
        click.echo(f"delta_att[{label.tag}] = {value:.3e}")
    if len(pairs) == len(inputs):
        total = metrics_mod.delta_tot(list(att_values.values()))
        click.echo(f"delta_tot = {total:.3e}")
    else:
        click.echo("delta_tot = incomplete (missing attractor pairs)")
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# basin
# ---------------------------------------------------------------------------


def _build_engine(cfg: ExperimentConfig, model_path, ladder_paths):
    name = cfg.basin_engine
    params = cfg.system_params()
    if name == "oracle":
        return basin_mod.OracleEngine(params=params, abs_tol=cfg.abs_tol), None
    if model_path is None:
        raise click.UsageError(f"engine {name!r} requires --model")
    model = nvar.load_model(model_path)
    model_hash = io.file_sha256(model_path)
    if name == "ngrc_oracle_warmup":
        return basin_mod.NvarOracleWarmupEngine(
            model=model, params=params, abs_tol=cfg.abs_tol), model_hash
    ladder = tuple(nvar.load_model(p) for p in ladder_paths) + (model,)
    return basin_mod.NvarBootstrapEngine(ladder=ladder), model_hash


@main.command()
@_system_options
@click.option("--engine", type=click.Choice(ENGINE_NAMES), default=None,
              help="Basin engine; defaults to the config's basin_engine.")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Model JSON (NVAR engines).")
@click.option("--ladder", "ladder_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Lower-k model JSONs (bootstrap engine; repeatable).")
@click.option("--region", "region_name", type=click.Choice(["primary", "companion"]),
              default=None, help="Configured region window.")
@click.option("--res", "resolution", nargs=2, type=int, default=None,
              help="Grid resolution N1 N2.")
@click.option("--horizon", type=float, default=None,
              help="Evolution time before classification.")
@click.option("--workers", type=int, default=None,
              help="Parallel workers (default: available cores).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Basin CSV (metadata sidecar written alongside).")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Oracle basin CSV to score agreement against.")
@click.option("--agree-out", "agree_out", type=click.Path(dir_okay=False), default=None,
              help="Agreement report JSON (default: <out>.agreement.json).")
@_pipeline_errors
def basin(config_path, a, b, dt, abs_tol, engine, model_path, ladder_paths,
          region_name, resolution, horizon, workers, out, truth_path, agree_out):
    """Compute a basin-of-attraction grid; optionally score it against truth."""
    cfg = _load_config(config_path, a=a, b=b, dt=dt, abs_tol=abs_tol,
                       basin_engine=engine, basin_region=region_name,
                       basin_horizon=horizon,
                       basin_resolution=tuple(resolution) if resolution else None)
    region = cfg.region()
    engine_obj, model_hash = _build_engine(cfg, model_path, ladder_paths)
    started = time.perf_counter()
    grid = basin_mod.compute_basin(region, engine_obj, horizon=cfg.basin_horizon,
                                   workers=workers)
    wall = time.perf_counter() - started
    basin_mod.write_basin_csv(grid, out, model_sha256=model_hash)
    counts = grid.label_counts()
    click.echo(f"engine {grid.engine}: " +
               ", ".join(f"{tag}={counts[tag]}" for tag in counts) +
               f", divergences={grid.divergence_count} ({wall:.1f}s)")
    click.echo(f"wrote {out} and {basin_mod.metadata_path(out)}")
    if truth_path:
        truth_grid = basin_mod.read_basin_csv(truth_path)
        report = basin_mod.agreement(truth_grid, grid)
        doc = {"per_label": report.per_label, "overall": report.overall,
               "truth_engine": truth_grid.engine, "model_engine": grid.engine}
        agree_file = agree_out or (str(out) + ".agreement.json")
        with open(agree_file, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        for tag, frac in report.per_label.items():
            shown = "n/a" if frac is None else f"{frac:.4f}"
            click.echo(f"agreement[{tag}] = {shown}")
        click.echo(f"agreement[overall] = {report.overall:.4f}")
        click.echo(f"wrote {agree_file}")


if __name__ == "__main__":
    main()
